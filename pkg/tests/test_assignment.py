import itertools

import numpy as np
import pytest

from oracles import assignment_bitmask_dp, assignment_brute_force
from toothbox.assignment import FORBIDDEN, assignment_cost, solve_assignment


def random_matrix(rng, max_dim=7):
    r, c = rng.integers(0, max_dim + 1, 2)
    m = rng.uniform(0, 10, (r, c))
    m[rng.random((r, c)) < rng.uniform(0, 0.6)] = FORBIDDEN
    return m


def check(m, pairs):
    rows = [r for r, _ in pairs]
    cols = [c for _, c in pairs]
    assert len(set(rows)) == len(rows) and len(set(cols)) == len(cols)
    assert all(np.isfinite(m[r, c]) for r, c in pairs)


def test_examples():
    assert solve_assignment([[5]]) == [(0, 0)]
    m = [[1, 2], [2, 1]]
    pairs = solve_assignment(m)
    assert pairs == [(0, 0), (1, 1)] and assignment_cost(m, pairs) == 2
    assert solve_assignment([[FORBIDDEN]]) == []
    assert solve_assignment(np.zeros((0, 3))) == []
    assert solve_assignment(np.zeros((3, 0))) == []


def test_cardinality_beats_cost():
    # the cheap pair (0, 0) blocks the only way to match both rows
    m = np.array([[0.0, 9.0], [1.0, FORBIDDEN]])
    assert solve_assignment(m) == [(0, 1), (1, 0)]


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        solve_assignment([[-1.0]])
    with pytest.raises(ValueError):
        solve_assignment([[np.nan]])
    with pytest.raises(ValueError):
        solve_assignment(np.zeros((2, 2, 2)))


def test_against_brute_force_small():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = random_matrix(rng, 4)
        pairs = solve_assignment(m)
        check(m, pairs)
        k, cost = assignment_brute_force(m)
        assert len(pairs) == k
        assert assignment_cost(m, pairs) == pytest.approx(cost, abs=1e-9)


def test_oracles_agree():
    rng = np.random.default_rng(1)
    for _ in range(100):
        m = random_matrix(rng, 4)
        k1, c1 = assignment_bitmask_dp(m)
        k2, c2 = assignment_brute_force(m)
        assert k1 == k2 and c1 == pytest.approx(c2)


def test_against_dp_rectangular():
    rng = np.random.default_rng(2)
    for _ in range(300):
        r, c = rng.integers(1, 8), rng.integers(1, 12)
        m = rng.uniform(0, 5, (r, c))
        m[rng.random((r, c)) < 0.3] = FORBIDDEN
        if rng.random() < 0.5:
            m = m.T
        pairs = solve_assignment(m)
        check(m, pairs)
        k, cost = assignment_bitmask_dp(m)
        assert len(pairs) == k
        assert assignment_cost(m, pairs) == pytest.approx(cost, abs=1e-9)


def test_permutation_equivariance_and_scale():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = random_matrix(rng, 6)
        if m.size == 0:
            continue
        base = assignment_cost(m, solve_assignment(m))
        pr, pc = rng.permutation(m.shape[0]), rng.permutation(m.shape[1])
        mp = m[pr][:, pc]
        assert assignment_cost(mp, solve_assignment(mp)) == pytest.approx(base)
        scaled = m * 3.7
        assert assignment_cost(scaled, solve_assignment(scaled)) / 3.7 == pytest.approx(base)


def test_square_exhaustive_permutations():
    rng = np.random.default_rng(4)
    for n in range(1, 6):
        m = rng.integers(0, 4, (n, n)).astype(float)
        best = min(sum(m[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        assert assignment_cost(m, solve_assignment(m)) == best
