import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toothbox.phantom import random_phantom_spec, render_phantom  # noqa: E402


@pytest.fixture(scope="session")
def phantom_factory():
    cache = {}

    def make(seed, **kw):
        key = (seed, tuple(sorted(kw.items())))
        if key not in cache:
            cache[key] = render_phantom(random_phantom_spec(seed, **kw))
        return cache[key]

    return make


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
