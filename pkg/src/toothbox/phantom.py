"""Synthetic dental phantoms and ground truth.

A phantom is two arches of teeth facing each other across an occlusal plane.
Each tooth is a solid of revolution around a vertical axis: a short domed cap
at the occlusal face, a frustum crown widening toward the cervical line, then
a tapering conical root. Roots are embedded in bone-density alveolar blocks
and two vertical ramus columns join the jaws behind the last molars, which
keeps the axial mean profile from collapsing to background inside the
interocclusal gap.

The occlusal plane is placed on a voxel-center row by default, so the
interocclusal gap is symmetric about a row and side ownership of every
non-overlapping tooth voxel is unambiguous.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .boxes import Box3D
from .volume import VoxelVolume

TOOTH_DENSITY = 1800
BONE_DENSITY = 700
BACKGROUND = 0

CROWN_FRACTION = 0.38
OCCLUSAL_TAPER = 0.7  # crown radius at the occlusal face relative to the cervical line
DOME_MM = 1.2
APEX_TAPER = 0.3

# class -> (mesio-distal crown width mm, root/crown radius ratio, height mm);
# textbook adult averages (crown plus root length), crowns are modelled as circles of 0.85x half the width
UPPER_TEETH = {
    1: (8.5, 0.75, 23.5),
    2: (6.5, 0.75, 22.0),
    3: (7.5, 0.75, 27.0),
    4: (7.0, 0.75, 22.5),
    5: (6.5, 0.75, 22.5),
    6: (10.0, 0.8, 20.5),
    7: (9.0, 0.8, 20.0),
    8: (8.5, 0.8, 17.5),
}
LOWER_TEETH = {
    1: (5.0, 0.75, 21.5),
    2: (5.5, 0.75, 23.5),
    3: (7.0, 0.75, 27.0),
    4: (7.0, 0.75, 22.5),
    5: (7.0, 0.75, 22.5),
    6: (11.0, 0.8, 21.5),
    7: (10.5, 0.8, 20.0),
    8: (10.0, 0.8, 18.0),
}
CROWN_SCALE = 0.85


class PhantomSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ToothSpec:
    label: int
    center_mm: tuple
    crown_radius_mm: float
    root_radius_mm: float
    height_mm: float
    density: int = TOOTH_DENSITY
    side: str | None = None  # "right" | "left"; derived from x when omitted


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (128, 128, 128)
    spacing: tuple = (0.6, 0.6, 0.6)
    maxilla: tuple = ()
    mandible: tuple = ()
    gap_mm: float = 2.0
    occlusal_z_mm: float | None = None
    tilt: tuple = (0.0, 0.0)  # dz/dx, dz/dy of the occlusal plane
    background: int = BACKGROUND
    bone_density: int = BONE_DENSITY
    rami: bool = True
    noise: float = 0.0
    seed: int = 0

    @property
    def center_mm(self):
        return tuple((n - 1) * s / 2.0 for n, s in zip(self.dims, self.spacing))

    @property
    def occlusal_mm(self) -> float:
        if self.occlusal_z_mm is not None:
            return float(self.occlusal_z_mm)
        nz, sz = self.dims[2], self.spacing[2]
        # between two voxel rows, so every voxel centre lies strictly on one side
        return (nz // 2 - 0.5) * sz

    def plane_mm(self, x_mm, y_mm):
        cx, cy, _ = self.center_mm
        return self.occlusal_mm + self.tilt[0] * (x_mm - cx) + self.tilt[1] * (y_mm - cy)

    def validate(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise PhantomSpecError(f"invalid dims {self.dims}")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise PhantomSpecError(f"invalid spacing {self.spacing}")
        if self.noise < 0:
            raise PhantomSpecError("noise amplitude must be >= 0")
        extent = [n * s for n, s in zip(self.dims, self.spacing)]
        for arch, teeth in (("maxilla", self.maxilla), ("mandible", self.mandible)):
            if len(teeth) > 16:
                raise PhantomSpecError(f"{arch} has {len(teeth)} teeth, at most 16 allowed")
            for t in teeth:
                if not 1 <= int(t.label) <= 8:
                    raise PhantomSpecError(f"{arch}: tooth label {t.label} outside 1..8")
                if min(t.crown_radius_mm, t.root_radius_mm, t.height_mm) <= 0:
                    raise PhantomSpecError(f"{arch}: tooth {t.label} has non-positive size")
                x, y = t.center_mm
                r = max(t.crown_radius_mm, t.root_radius_mm)
                if x - r < 0 or y - r < 0 or x + r > extent[0] or y + r > extent[1]:
                    raise PhantomSpecError(f"{arch}: tooth {t.label} at {t.center_mm} leaves the volume")
                for dx in (-r, r):
                    for dy in (-r, r):
                        p = self.plane_mm(x + dx, y + dy)
                        if arch == "maxilla":
                            top = p - self.gap_mm / 2 - t.height_mm
                            if top < 0 or p - self.gap_mm / 2 > extent[2]:
                                raise PhantomSpecError(f"maxilla: tooth {t.label} leaves the volume vertically")
                        else:
                            bottom = p + self.gap_mm / 2 + t.height_mm
                            if bottom > extent[2] or p + self.gap_mm / 2 < 0:
                                raise PhantomSpecError(f"mandible: tooth {t.label} leaves the volume vertically")
        if self.gap_mm <= 0 and not (self.maxilla and self.mandible):
            raise PhantomSpecError("gap <= 0 needs teeth in both arches to overlap")
        return self

    # -- json ---------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["maxilla"] = [asdict(t) for t in self.maxilla]
        d["mandible"] = [asdict(t) for t in self.mandible]
        for t in d["maxilla"] + d["mandible"]:
            t["center_mm"] = list(t["center_mm"])
        d["dims"], d["spacing"], d["tilt"] = list(self.dims), list(self.spacing), list(self.tilt)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise PhantomSpecError(f"unknown phantom spec keys: {sorted(unknown)}")
        d = dict(d)
        tooth_keys = set(ToothSpec.__dataclass_fields__)
        for arch in ("maxilla", "mandible"):
            teeth = []
            for t in d.get(arch, ()):
                bad = set(t) - tooth_keys
                if bad:
                    raise PhantomSpecError(f"unknown tooth keys: {sorted(bad)}")
                teeth.append(ToothSpec(**{**t, "center_mm": tuple(t["center_mm"])}))
            d[arch] = tuple(teeth)
        for key in ("dims", "spacing", "tilt"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class GroundTruth:
    """Tight voxel boxes of every rendered tooth.

    ``teeth`` holds Box3D objects whose ``footprint`` is the per-axial-slice
    cross-section box of the tooth.
    """

    teeth: tuple
    dims: tuple
    spacing: tuple
    gap_mm: float = 0.0
    occlusal_z_mm: float = 0.0
    tilt: tuple = (0.0, 0.0)

    def __len__(self):
        return len(self.teeth)

    def by_id(self, tooth_id):
        for t in self.teeth:
            if t.id == tooth_id:
                return t
        raise KeyError(tooth_id)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "spacing": list(self.spacing),
            "gap_mm": self.gap_mm,
            "occlusal_z_mm": self.occlusal_z_mm,
            "tilt": list(self.tilt),
            "teeth": [t.to_dict() for t in self.teeth],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        spacing = tuple(d["spacing"])
        teeth = tuple(Box3D.from_dict(t, spacing=spacing) for t in d["teeth"])
        ids = [t.id for t in teeth]
        if len(set(ids)) != len(ids):
            raise ValueError("ground truth tooth ids are not unique")
        dims = tuple(d["dims"])
        for t in teeth:
            if any(l < 0 for l in t.lo) or any(h > n for h, n in zip(t.hi, dims)):
                raise ValueError(f"ground truth box {t.id} exceeds the volume")
        return cls(
            teeth=teeth,
            dims=dims,
            spacing=spacing,
            gap_mm=float(d.get("gap_mm", 0.0)),
            occlusal_z_mm=float(d.get("occlusal_z_mm", 0.0)),
            tilt=tuple(d.get("tilt", (0.0, 0.0))),
        )


def save_json(obj, path):
    Path(path).write_text(json.dumps(obj.to_dict(), indent=1, sort_keys=True) + "\n")


def load_ground_truth(path) -> GroundTruth:
    return GroundTruth.from_dict(json.loads(Path(path).read_text()))


def load_phantom_spec(path) -> PhantomSpec:
    return PhantomSpec.from_dict(json.loads(Path(path).read_text()))


# -- rendering ----------------------------------------------------------------

def tooth_radius(u, crown_r, root_r, height):
    """Radius of the solid at distance ``u`` (mm) from the occlusal face."""
    u = np.asarray(u, dtype=float)
    crown_h = CROWN_FRACTION * height
    body = np.where(
        u <= crown_h,
        crown_r * (OCCLUSAL_TAPER + (1.0 - OCCLUSAL_TAPER) * u / crown_h),
        root_r * (1.0 - (1.0 - APEX_TAPER) * (u - crown_h) / (height - crown_h)),
    )
    dome = np.sqrt(np.clip(u * (2 * DOME_MM - u), 0.0, None)) / DOME_MM
    body = np.where(u < DOME_MM, body * dome, body)
    return np.where((u >= 0) & (u <= height), body, -1.0)


@dataclass
class Phantom:
    volume: VoxelVolume
    ground_truth: GroundTruth
    labels: np.ndarray  # (z, y, x) tooth id owning each voxel, 0 for none
    spec: PhantomSpec
    masks: dict = field(default_factory=dict, repr=False)  # id -> (slices, bool mask) of the raw solid


def _fdi(arch, side, label):
    quadrant = {("upper", "right"): 1, ("upper", "left"): 2, ("lower", "left"): 3, ("lower", "right"): 4}
    return quadrant[(arch, side)] * 10 + label


def render_phantom(spec: PhantomSpec) -> Phantom:
    spec.validate()
    nx, ny, nz = spec.dims
    sx, sy, sz = spec.spacing
    density = np.full((nz, ny, nx), float(spec.background), dtype=np.float64)
    labels = np.zeros((nz, ny, nx), dtype=np.int32)
    bone = np.zeros((nz, ny, nx), dtype=bool)
    cx, _, _ = spec.center_mm

    teeth = []
    masks = {}
    tooth_id = 0
    z_extent = [math.inf, -math.inf]
    for arch, teeth_specs in (("upper", spec.maxilla), ("lower", spec.mandible)):
        sign = -1.0 if arch == "upper" else 1.0
        for t in teeth_specs:
            tooth_id += 1
            x0, y0 = t.center_mm
            r_bone = t.crown_radius_mm + 2.0
            xs = np.arange(max(0, int((x0 - r_bone) / sx) - 1), min(nx, int((x0 + r_bone) / sx) + 2))
            ys = np.arange(max(0, int((y0 - r_bone) / sy) - 1), min(ny, int((y0 + r_bone) / sy) + 2))
            X, Y = np.meshgrid(xs * sx, ys * sy)
            plane = spec.plane_mm(X, Y)
            face = plane + sign * spec.gap_mm / 2.0
            reach = t.height_mm + 2.5
            zmin_mm = face.min() - reach if arch == "upper" else face.min()
            zmax_mm = face.max() if arch == "upper" else face.max() + reach
            zs = np.arange(max(0, int(zmin_mm / sz) - 1), min(nz, int(zmax_mm / sz) + 2))
            Z = zs[:, None, None] * sz
            u = sign * (Z - face[None])
            dist = np.hypot(X - x0, Y - y0)[None]
            r = tooth_radius(u, t.crown_radius_mm, t.root_radius_mm, t.height_mm)
            solid = dist <= r
            crown_h = CROWN_FRACTION * t.height_mm
            socket = (u >= crown_h + 1.0) & (u <= t.height_mm + 2.0) & (dist <= r_bone)
            region = (slice(zs[0], zs[-1] + 1), slice(ys[0], ys[-1] + 1), slice(xs[0], xs[-1] + 1))
            bone[region] |= socket
            if not solid.any():
                raise PhantomSpecError(f"tooth {t.label} rasterizes to no voxels")
            sub_d = density[region]
            sub_d[solid] = np.maximum(sub_d[solid], t.density)
            sub_l = labels[region]
            # overlapping solids: ownership goes to the side of the occlusal plane
            mine = solid & ((sub_l == 0) | (sign * (Z - plane[None]) > 0))
            sub_l[mine] = tooth_id
            masks[tooth_id] = (region, solid)

            zz, yy, xx = np.nonzero(solid)
            lo = (xs[0] + xx.min(), ys[0] + yy.min(), zs[0] + zz.min())
            hi = (xs[0] + xx.max() + 1, ys[0] + yy.max() + 1, zs[0] + zz.max() + 1)
            z_extent[0] = min(z_extent[0], zs[0] + (np.nonzero(socket | solid)[0].min()))
            z_extent[1] = max(z_extent[1], zs[0] + (np.nonzero(socket | solid)[0].max()))
            sections = {}
            for k in np.unique(zz):
                sel = zz == k
                sections[int(zs[0] + k)] = (
                    int(xs[0] + xx[sel].min()),
                    int(ys[0] + yy[sel].min()),
                    int(xs[0] + xx[sel].max() + 1),
                    int(ys[0] + yy[sel].max() + 1),
                )
            side = t.side or ("right" if x0 < cx else "left")
            teeth.append(
                Box3D(
                    id=tooth_id,
                    lo=lo,
                    hi=hi,
                    label=t.label,
                    spacing=spec.spacing,
                    fdi=_fdi(arch, side, t.label),
                    detections=0,
                    arch=arch,
                    footprint=sections,
                )
            )

    if spec.rami and teeth:
        _add_rami(spec, bone, teeth, z_extent)
    density[bone & (labels == 0) & (density < spec.bone_density)] = spec.bone_density

    if spec.noise > 0:
        rng = np.random.default_rng(spec.seed)
        density += rng.normal(0.0, spec.noise, size=density.shape)
    data = np.clip(np.rint(density), -32768, 32767).astype(np.int16)
    vol = VoxelVolume(data, spec.spacing)
    gt = GroundTruth(
        teeth=tuple(teeth),
        dims=tuple(spec.dims),
        spacing=tuple(float(s) for s in spec.spacing),
        gap_mm=float(spec.gap_mm),
        occlusal_z_mm=spec.occlusal_mm,
        tilt=tuple(spec.tilt),
    )
    return Phantom(volume=vol, ground_truth=gt, labels=labels, spec=spec, masks=masks)


def _add_rami(spec, bone, teeth, z_extent):
    nz, ny, nx = bone.shape
    sx, sy, _ = spec.spacing
    x_lo = min(t.lo[0] for t in teeth)
    x_hi = max(t.hi[0] for t in teeth)
    y_back = max(t.hi[1] for t in teeth)
    width = max(1, int(round(9.0 / sx)))
    y0 = min(ny - 1, y_back + int(round(1.5 / sy)))
    y1 = max(y0 + 1, min(ny, y0 + int(round(30.0 / sy))))
    z0, z1 = int(z_extent[0]), int(z_extent[1]) + 1
    for xa, xb in ((x_lo, x_lo + width), (x_hi - width, x_hi)):
        xa, xb = max(0, xa), min(nx, xb)
        if xa < xb and y0 < y1:
            bone[z0:z1, y0:y1, xa:xb] = True


def generate_phantom(spec: PhantomSpec):
    """Render ``spec`` and return ``(volume, ground_truth)``."""
    ph = render_phantom(spec)
    return ph.volume, ph.ground_truth


# -- random arches --------------------------------------------------------------

def _arch_xy(s, front_y, radius):
    """Half of a U-shaped arch: a quarter circle at the front, straight behind.

    ``s`` is arc length from the midline; returns lateral offset and y.
    """
    s = np.asarray(s, dtype=float)
    quarter = np.pi * radius / 2.0
    theta = np.minimum(s, quarter) / radius
    x = radius * np.sin(theta)
    y = front_y + radius * (1.0 - np.cos(theta)) + np.maximum(s - quarter, 0.0)
    return x, y


def _slot_positions(widths, gaps):
    pos, acc = [], gaps[0] / 2.0
    for w, g in zip(widths, gaps):
        pos.append(acc + w / 2.0)
        acc += w + g
    return np.array(pos)


def _choose_present(rng, count):
    present = list(range(1, 9))
    if count < 8:
        present.remove(8)
    others = list(range(2, 8))
    rng.shuffle(others)
    while len(present) > count:
        present.remove(others.pop())
    return sorted(present)


def random_phantom_spec(
    seed,
    n_teeth=None,
    gap_mm=None,
    fused_pairs=0,
    tilt=(0.0, 0.0),
    spacing=0.6,
    dims=None,
    noise=0.0,
    symmetric=False,
    interdental_mm=1.5,
) -> PhantomSpec:
    """Draw a plausible two-arch phantom.

    The field of view is about 77 x 77 x 77 mm; ``dims`` defaults to that
    extent at the requested isotropic ``spacing`` (128^3 at 0.6 mm).

    With ``fused_pairs > 0`` the mandible holds only that many teeth, each an
    exact counterpart placed under an upper tooth of the same class so the
    pair fuses when the gap is small. Otherwise the mandible is a full arch
    inset behind the maxilla with its own tooth sizes, so counterparts only
    partly overlap in the axial plane.
    """
    rng = np.random.default_rng(seed)
    spacing = (float(spacing),) * 3 if np.isscalar(spacing) else tuple(float(v) for v in spacing)
    if dims is None:
        dims = tuple(int(round(76.8 / s)) for s in spacing)
    if gap_mm is None:
        gap_mm = float(rng.uniform(2.0, 3.5))
    cx = (dims[0] - 1) * spacing[0] / 2.0
    scale = rng.uniform(0.95, 1.05)

    if fused_pairs:
        n_upper = int(n_teeth if n_teeth is not None else rng.integers(10, 15))
        n_lower = 0
    else:
        total = int(n_teeth if n_teeth is not None else rng.integers(8, 29))
        if not 2 <= total <= 32:
            raise PhantomSpecError("n_teeth must be in 2..32")
        n_upper = (total + 1) // 2 if rng.random() < 0.5 else total // 2
        n_lower = total - n_upper

    def quadrant_counts(n):
        if symmetric:
            if n % 2:
                raise PhantomSpecError("symmetric phantoms need an even tooth count per arch")
            return n // 2, n // 2
        right = n // 2 + int(rng.integers(0, 2)) * (n % 2)
        right = min(8, max(n - 8, right))
        return right, n - right

    def build_arch(table, counts, front_y, radius):
        widths = np.array([table[c][0] for c in range(1, 9)]) * scale
        gaps = interdental_mm + rng.uniform(0.0, 0.3, size=8)
        pos = _slot_positions(widths, gaps)
        out = []
        right_present = _choose_present(rng, counts[0]) if counts[0] else []
        left_present = right_present if symmetric else (_choose_present(rng, counts[1]) if counts[1] else [])
        for side, present in (("right", right_present), ("left", left_present)):
            for c in present:
                px, py = _arch_xy(pos[c - 1], front_y, radius)
                x = cx - px if side == "right" else cx + px
                width, root_ratio, height = table[c]
                crown_r = CROWN_SCALE * width * scale / 2.0
                if not symmetric:
                    height *= rng.uniform(0.95, 1.05)
                out.append(ToothSpec(c, (float(x), float(py)), float(crown_r), float(crown_r * root_ratio),
                                     float(height), side=side))
        return out

    front_y = 6.0
    arch_radius = rng.uniform(19.0, 22.0)
    maxilla = build_arch(UPPER_TEETH, quadrant_counts(n_upper), front_y, arch_radius)
    if fused_pairs:
        picks = rng.choice(len(maxilla), size=min(fused_pairs, len(maxilla)), replace=False)
        mandible = [
            ToothSpec(maxilla[i].label, maxilla[i].center_mm, maxilla[i].crown_radius_mm,
                      maxilla[i].root_radius_mm, maxilla[i].height_mm * rng.uniform(0.95, 1.05),
                      side=maxilla[i].side)
            for i in sorted(picks)
        ]
    else:
        overjet = 2.5
        mandible = build_arch(LOWER_TEETH, quadrant_counts(n_lower), front_y + overjet, arch_radius - overjet)

    nz, sz = dims[2], spacing[2]
    spec = PhantomSpec(
        dims=tuple(dims),
        spacing=spacing,
        maxilla=tuple(maxilla),
        mandible=tuple(mandible),
        gap_mm=float(gap_mm),
        occlusal_z_mm=(nz // 2 - 0.5) * sz,
        tilt=tuple(tilt),
        noise=float(noise),
        seed=int(seed),
    )
    return spec.validate()
