"""Procedural test objects with labels that follow from how they are built.

Every object is a union of closed convex pieces that touch but do not
overlap, so each piece is watertight on its own and the union has exact
mass properties.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from afford.errors import InvalidInputError
from afford.geometry.hull import convex_hull
from afford.geometry.mesh import TriMesh, concatenate
from afford.geometry.pose import Pose, quat_from_axis_angle, super_fibonacci

FAMILIES = ("cup", "bowl", "plate", "vase", "table", "chair", "basket", "box")
DEFECTS = ("none", "no_bottom", "side_hole", "tilted_top", "oversized_opening_blocked")
AFFORDANCE_KINDS = ("container", "support", "seat")

# (min, max) for every numeric parameter, by family
PARAM_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "cup": {"radius": (0.02, 0.15), "height": (0.04, 0.3), "wall": (0.002, 0.02), "bottom": (0.002, 0.02),
            "foot": (0.0, 0.05), "segments": (8, 64)},
    "bowl": {"radius": (0.04, 0.2), "height": (0.03, 0.15), "wall": (0.002, 0.02), "bottom": (0.002, 0.02),
             "base_frac": (0.3, 0.9), "segments": (8, 64)},
    "plate": {"radius": (0.05, 0.3), "height": (0.01, 0.05), "rim": (0.005, 0.04), "segments": (8, 64)},
    "vase": {"radius": (0.04, 0.2), "height": (0.1, 0.6), "neck_radius": (0.02, 0.15), "wall": (0.002, 0.02),
             "bottom": (0.002, 0.02), "shoulder_frac": (0.3, 0.8), "neck_frac": (0.05, 0.4), "segments": (8, 64)},
    "table": {"width": (0.2, 3.0), "depth": (0.2, 3.0), "height": (0.2, 1.5), "top": (0.01, 0.1),
              "leg": (0.01, 0.15), "legs": (3, 4), "tilt_deg": (0.0, 45.0)},
    "chair": {"width": (0.2, 1.0), "depth": (0.2, 1.0), "seat_height": (0.2, 0.8), "seat": (0.01, 0.1),
              "leg": (0.01, 0.1), "back_height": (0.0, 1.0), "back": (0.01, 0.1), "splay": (0.0, 0.2)},
    "basket": {"width": (0.1, 1.0), "depth": (0.1, 1.0), "height": (0.05, 0.6), "wall": (0.003, 0.05)},
    "box": {"width": (0.02, 2.0), "depth": (0.02, 2.0), "height": (0.02, 2.0), "tray": (0.0, 0.1),
            "rim": (0.002, 0.05)},
}

DEFAULTS: dict[str, dict[str, float]] = {
    "cup": {"radius": 0.04, "height": 0.10, "wall": 0.004, "bottom": 0.006, "foot": 0.0, "segments": 16},
    "bowl": {"radius": 0.09, "height": 0.08, "wall": 0.005, "bottom": 0.006, "base_frac": 0.5, "segments": 16},
    "plate": {"radius": 0.12, "height": 0.02, "rim": 0.01, "segments": 16},
    "vase": {"radius": 0.08, "height": 0.28, "neck_radius": 0.06, "wall": 0.005, "bottom": 0.008,
             "shoulder_frac": 0.6, "neck_frac": 0.2, "segments": 16},
    "table": {"width": 0.8, "depth": 0.6, "height": 0.5, "top": 0.03, "leg": 0.04, "legs": 4, "tilt_deg": 15.0},
    "chair": {"width": 0.45, "depth": 0.45, "seat_height": 0.45, "seat": 0.03, "leg": 0.04,
              "back_height": 0.45, "back": 0.02, "splay": 0.06},
    "basket": {"width": 0.4, "depth": 0.3, "height": 0.2, "wall": 0.01},
    "box": {"width": 0.4, "depth": 0.3, "height": 0.25, "tray": 0.0, "rim": 0.008},
}

# defects each family can carry
ALLOWED_DEFECTS = {
    "cup": {"none", "no_bottom", "side_hole", "oversized_opening_blocked"},
    "bowl": {"none", "no_bottom"},
    "plate": {"none"},
    "vase": {"none", "no_bottom"},
    "table": {"none", "tilted_top"},
    "chair": {"none", "no_bottom"},
    "basket": {"none", "no_bottom", "side_hole"},
    "box": {"none", "oversized_opening_blocked"},
}


@dataclass(frozen=True)
class ProceduralSpec:
    family: str
    params: dict = field(default_factory=dict)
    defect: str = "none"
    name: str = ""

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown family {self.family!r}")
        if self.defect not in DEFECTS:
            raise InvalidInputError(f"unknown defect {self.defect!r}")
        if self.defect not in ALLOWED_DEFECTS[self.family]:
            raise InvalidInputError(f"a {self.family} cannot have defect {self.defect!r}")
        merged = dict(DEFAULTS[self.family])
        for k, v in self.params.items():
            if k not in PARAM_RANGES[self.family] and k != "backrest":
                raise InvalidInputError(f"unknown {self.family} parameter {k!r}")
            merged[k] = v
        for k, (lo, hi) in PARAM_RANGES[self.family].items():
            if not lo <= merged[k] <= hi:
                raise InvalidInputError(f"{self.family} parameter {k}={merged[k]} outside [{lo}, {hi}]")
        object.__setattr__(self, "params", merged)

    def p(self, key: str):
        return self.params[key]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GroundTruth:
    """Labels by affordance kind and the construction-frame up vectors of functional poses."""

    labels: dict
    functional_ups: tuple = ()

    def to_dict(self) -> dict:
        return {"labels": dict(self.labels), "functional_ups": [list(map(float, u)) for u in self.functional_ups]}


# pieces ------------------------------------------------------------------


def _piece(points) -> TriMesh:
    return convex_hull(np.asarray(points, dtype=float))


def _block(lo, hi) -> TriMesh:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return _piece([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def _disk(radius: float, z0: float, z1: float, n: int) -> TriMesh:
    ang = 2 * np.pi * np.arange(n) / n
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    return _piece([[x, y, z] for x, y in ring for z in (z0, z1)])


def _ring_segments(r_in0, r_out0, z0, r_in1, r_out1, z1, n, skip=()) -> list[TriMesh]:
    """Annular wall between two heights, split into ``n`` convex segments."""
    out = []
    for i in range(n):
        if i in skip:
            continue
        a0, a1 = 2 * np.pi * i / n, 2 * np.pi * (i + 1) / n
        pts = []
        for a in (a0, a1):
            c, s = np.cos(a), np.sin(a)
            for r, z in ((r_in0, z0), (r_out0, z0), (r_in1, z1), (r_out1, z1)):
                pts.append([r * c, r * s, z])
        out.append(_piece(pts))
    return out


# families ------------------------------------------------------------------


def _cup(spec: ProceduralSpec) -> list[TriMesh]:
    R, H, t, b = spec.p("radius"), spec.p("height"), spec.p("wall"), spec.p("bottom")
    foot = spec.p("foot")
    n = int(spec.p("segments"))
    r_in = R - t
    pieces = []
    if spec.defect == "side_hole":
        # a window through a quarter of the wall, low enough to drain the cavity
        z_lo, z_hi = foot + b, foot + b + 0.4 * (H - foot - b)
        hole = set(range(n // 4))
        pieces += _ring_segments(r_in, R, 0.0, r_in, R, z_lo, n)
        pieces += _ring_segments(r_in, R, z_lo, r_in, R, z_hi, n, skip=hole)
        pieces += _ring_segments(r_in, R, z_hi, r_in, R, H, n)
    else:
        pieces += _ring_segments(r_in, R, 0.0, r_in, R, H, n)
    if spec.defect != "no_bottom":
        pieces.append(_disk(r_in, foot, foot + b, n))
    if spec.defect == "oversized_opening_blocked":
        pieces.append(_disk(r_in, H - b, H, n))
    return pieces


def _bowl(spec: ProceduralSpec) -> list[TriMesh]:
    R, H, t, b = spec.p("radius"), spec.p("height"), spec.p("wall"), spec.p("bottom")
    n = int(spec.p("segments"))
    rb = spec.p("base_frac") * R
    pieces = []
    if spec.defect != "no_bottom":
        pieces.append(_disk(rb, 0.0, b, n))
    # two sloped bands give a rounded profile
    zm = 0.45 * H
    rm = rb + 0.65 * (R - rb)
    pieces += _ring_segments(rb, rb + t, 0.0, rm, rm + t, zm, n)
    pieces += _ring_segments(rm, rm + t, zm, R - t, R, H, n)
    return pieces


def _plate(spec: ProceduralSpec) -> list[TriMesh]:
    R, H, rim = spec.p("radius"), spec.p("height"), spec.p("rim")
    n = int(spec.p("segments"))
    base = 0.4 * H
    return [_disk(R - rim, 0.0, base, n)] + _ring_segments(R - rim, R, 0.0, R - rim, R, H, n)


def _vase(spec: ProceduralSpec) -> list[TriMesh]:
    R, H, Rn, t, b = spec.p("radius"), spec.p("height"), spec.p("neck_radius"), spec.p("wall"), spec.p("bottom")
    n = int(spec.p("segments"))
    h1 = spec.p("shoulder_frac") * H
    h2 = (1.0 - spec.p("neck_frac")) * H
    if Rn >= R:
        raise InvalidInputError("vase neck must be narrower than the body")
    pieces = _ring_segments(R - t, R, 0.0, R - t, R, h1, n)
    pieces += _ring_segments(R - t, R, h1, Rn - t, Rn, h2, n)
    pieces += _ring_segments(Rn - t, Rn, h2, Rn - t, Rn, H, n)
    if spec.defect != "no_bottom":
        pieces.append(_disk(R - t, 0.0, b, n))
    return pieces


def _table(spec: ProceduralSpec) -> list[TriMesh]:
    W, D, H, top, leg = spec.p("width"), spec.p("depth"), spec.p("height"), spec.p("top"), spec.p("leg")
    legs = int(spec.p("legs"))
    tilt = np.radians(spec.p("tilt_deg")) if spec.defect == "tilted_top" else 0.0
    slope = np.tan(tilt)

    # slab bottom plane: z = H - top + slope * x
    def under(x):
        return H - top + slope * x

    hw, hd = W / 2, D / 2
    slab = [[x, y, z] for x in (-hw, hw) for y in (-hd, hd) for z in (under(x), under(x) + top)]
    pieces = [_piece(slab)]
    inset = leg
    if legs == 4:
        centers = [(sx * (hw - inset), sy * (hd - inset)) for sx in (-1, 1) for sy in (-1, 1)]
    else:
        centers = [(-(hw - inset), -(hd - inset)), (-(hw - inset), hd - inset), (hw - inset, 0.0)]
    for cx, cy in centers:
        pts = []
        for x in (cx - leg / 2, cx + leg / 2):
            for y in (cy - leg / 2, cy + leg / 2):
                pts += [[x, y, 0.0], [x, y, under(x)]]
        pieces.append(_piece(pts))
    return pieces


def _chair(spec: ProceduralSpec) -> list[TriMesh]:
    W, D, hs, st, leg = spec.p("width"), spec.p("depth"), spec.p("seat_height"), spec.p("seat"), spec.p("leg")
    hb, bt = spec.p("back_height"), spec.p("back")
    hw, hd = W / 2, D / 2
    pieces = []
    if spec.defect != "no_bottom":
        pieces.append(_block([-hw, -hd, hs - st], [hw, hd, hs]))
    splay = spec.p("splay")
    for sx in (-1, 1):
        for sy in (-1, 1):
            # legs lean outwards so the feet stand wider than the seat
            cx, cy = sx * (hw - leg / 2), sy * (hd - leg / 2)
            fx, fy = cx + sx * splay, cy + sy * splay
            pts = []
            for dx in (-leg / 2, leg / 2):
                for dy in (-leg / 2, leg / 2):
                    pts += [[fx + dx, fy + dy, 0.0], [cx + dx, cy + dy, hs - st]]
            pieces.append(_piece(pts))
    if hb > 0 and spec.params.get("backrest", True):
        pieces.append(_block([-hw, -hd, hs], [hw, -hd + bt, hs + hb]))
    return pieces


def _basket(spec: ProceduralSpec) -> list[TriMesh]:
    W, D, H, t = spec.p("width"), spec.p("depth"), spec.p("height"), spec.p("wall")
    hw, hd = W / 2, D / 2
    pieces = [
        _block([-hw, -hd, 0.0], [hw, -hd + t, H]),
        _block([-hw, hd - t, 0.0], [hw, hd, H]),
        _block([-hw, -hd + t, 0.0], [-hw + t, hd - t, H]),
    ]
    if spec.defect == "side_hole":
        pieces += [
            _block([hw - t, -hd + t, 0.0], [hw, hd - t, t]),
            _block([hw - t, -hd + t, 0.6 * H], [hw, hd - t, H]),
        ]
    else:
        pieces.append(_block([hw - t, -hd + t, 0.0], [hw, hd - t, H]))
    if spec.defect != "no_bottom":
        pieces.append(_block([-hw + t, -hd + t, 0.0], [hw - t, hd - t, t]))
    return pieces


def _box(spec: ProceduralSpec) -> list[TriMesh]:
    W, D, H = spec.p("width"), spec.p("depth"), spec.p("height")
    tray, rim = spec.p("tray"), spec.p("rim")
    hw, hd = W / 2, D / 2
    if tray <= 0:
        return [_block([-hw, -hd, 0.0], [hw, hd, H])]
    # closed block whose lid is recessed, leaving a shallow tray on top
    z = H - tray
    return [
        _block([-hw, -hd, 0.0], [hw, hd, z]),
        _block([-hw, -hd, z], [hw, -hd + rim, H]),
        _block([-hw, hd - rim, z], [hw, hd, H]),
        _block([-hw, -hd + rim, z], [-hw + rim, hd - rim, H]),
        _block([hw - rim, -hd + rim, z], [hw, hd - rim, H]),
    ]


_BUILDERS = {
    "cup": _cup, "bowl": _bowl, "plate": _plate, "vase": _vase,
    "table": _table, "chair": _chair, "basket": _basket, "box": _box,
}

_UP = (0.0, 0.0, 1.0)
_SIX = ((1.0, 0.0, 0.0), (-1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, -1.0, 0.0), (0.0, 0.0, 1.0), (0.0, 0.0, -1.0))


def ground_truth(spec: ProceduralSpec) -> GroundTruth:
    """Construction rule for the labels."""
    f, d = spec.family, spec.defect
    container = f in ("cup", "bowl", "vase", "basket") and d == "none"
    support = (f == "table" and d == "none") or (f == "box" and spec.p("tray") == 0)
    seat = (f == "chair" and d == "none" and spec.p("back_height") > 0 and spec.params.get("backrest", True))
    labels = {"container": container, "support": support, "seat": seat}
    if f == "box" and support:
        ups = _SIX
    elif container or support or seat:
        ups = (_UP,)
    else:
        ups = ()
    return GroundTruth(labels, ups)


def build_mesh(spec: ProceduralSpec) -> TriMesh:
    """Mesh in the construction frame: z up, resting on z = 0."""
    pieces = _BUILDERS[spec.family](spec)
    mesh = concatenate(pieces, {"family": spec.family, "defect": spec.defect})
    return mesh.with_metadata(watertight=mesh.is_watertight())


def initial_rotation(seed: int) -> np.ndarray:
    """Seeded member of the quasi-uniform rotation sequence."""
    rng = np.random.default_rng(seed)
    qs = super_fibonacci(97)
    return qs[int(rng.integers(len(qs)))]


def generate_object(spec: ProceduralSpec, seed: int = 0, random_pose: bool = True):
    """Mesh (optionally in a seeded random pose) plus ground truth.

    The ground-truth up vectors are expressed in the returned mesh's frame.
    """
    mesh = build_mesh(spec)
    truth = ground_truth(spec)
    if not random_pose:
        return mesh, truth
    rng = np.random.default_rng(seed)
    q = initial_rotation(seed)
    pose = Pose(q, rng.uniform(-0.5, 0.5, size=3))
    rot = pose.matrix
    ups = tuple(tuple(float(x) for x in rot @ np.asarray(u)) for u in truth.functional_ups)
    return mesh.transformed(pose).with_metadata(initial_pose=pose.to_dict()), GroundTruth(truth.labels, ups)


@dataclass(frozen=True)
class SuiteItem:
    name: str
    spec: ProceduralSpec
    affordance: str
    kind: str
    adversarial: bool = False

    @property
    def label(self) -> bool:
        return bool(ground_truth(self.spec).labels[self.kind])


def _item(name, family, affordance, kind, defect="none", adversarial=False, **params) -> SuiteItem:
    return SuiteItem(name, ProceduralSpec(family, params, defect, name), affordance, kind, adversarial)


def benchmark_suite() -> list[SuiteItem]:
    """Fixed 24-object suite: eight objects per affordance kind, five functional each."""
    return [
        # containers
        _item("cup_small", "cup", "cup", "container", radius=0.035, height=0.09),
        _item("cup_tall", "cup", "cup", "container", radius=0.045, height=0.14),
        _item("bowl", "bowl", "bowl", "container"),
        _item("basket", "basket", "basket", "container"),
        _item("vase", "vase", "vase", "container"),
        _item("cup_no_bottom", "cup", "cup", "container", "no_bottom", radius=0.035, height=0.09),
        _item("cup_lidded", "cup", "cup", "container", "oversized_opening_blocked", True, foot=0.012),
        _item("box_tray", "box", "basket", "container", adversarial=True,
              width=0.2, depth=0.15, height=0.12, tray=0.025, rim=0.006),
        # support surfaces
        _item("table", "table", "table", "support"),
        _item("table_three_leg", "table", "table", "support", width=1.0, depth=0.7, height=0.72, legs=3),
        _item("table_coffee", "table", "table", "support", width=0.5, depth=0.5, height=0.45),
        _item("table_wide", "table", "table", "support", width=1.4, depth=0.8, height=0.75),
        _item("crate", "box", "table", "support", width=0.5, depth=0.4, height=0.35),
        _item("table_tilt15", "table", "table", "support", "tilted_top", True, tilt_deg=15.0),
        _item("table_tilt20", "table", "table", "support", "tilted_top", True, tilt_deg=20.0, width=1.0, height=0.7),
        _item("table_tilt25", "table", "table", "support", "tilted_top", tilt_deg=25.0, width=0.6, depth=0.6),
        # seats
        _item("chair", "chair", "chair", "seat"),
        _item("chair_wide", "chair", "chair", "seat", width=0.55, depth=0.5, back_height=0.5),
        _item("chair_tall", "chair", "chair", "seat", seat_height=0.5, back_height=0.4),
        _item("chair_child", "chair", "chair", "seat", width=0.35, depth=0.35, seat_height=0.3, back_height=0.3),
        _item("chair_sturdy", "chair", "chair", "seat", leg=0.06, seat=0.06),
        _item("chair_no_seat", "chair", "chair", "seat", "no_bottom"),
        _item("stool", "chair", "chair", "seat", backrest=False),
        _item("plate", "plate", "chair", "seat", radius=0.125),
    ]


__all__ = [
    "AFFORDANCE_KINDS",
    "DEFECTS",
    "FAMILIES",
    "GroundTruth",
    "SuiteItem",
    "benchmark_suite",
    "ProceduralSpec",
    "build_mesh",
    "generate_object",
    "ground_truth",
    "quat_from_axis_angle",
]
