"""Triangle meshes and the OFF / OBJ readers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from afford.errors import FormatError, IndexOutOfRangeError, InvalidInputError
from afford.geometry.pose import Pose

log = logging.getLogger(__name__)

MIN_TRIANGLE_AREA = 1e-12
# raw diagonals outside this band are rescaled to NORMALIZED_DIAGONAL
SCALE_BAND = (0.05, 5.0)
NORMALIZED_DIAGONAL = 0.5


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    if len(triangles) == 0:
        return np.zeros(0)
    a, b, c = (vertices[triangles[:, k]] for k in range(3))
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=float).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(v) == 0 or len(t) == 0:
            raise InvalidInputError("mesh has no vertices or no triangles")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("mesh vertex coordinates must be finite")
        if t.min() < 0 or t.max() >= len(v):
            raise IndexOutOfRangeError(f"triangle index out of range for {len(v)} vertices")
        areas = triangle_areas(v, t)
        if np.any(areas <= MIN_TRIANGLE_AREA):
            bad = int(np.argmax(areas <= MIN_TRIANGLE_AREA))
            raise InvalidInputError(f"degenerate triangle {bad} (area {areas[bad]:.3e} m^2)")
        v.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "metadata", dict(self.metadata))

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diagonal(self) -> float:
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def is_watertight(self) -> bool:
        """Every directed edge is matched by exactly one opposite directed edge."""
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        keys, counts = np.unique(directed, axis=0, return_counts=True)
        if np.any(counts != 1):
            return False
        fwd = {tuple(k) for k in keys.tolist()}
        return all((b, a) in fwd for a, b in fwd)

    def transformed(self, pose: Pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.triangles, self.metadata)

    def scaled(self, factor: float) -> "TriMesh":
        return TriMesh(self.vertices * factor, self.triangles, self.metadata)

    def with_metadata(self, **kw) -> "TriMesh":
        return TriMesh(self.vertices, self.triangles, {**self.metadata, **kw})

    def to_off(self) -> str:
        lines = ["OFF", f"{len(self.vertices)} {len(self.triangles)} 0"]
        lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in self.vertices]
        lines += [f"3 {a} {b} {c}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"

    def to_obj(self) -> str:
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in self.vertices]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in self.triangles]
        return "\n".join(lines) + "\n"


def concatenate(meshes: list[TriMesh], metadata: dict | None = None) -> TriMesh:
    """Join meshes without merging vertices (each part keeps its own closure)."""
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += len(m.vertices)
    return TriMesh(np.concatenate(verts), np.concatenate(tris), metadata or {})


def _fan(face: list[int]) -> list[tuple[int, int, int]]:
    return [(face[0], face[i], face[i + 1]) for i in range(1, len(face) - 1)]


def _parse_off(text: str, path: str) -> tuple[np.ndarray, list[tuple[int, int, int]], list[int]]:
    tokens: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            tokens.append((lineno, line.split()))
    if not tokens:
        raise InvalidInputError(f"{path}: empty mesh file")
    lineno, head = tokens[0]
    if not head[0].upper().startswith("OFF"):
        raise FormatError("missing OFF header", line=lineno, path=path)
    # ModelNet writes the counts glued to the header, e.g. "OFF490 518 0"
    rest = head[0][3:]
    counts_tokens = ([rest] if rest else []) + head[1:]
    body = tokens[1:]
    if not counts_tokens:
        if not body:
            raise FormatError("missing element counts", line=lineno, path=path)
        lineno, counts_tokens = body[0]
        body = body[1:]
    try:
        nv, nf = int(counts_tokens[0]), int(counts_tokens[1])
    except (ValueError, IndexError):
        raise FormatError("bad element counts", line=lineno, path=path) from None
    if nv == 0 or nf == 0:
        raise InvalidInputError(f"{path}: empty mesh ({nv} vertices, {nf} faces)")
    if len(body) < nv + nf:
        raise FormatError(f"expected {nv + nf} records, found {len(body)}", line=body[-1][0] if body else lineno, path=path)
    verts = np.empty((nv, 3))
    for i in range(nv):
        ln, toks = body[i]
        try:
            verts[i] = [float(x) for x in toks[:3]]
        except ValueError:
            raise FormatError("bad vertex record", line=ln, path=path) from None
        if len(toks) < 3:
            raise FormatError("vertex needs 3 coordinates", line=ln, path=path)
    tris: list[tuple[int, int, int]] = []
    lines: list[int] = []
    for ln, toks in body[nv:nv + nf]:
        try:
            k = int(toks[0])
            idx = [int(x) for x in toks[1:1 + k]]
        except ValueError:
            raise FormatError("bad face record", line=ln, path=path) from None
        if len(idx) != k or k < 3:
            raise FormatError("face record too short", line=ln, path=path)
        for i in idx:
            if i < 0 or i >= nv:
                raise IndexOutOfRangeError(f"face references vertex {i} of {nv}", line=ln, path=path)
        for tri in _fan(idx):
            tris.append(tri)
            lines.append(ln)
    return verts, tris, lines


def _parse_obj(text: str, path: str) -> tuple[np.ndarray, list[tuple[int, int, int]], list[int]]:
    verts: list[list[float]] = []
    raw_faces: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "v":
            try:
                verts.append([float(x) for x in toks[1:4]])
            except ValueError:
                raise FormatError("bad vertex record", line=lineno, path=path) from None
            if len(verts[-1]) != 3:
                raise FormatError("vertex needs 3 coordinates", line=lineno, path=path)
        elif toks[0] == "f":
            raw_faces.append((lineno, toks[1:]))
        # vt/vn/usemtl/o/g/s records carry no geometry we use
    if not verts or not raw_faces:
        raise InvalidInputError(f"{path}: empty mesh")
    nv = len(verts)
    tris: list[tuple[int, int, int]] = []
    lines: list[int] = []
    for ln, toks in raw_faces:
        idx = []
        for tok in toks:
            try:
                i = int(tok.split("/")[0])
            except ValueError:
                raise FormatError(f"bad face index {tok!r}", line=ln, path=path) from None
            i = i - 1 if i > 0 else nv + i
            if i < 0 or i >= nv:
                raise IndexOutOfRangeError(f"face references vertex {tok.split('/')[0]} of {nv}", line=ln, path=path)
            idx.append(i)
        if len(idx) < 3:
            raise FormatError("face needs at least 3 vertices", line=ln, path=path)
        for tri in _fan(idx):
            tris.append(tri)
            lines.append(ln)
    return np.array(verts, dtype=float), tris, lines


def load_mesh(path: str | Path, format: str | None = None) -> TriMesh:
    """Read an OFF or OBJ file and normalize its scale.

    Meshes whose bounding diagonal falls outside ``SCALE_BAND`` metres are
    uniformly rescaled to a 0.5 m diagonal; the factor is kept in
    ``metadata["scale"]``. Zero-area faces are dropped.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    if fmt not in ("OFF", "OBJ"):
        raise InvalidInputError(f"unsupported mesh format {fmt!r}")
    text = path.read_text()
    parser = _parse_off if fmt == "OFF" else _parse_obj
    verts, tris, _ = parser(text, str(path))
    if not tris:
        raise InvalidInputError(f"{path}: mesh has no faces")

    lo, hi = verts.min(axis=0), verts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if diag == 0.0:
        raise InvalidInputError(f"{path}: all vertices coincide")
    scale = 1.0
    if diag > SCALE_BAND[1] or diag < SCALE_BAND[0]:
        scale = NORMALIZED_DIAGONAL / diag
        verts = verts * scale

    t = np.array(tris, dtype=np.int64)
    areas = triangle_areas(verts, t)
    keep = areas > MIN_TRIANGLE_AREA
    if not np.all(keep):
        log.warning("%s: dropped %d degenerate faces", path, int((~keep).sum()))
        t = t[keep]
    if len(t) == 0:
        raise InvalidInputError(f"{path}: every face is degenerate")
    used = np.unique(t)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = TriMesh(verts[used], remap[t], {"source": str(path), "scale": scale})
    return mesh.with_metadata(watertight=mesh.is_watertight())
