"""Rigid-body world: a thin stateful wrapper over the jitted kernels."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from afford.errors import InvalidInputError, NumericBlowupError
from afford.geometry.hull import convex_hull
from afford.geometry.mass import DEFAULT_DENSITY, MassProperties, compute_mass_properties
from afford.geometry.mesh import TriMesh
from afford.geometry.pose import Pose, quat_normalize, slerp
from afford.physics import kernels as K
from afford.physics.config import WorldConfig

KIND_NAMES = {
    K.KIND_GROUND: "ground_plane",
    K.KIND_STATIC_MESH: "static_mesh",
    K.KIND_DYNAMIC_MESH: "dynamic_mesh",
    K.KIND_SPHERES: "sphere_composite",
}
MODES = {"dynamic": K.MODE_DYNAMIC, "kinematic": K.MODE_KINEMATIC, "static": K.MODE_STATIC}
MODE_NAMES = {v: k for k, v in MODES.items()}

# contacts of one sphere against one body whose normals agree this closely
# are the same physical contact seen through neighbouring triangles
CONTACT_CLUSTER_DEG = 25.0


@dataclass(frozen=True)
class ContactPoint:
    body_a: int
    body_b: int
    point: np.ndarray
    normal: np.ndarray  # unit, from a to b
    depth: float  # positive when penetrating


@dataclass(frozen=True)
class Body:
    id: int
    kind: str
    shape: object  # TriMesh, or list of (offset, radius) for sphere composites
    mass_properties: MassProperties | None
    pose: Pose
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    mode: str


@dataclass(frozen=True)
class MoveResult:
    collided: bool
    collision_step: int | None
    steps: int

    @property
    def elapsed_steps(self) -> int:
        return self.steps


def _sphere_mass_properties(spheres, mass: float) -> MassProperties:
    offs = np.array([s[0] for s in spheres], dtype=float).reshape(-1, 3)
    radii = np.array([s[1] for s in spheres], dtype=float)
    w = radii**3 / np.sum(radii**3)
    ms = mass * w
    com = (ms[:, None] * offs).sum(axis=0)
    inertia = np.zeros((3, 3))
    for m, r, o in zip(ms, radii, offs):
        d = o - com
        inertia += 0.4 * m * r * r * np.eye(3) + m * (np.dot(d, d) * np.eye(3) - np.outer(d, d))
    vol = float(np.sum(4.0 / 3.0 * np.pi * radii**3))
    return MassProperties(vol, float(mass), com, inertia)


class World:
    """Fixed-timestep rigid-body world.

    Body poses given to and returned by the public API are poses of the
    body's own frame (the mesh or sphere-offset frame), not of its centre
    of mass.
    """

    def __init__(self, config: WorldConfig | None = None) -> None:
        self.config = config or WorldConfig()
        self.step_count = 0
        self._shapes: list = []
        self._mass: list[MassProperties | None] = []
        self.kind = np.zeros(0, dtype=np.int64)
        self.mode = np.zeros(0, dtype=np.int64)
        self.pos = np.zeros((0, 3))
        self.quat = np.zeros((0, 4))
        self.vel = np.zeros((0, 3))
        self.angvel = np.zeros((0, 3))
        self.inv_mass = np.zeros(0)
        self.inertia_body = np.zeros((0, 3, 3))
        self.inv_inertia_body = np.zeros((0, 3, 3))
        self.bound_r = np.zeros(0)
        self.com_offset = np.zeros((0, 3))  # centre of mass in the body frame
        self.sph_body = np.zeros(0, dtype=np.int64)
        self.sph_off = np.zeros((0, 3))
        self.sph_r = np.zeros(0)
        self.mv_body = np.zeros(0, dtype=np.int64)
        self.mv_off = np.zeros((0, 3))
        self.tri = np.zeros((0, 3, 3))
        self.tri_body = np.zeros(0, dtype=np.int64)
        self.ground_body = -1
        self.ground_z = 0.0
        self._grid = None
        self._buffers = None

    # construction -------------------------------------------------------

    def _append(self, kind, mode, pose: Pose, mass: MassProperties | None, bound_r: float, com_off) -> int:
        bid = len(self.kind)
        com_off = np.asarray(com_off, dtype=float)
        rot = pose.matrix
        self.kind = np.append(self.kind, kind)
        self.mode = np.append(self.mode, mode)
        self.pos = np.vstack([self.pos, pose.position + rot @ com_off])
        self.quat = np.vstack([self.quat, pose.rotation])
        self.vel = np.vstack([self.vel, np.zeros(3)])
        self.angvel = np.vstack([self.angvel, np.zeros(3)])
        if mass is not None:
            inertia = np.asarray(mass.inertia, dtype=float)
            self.inv_mass = np.append(self.inv_mass, 1.0 / mass.mass)
            self.inertia_body = np.concatenate([self.inertia_body, inertia[None]])
            self.inv_inertia_body = np.concatenate([self.inv_inertia_body, np.linalg.inv(inertia)[None]])
        else:
            self.inv_mass = np.append(self.inv_mass, 0.0)
            self.inertia_body = np.concatenate([self.inertia_body, np.zeros((1, 3, 3))])
            self.inv_inertia_body = np.concatenate([self.inv_inertia_body, np.zeros((1, 3, 3))])
        self.bound_r = np.append(self.bound_r, bound_r)
        self.com_offset = np.vstack([self.com_offset, com_off])
        self._mass.append(mass)
        self._buffers = None
        return bid

    def add_ground(self, z: float = 0.0) -> int:
        if self.ground_body >= 0:
            raise InvalidInputError("world already has a ground plane")
        bid = self._append(K.KIND_GROUND, K.MODE_STATIC, Pose(position=(0, 0, z)), None, 0.0, np.zeros(3))
        self._shapes.append(None)
        self.ground_body = bid
        self.ground_z = float(z)
        return bid

    def add_static_mesh(self, mesh: TriMesh, pose: Pose | None = None) -> int:
        pose = pose or Pose()
        bid = self._append(K.KIND_STATIC_MESH, K.MODE_STATIC, pose, None, 0.0, np.zeros(3))
        self._shapes.append(mesh)
        world_v = pose.apply(mesh.vertices)
        self.tri = np.concatenate([self.tri, world_v[mesh.triangles]])
        self.tri_body = np.append(self.tri_body, np.full(len(mesh.triangles), bid))
        self._grid = None
        return bid

    def add_dynamic_mesh(
        self,
        mesh: TriMesh,
        pose: Pose | None = None,
        mass_properties: MassProperties | None = None,
        density: float = DEFAULT_DENSITY,
    ) -> int:
        """Dynamic mesh; only its convex-hull vertices collide, and only with the ground."""
        pose = pose or Pose()
        mp = mass_properties or compute_mass_properties(mesh, density)
        hull_v = convex_hull(mesh).vertices
        local = hull_v - mp.center_of_mass
        bid = self._append(K.KIND_DYNAMIC_MESH, K.MODE_DYNAMIC, pose, mp,
                           float(np.linalg.norm(local, axis=1).max()), mp.center_of_mass)
        self._shapes.append(mesh)
        self.mv_body = np.append(self.mv_body, np.full(len(local), bid))
        self.mv_off = np.vstack([self.mv_off, local])
        return bid

    def add_sphere_composite(self, spheres, pose: Pose | None = None, mass: float = 1.0,
                             mode: str = "dynamic") -> int:
        """``spheres`` is a sequence of ``(offset, radius)`` in the body frame."""
        spheres = [(np.asarray(o, dtype=float), float(r)) for o, r in spheres]
        if not spheres:
            raise InvalidInputError("a sphere composite needs at least one sphere")
        if any(not r > 0 for _, r in spheres):
            raise InvalidInputError("sphere radii must be positive")
        if not mass > 0:
            raise InvalidInputError("dynamic bodies need positive mass")
        if mode not in MODES or mode == "static":
            raise InvalidInputError(f"sphere composites are dynamic or kinematic, not {mode!r}")
        pose = pose or Pose()
        mp = _sphere_mass_properties(spheres, mass)
        offs = np.array([o for o, _ in spheres]) - mp.center_of_mass
        radii = np.array([r for _, r in spheres])
        bound = float(np.max(np.linalg.norm(offs, axis=1) + radii))
        bid = self._append(K.KIND_SPHERES, MODES[mode], pose, mp, bound, mp.center_of_mass)
        self._shapes.append(spheres)
        self.sph_body = np.append(self.sph_body, np.full(len(spheres), bid))
        self.sph_off = np.vstack([self.sph_off, offs])
        self.sph_r = np.append(self.sph_r, radii)
        self._grid = None
        return bid

    # state access -------------------------------------------------------

    @property
    def n_bodies(self) -> int:
        return len(self.kind)

    def _check_id(self, bid: int) -> None:
        if not (isinstance(bid, (int, np.integer)) and 0 <= bid < self.n_bodies):
            raise InvalidInputError(f"unknown body id {bid}")

    def get_pose(self, bid: int) -> Pose:
        self._check_id(bid)
        q = self.quat[bid]
        rot = K.quat_to_mat(q)
        return Pose(q, self.pos[bid] - rot @ self.com_offset[bid])

    def set_pose(self, bid: int, pose: Pose) -> None:
        self._check_id(bid)
        if self.mode[bid] == K.MODE_STATIC:
            raise InvalidInputError("static bodies cannot be moved")
        self.quat[bid] = pose.rotation
        self.pos[bid] = pose.position + pose.matrix @ self.com_offset[bid]

    def set_velocity(self, bid: int, linear=(0.0, 0.0, 0.0), angular=(0.0, 0.0, 0.0)) -> None:
        self._check_id(bid)
        self.vel[bid] = linear
        self.angvel[bid] = angular

    def set_mode(self, bid: int, mode: str) -> None:
        self._check_id(bid)
        if self.kind[bid] in (K.KIND_GROUND, K.KIND_STATIC_MESH):
            raise InvalidInputError("static geometry cannot change mode")
        if mode == "static":
            raise InvalidInputError("only dynamic and kinematic modes are switchable")
        self.mode[bid] = MODES[mode]

    def body(self, bid: int) -> Body:
        self._check_id(bid)
        return Body(
            id=bid,
            kind=KIND_NAMES[int(self.kind[bid])],
            shape=self._shapes[bid],
            mass_properties=self._mass[bid],
            pose=self.get_pose(bid),
            linear_velocity=self.vel[bid].copy(),
            angular_velocity=self.angvel[bid].copy(),
            mode=MODE_NAMES[int(self.mode[bid])],
        )

    def sphere_centers(self, bid: int) -> np.ndarray:
        self._check_id(bid)
        rot = K.quat_to_mat(self.quat[bid])
        sel = self.sph_body == bid
        return self.pos[bid] + self.sph_off[sel] @ rot.T

    def energy(self, per_body: bool = False):
        """Kinetic plus gravitational potential energy of the dynamic bodies (J)."""
        out = np.zeros(self.n_bodies)
        for i in range(self.n_bodies):
            if self.mode[i] != K.MODE_DYNAMIC:
                continue
            m = 1.0 / self.inv_mass[i]
            rot = K.quat_to_mat(self.quat[i])
            iw = rot @ self.inertia_body[i] @ rot.T
            w = self.angvel[i]
            out[i] = 0.5 * m * float(self.vel[i] @ self.vel[i]) + 0.5 * float(w @ iw @ w) + m * self.config.gravity * self.pos[i, 2]
        return out if per_body else float(out.sum())

    def clone(self) -> "World":
        return copy.deepcopy(self)

    # kernel plumbing ----------------------------------------------------

    def _params(self):
        c = self.config
        f = np.zeros(K.N_FLOAT_PARAMS)
        f[K.P_DT] = c.timestep
        f[K.P_GZ] = -c.gravity
        f[K.P_MU] = c.friction
        f[K.P_MU_ROLL] = c.rolling_friction
        f[K.P_REST] = c.restitution
        f[K.P_SLOP] = c.contact_slop
        f[K.P_BETA] = c.baumgarte
        f[K.P_EPS] = c.settle_speed_eps
        i = np.array([c.solver_iterations, c.settle_window], dtype=np.int64)
        return f, i

    def _ensure_grid(self):
        if self._grid is None:
            if len(self.tri):
                extent = float(np.max(self.tri.reshape(-1, 3).max(axis=0) - self.tri.reshape(-1, 3).min(axis=0)))
                max_r = float(self.sph_r.max()) if len(self.sph_r) else 0.0
                # twice the largest sphere radius, coarsened so huge meshes stay bounded
                cell = max(2.0 * max_r, extent / 64.0, 1e-4)
                self._grid = K.build_grid(self.tri, cell)
            else:
                self._grid = (np.zeros(4), np.ones(3, dtype=np.int64), np.zeros(2, dtype=np.int64),
                              np.zeros(0, dtype=np.int64))
        return self._grid

    def _ensure_buffers(self):
        ns = len(self.sph_r)
        cap = 16 + len(self.mv_off) + ns * ns + 64 * ns
        if self._buffers is None or len(self._buffers[0]) < cap:
            self._buffers = (
                np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64),
                np.zeros(cap, dtype=np.int64), np.zeros(cap, dtype=np.int64),
                np.zeros((cap, 3)), np.zeros((cap, 3)), np.zeros(cap), np.zeros(cap),
            )
        return self._buffers

    def _geom_args(self):
        g = self._ensure_grid()
        return (
            self.sph_body, self.sph_off, self.sph_r, self.mv_body, self.mv_off,
            self.tri if len(self.tri) else np.zeros((0, 3, 3)), self.tri_body,
            g[0], g[1], g[2], g[3], self.ground_body, self.ground_z,
        )

    def _state_args(self):
        return (self.kind, self.mode, self.pos, self.quat, self.vel, self.angvel, self.inv_mass,
                self.inertia_body, self.inv_inertia_body, self.bound_r)

    # simulation ---------------------------------------------------------

    def step(self, n: int = 1) -> "World":
        """Advance ``n`` timesteps in place; returns self."""
        if n < 0:
            raise InvalidInputError("step count must be non-negative")
        f, i = self._params()
        steps, _, blown = K.run(*self._state_args(), *self._geom_args(), f, i, *self._ensure_buffers(), int(n), False)
        self.step_count += steps
        if blown >= 0:
            raise NumericBlowupError(int(blown))
        return self

    def settle(self, max_sim_time: float) -> tuple[bool, int]:
        """Step until every dynamic body stays quiet for the settle window.

        Returns ``(settled, steps)``.
        """
        if not max_sim_time > 0:
            raise InvalidInputError("max_sim_time must be positive")
        f, i = self._params()
        max_steps = int(math.ceil(max_sim_time / self.config.timestep - 1e-9))
        steps, settled, blown = K.run(*self._state_args(), *self._geom_args(), f, i, *self._ensure_buffers(),
                                      max_steps, True)
        self.step_count += steps
        if blown >= 0:
            raise NumericBlowupError(int(blown))
        return bool(settled), int(steps)

    def move_kinematic(self, body_ids, waypoints, speed: float) -> MoveResult:
        """Drive kinematic bodies along ``waypoints`` at ``speed`` m/s.

        ``body_ids`` is one id or a sequence moved rigidly together; the
        waypoints are poses of a group frame, and every body keeps the pose
        it has now relative to ``waypoints[0]``. A single body standing at
        ``waypoints[0]`` therefore follows the waypoints exactly. Motion
        stops on the first step where a
        moving body penetrates another body deeper than the contact slop;
        step 0 is the spawn check.
        """
        ids = [int(body_ids)] if np.isscalar(body_ids) else [int(b) for b in body_ids]
        waypoints = list(waypoints)
        if not waypoints:
            raise InvalidInputError("waypoints must be non-empty")
        if not speed > 0:
            raise InvalidInputError("speed must be positive")
        if not ids:
            raise InvalidInputError("no bodies to move")
        for b in ids:
            self._check_id(b)
            if self.mode[b] != K.MODE_KINEMATIC:
                raise InvalidInputError(f"body {b} is not kinematic")

        start_inv = waypoints[0].inverse()
        rel = [start_inv @ self.get_pose(b) for b in ids]
        times = self._schedule(waypoints, speed, ids)
        dt = self.config.timestep
        n_steps = int(math.ceil(times[-1] / dt - 1e-9)) if times[-1] > 0 else 0
        traj_pos = np.zeros((n_steps + 1, len(ids), 3))
        traj_quat = np.zeros((n_steps + 1, len(ids), 4))
        for s in range(n_steps + 1):
            g = _interpolate(waypoints, times, min(s * dt, times[-1]))
            for j, b in enumerate(ids):
                p = g @ rel[j]
                traj_quat[s, j] = p.rotation
                traj_pos[s, j] = p.position + p.matrix @ self.com_offset[b]
        f, i = self._params()
        steps, collided, blown = K.run_kinematic(
            *self._state_args(), *self._geom_args(), f, i, *self._ensure_buffers(),
            np.array(ids, dtype=np.int64), traj_pos, traj_quat,
        )
        self.step_count += steps
        if blown >= 0:
            raise NumericBlowupError(int(blown))
        return MoveResult(bool(collided), int(steps) if collided else None, int(steps))

    def _schedule(self, waypoints, speed, ids) -> np.ndarray:
        """Arrival time at each waypoint."""
        reach = max(0.05, float(max(self.bound_r[b] for b in ids)))
        times = [0.0]
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            dist = float(np.linalg.norm(b.position - a.position))
            if dist < 1e-12:
                # pure rotation: move the body's outer surface at the given speed
                d = abs(float(np.dot(a.rotation, b.rotation)))
                dist = 2.0 * math.acos(min(1.0, d)) * reach
            times.append(times[-1] + dist / speed)
        return np.array(times)

    # contacts -----------------------------------------------------------

    def _raw_contacts(self):
        f, _ = self._params()
        buf = self._ensure_buffers()
        n = K.collide(self.kind, self.mode, self.pos, self.quat, self.vel, self.angvel, self.bound_r,
                      *self._geom_args(), f, True, *buf)
        ca, cb, cfeat, cftype, cp, cn, cgap, _ = buf
        return n, ca[:n].copy(), cb[:n].copy(), cfeat[:n].copy(), cp[:n].copy(), cn[:n].copy(), cgap[:n].copy()

    def contacts(self, body_id: int | None = None) -> list[ContactPoint]:
        """Current contact points (separation within the slop)."""
        if body_id is not None:
            self._check_id(body_id)
        n, ca, cb, _, cp, cn, cgap = self._raw_contacts()
        out = []
        for k in range(n):
            if body_id is not None and body_id not in (ca[k], cb[k]):
                continue
            out.append(ContactPoint(int(ca[k]), int(cb[k]), cp[k], cn[k], float(-cgap[k])))
        return out

    def contact_summary(self, body_id: int) -> tuple[int, int, int]:
        """``(n_object, n_agent, n_ground)`` contact counts for one body.

        Raw contacts of one sphere against one body are merged when their
        normals lie within a small cone, so a sphere resting on a
        finely tessellated face counts once.
        """
        self._check_id(body_id)
        n, ca, cb, cfeat, cp, cn, cgap = self._raw_contacts()
        groups: dict[tuple[int, int], list[np.ndarray]] = {}
        cos_tol = math.cos(math.radians(CONTACT_CLUSTER_DEG))
        counts = [0, 0, 0]
        ns = len(self.sph_r)
        for k in range(n):
            a, b = int(ca[k]), int(cb[k])
            if body_id not in (a, b) or a == b:
                continue
            other = a if b == body_id else b
            kind = self.kind[other]
            cat = 2 if kind == K.KIND_GROUND else 1 if kind == K.KIND_SPHERES else 0
            # identify which of our features touches
            if self.kind[a] == K.KIND_SPHERES and self.kind[b] == K.KIND_SPHERES:
                s1, s2 = divmod(int(cfeat[k]), ns)
                own = s1 if a == body_id else s2
            else:
                own = int(cfeat[k])
            key = (own, other)
            normal = cn[k]
            seen = groups.setdefault(key, [])
            if any(float(normal @ m) >= cos_tol for m in seen):
                continue
            seen.append(normal)
            counts[cat] += 1
        return counts[0], counts[1], counts[2]

    # export -------------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-ready description of every body's pose and shape."""
        bodies = []
        for bid in range(self.n_bodies):
            b = self.body(bid)
            entry = {"id": bid, "kind": b.kind, "mode": b.mode, "pose": b.pose.to_dict(),
                     "linear_velocity": b.linear_velocity.tolist(),
                     "angular_velocity": b.angular_velocity.tolist()}
            if b.kind == "sphere_composite":
                entry["spheres"] = [{"offset": o.tolist(), "radius": r} for o, r in b.shape]
            elif b.kind in ("static_mesh", "dynamic_mesh"):
                entry["mesh"] = {"vertices": b.shape.vertices.tolist(), "triangles": b.shape.triangles.tolist()}
            else:
                entry["height"] = self.ground_z
            bodies.append(entry)
        return {"step": self.step_count, "config": self.config.to_dict(), "bodies": bodies}

    def to_obj(self, sphere_subdivisions: int = 8, ground_half_size: float = 1.0) -> str:
        """Every body as world-space geometry in one OBJ document."""
        lines: list[str] = []
        offset = 0

        def emit(name, verts, tris):
            nonlocal offset
            lines.append(f"o {name}")
            lines.extend(f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in verts)
            lines.extend(f"f {a + 1 + offset} {b + 1 + offset} {c + 1 + offset}" for a, b, c in tris)
            offset += len(verts)

        sv, st = _uv_sphere(sphere_subdivisions)
        for bid in range(self.n_bodies):
            kind = self.kind[bid]
            if kind == K.KIND_GROUND:
                h, z = ground_half_size, self.ground_z
                emit(f"body{bid}_ground", [(-h, -h, z), (h, -h, z), (h, h, z), (-h, h, z)], [(0, 1, 2), (0, 2, 3)])
            elif kind == K.KIND_SPHERES:
                centers = self.sphere_centers(bid)
                for j, (c, r) in enumerate(zip(centers, self.sph_r[self.sph_body == bid])):
                    emit(f"body{bid}_sphere{j}", sv * r + c, st)
            else:
                mesh = self._shapes[bid]
                pose = self.get_pose(bid)
                emit(f"body{bid}_{KIND_NAMES[int(kind)]}", pose.apply(mesh.vertices), mesh.triangles)
        return "\n".join(lines) + "\n"


def _uv_sphere(n: int):
    lat = np.linspace(0, np.pi, n + 1)[1:-1]
    lon = np.linspace(0, 2 * np.pi, 2 * n, endpoint=False)
    verts = [(0.0, 0.0, 1.0)]
    for t in lat:
        for p in lon:
            verts.append((np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)))
    verts.append((0.0, 0.0, -1.0))
    m = len(lon)
    tris = []
    for j in range(m):
        tris.append((0, 1 + j, 1 + (j + 1) % m))
    for i in range(len(lat) - 1):
        for j in range(m):
            a = 1 + i * m + j
            b = 1 + i * m + (j + 1) % m
            tris.append((a, a + m, b + m))
            tris.append((a, b + m, b))
    last = len(verts) - 1
    base = 1 + (len(lat) - 1) * m
    for j in range(m):
        tris.append((base + j, last, base + (j + 1) % m))
    return np.array(verts), np.array(tris)


def _interpolate(waypoints: list[Pose], times: np.ndarray, t: float) -> Pose:
    if len(waypoints) == 1 or t <= 0:
        return waypoints[0]
    k = int(np.searchsorted(times, t, side="right")) - 1
    if k >= len(waypoints) - 1:
        return waypoints[-1]
    span = times[k + 1] - times[k]
    u = 0.0 if span <= 0 else (t - times[k]) / span
    a, b = waypoints[k], waypoints[k + 1]
    return Pose(quat_normalize(slerp(a.rotation, b.rotation, u)), a.position + u * (b.position - a.position))
