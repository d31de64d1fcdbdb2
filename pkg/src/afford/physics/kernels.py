"""Jitted narrowphase, sequential-impulse solver and integrator.

All state lives in flat arrays owned by :class:`afford.physics.world.World`.
Body kinds and modes are small integers (see ``KIND_*`` / ``MODE_*``).
Contact normals point from body ``a`` to body ``b``; impulses push ``b``
along ``+n``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_GROUND = 0
KIND_STATIC_MESH = 1
KIND_DYNAMIC_MESH = 2
KIND_SPHERES = 3

MODE_DYNAMIC = 0
MODE_KINEMATIC = 1
MODE_STATIC = 2

# contact feature tags
FEAT_SPHERE = 0
FEAT_VERTEX = 1

# layout of the float parameter vector
P_DT, P_GX, P_GY, P_GZ, P_MU, P_MU_ROLL, P_REST, P_SLOP, P_BETA, P_EPS = range(10)
N_FLOAT_PARAMS = 10
# layout of the int parameter vector
I_ITERS, I_WINDOW = range(2)


@njit(cache=True)
def quat_to_mat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    m = np.empty((3, 3))
    m[0, 0] = 1 - 2 * (y * y + z * z)
    m[0, 1] = 2 * (x * y - w * z)
    m[0, 2] = 2 * (x * z + w * y)
    m[1, 0] = 2 * (x * y + w * z)
    m[1, 1] = 1 - 2 * (x * x + z * z)
    m[1, 2] = 2 * (y * z - w * x)
    m[2, 0] = 2 * (x * z - w * y)
    m[2, 1] = 2 * (y * z + w * x)
    m[2, 2] = 1 - 2 * (x * x + y * y)
    return m


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _mat_vec(m, v):
    out = np.empty(3)
    for i in range(3):
        out[i] = m[i, 0] * v[0] + m[i, 1] * v[1] + m[i, 2] * v[2]
    return out


@njit(cache=True)
def _quat_integrate(q, w, dt):
    """q' = exp(w dt / 2) * q, normalized."""
    wn = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    angle = wn * dt
    out = np.empty(4)
    if angle < 1e-300:
        out[:] = q
        return out
    h = 0.5 * angle
    s = math.sin(h) / wn
    dw, dx, dy, dz = math.cos(h), w[0] * s, w[1] * s, w[2] * s
    out[0] = dw * q[0] - dx * q[1] - dy * q[2] - dz * q[3]
    out[1] = dw * q[1] + dx * q[0] + dy * q[3] - dz * q[2]
    out[2] = dw * q[2] - dx * q[3] + dy * q[0] + dz * q[1]
    out[3] = dw * q[3] + dx * q[2] - dy * q[1] + dz * q[0]
    n = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    for i in range(4):
        out[i] /= n
    return out


@njit(cache=True)
def closest_point_triangle(p, a, b, c):
    """Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5)."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    if d1 <= 0.0 and d2 <= 0.0:
        return a.copy()
    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    if d3 >= 0.0 and d4 <= d3:
        return b.copy()
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a + v * ab
    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    if d6 >= 0.0 and d5 <= d6:
        return c.copy()
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a + w * ac
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w


@njit(cache=True)
def _push_contact(n_c, cap, ca, cb, cfeat, cftype, cp, cn, cgap, crad, a, b, feat, ftype, point, normal, gap, rad):
    if n_c >= cap:
        return n_c
    ca[n_c] = a
    cb[n_c] = b
    cfeat[n_c] = feat
    cftype[n_c] = ftype
    for k in range(3):
        cp[n_c, k] = point[k]
        cn[n_c, k] = normal[k]
    cgap[n_c] = gap
    crad[n_c] = rad
    return n_c + 1


@njit(cache=True)
def collide(
    kind, mode, pos, quat, vel, angvel, bound_r,
    sph_body, sph_off, sph_r,
    mv_body, mv_off,
    tri, tri_body,
    g_meta, g_dims, g_start, g_items,
    ground_body, ground_z,
    fparams, report,
    ca, cb, cfeat, cftype, cp, cn, cgap, crad,
):
    """Generate contacts into the preallocated buffers; returns the count.

    With ``report`` set, only contacts within the slop are produced.
    Otherwise speculative contacts are kept out to the distance each pair
    can close within one step.
    """
    dt = fparams[P_DT]
    slop = fparams[P_SLOP]
    nb = kind.shape[0]
    cap = ca.shape[0]
    sweep = np.zeros(nb)
    if not report:
        for i in range(nb):
            if mode[i] != MODE_STATIC:
                v = math.sqrt(_dot(vel[i], vel[i]))
                w = math.sqrt(_dot(angvel[i], angvel[i]))
                sweep[i] = (v + w * bound_r[i]) * dt
    rots = np.empty((nb, 3, 3))
    for i in range(nb):
        rots[i] = quat_to_mat(quat[i])

    ns = sph_body.shape[0]
    centers = np.empty((ns, 3))
    for s in range(ns):
        b = sph_body[s]
        off = _mat_vec(rots[b], sph_off[s])
        for k in range(3):
            centers[s, k] = pos[b, k] + off[k]

    n_c = 0
    up = np.array([0.0, 0.0, 1.0])
    # spheres vs ground
    if ground_body >= 0:
        for s in range(ns):
            b = sph_body[s]
            gap = centers[s, 2] - sph_r[s] - ground_z
            margin = slop + sweep[b]
            if gap < margin:
                pt = centers[s].copy()
                pt[2] -= sph_r[s]
                n_c = _push_contact(n_c, cap, ca, cb, cfeat, cftype, cp, cn, cgap, crad,
                                    ground_body, b, s, FEAT_SPHERE, pt, up, gap, sph_r[s])
        # dynamic-mesh vertices vs ground
        for j in range(mv_body.shape[0]):
            b = mv_body[j]
            w = _mat_vec(rots[b], mv_off[j])
            for k in range(3):
                w[k] += pos[b, k]
            gap = w[2] - ground_z
            if gap < slop + sweep[b]:
                n_c = _push_contact(n_c, cap, ca, cb, cfeat, cftype, cp, cn, cgap, crad,
                                    ground_body, b, j, FEAT_VERTEX, w, up, gap, 0.0)

    # sphere vs sphere on different bodies
    for s1 in range(ns):
        b1 = sph_body[s1]
        for s2 in range(s1 + 1, ns):
            b2 = sph_body[s2]
            if b1 == b2:
                continue
            d = centers[s2] - centers[s1]
            dist2 = _dot(d, d)
            reach = sph_r[s1] + sph_r[s2] + slop + sweep[b1] + sweep[b2]
            if dist2 >= reach * reach:
                continue
            dist = math.sqrt(dist2)
            if dist > 1e-12:
                nrm = d / dist
            else:
                nrm = np.array([1.0, 0.0, 0.0])
            gap = dist - sph_r[s1] - sph_r[s2]
            pt = centers[s1] + nrm * (sph_r[s1] + 0.5 * gap)
            n_c = _push_contact(n_c, cap, ca, cb, cfeat, cftype, cp, cn, cgap, crad,
                                b1, b2, s1 * ns + s2, FEAT_SPHERE, pt, nrm, gap,
                                min(sph_r[s1], sph_r[s2]))

    # spheres vs static triangles through the uniform grid
    nt = tri.shape[0]
    if nt > 0:
        stamp = -np.ones(nt, dtype=np.int64)
        ox, oy, oz, h = g_meta[0], g_meta[1], g_meta[2], g_meta[3]
        nx, ny, nz = g_dims[0], g_dims[1], g_dims[2]
        for s in range(ns):
            b = sph_body[s]
            r = sph_r[s]
            margin = slop + sweep[b]
            reach = r + margin
            c = centers[s]
            lo_x = max(int(math.floor((c[0] - reach - ox) / h)), 0)
            lo_y = max(int(math.floor((c[1] - reach - oy) / h)), 0)
            lo_z = max(int(math.floor((c[2] - reach - oz) / h)), 0)
            hi_x = min(int(math.floor((c[0] + reach - ox) / h)), nx - 1)
            hi_y = min(int(math.floor((c[1] + reach - oy) / h)), ny - 1)
            hi_z = min(int(math.floor((c[2] + reach - oz) / h)), nz - 1)
            first = n_c
            for ix in range(lo_x, hi_x + 1):
                for iy in range(lo_y, hi_y + 1):
                    for iz in range(lo_z, hi_z + 1):
                        cell = (ix * ny + iy) * nz + iz
                        for q in range(g_start[cell], g_start[cell + 1]):
                            t = g_items[q]
                            if stamp[t] == s:
                                continue
                            stamp[t] = s
                            cpt = closest_point_triangle(c, tri[t, 0], tri[t, 1], tri[t, 2])
                            d = c - cpt
                            dist = math.sqrt(_dot(d, d))
                            gap = dist - r
                            if gap >= margin:
                                continue
                            if dist > 1e-12:
                                nrm = d / dist
                            else:
                                nrm = _cross(tri[t, 1] - tri[t, 0], tri[t, 2] - tri[t, 0])
                                nrm = nrm / math.sqrt(_dot(nrm, nrm))
                            tb = tri_body[t]
                            # merge duplicates from triangles sharing the closest point
                            dup = -1
                            for k in range(first, n_c):
                                if ca[k] != tb:
                                    continue
                                e0 = cp[k, 0] - cpt[0]
                                e1 = cp[k, 1] - cpt[1]
                                e2 = cp[k, 2] - cpt[2]
                                if e0 * e0 + e1 * e1 + e2 * e2 < 1e-14:
                                    dup = k
                                    break
                            if dup >= 0:
                                if gap < cgap[dup]:
                                    cgap[dup] = gap
                                    for k in range(3):
                                        cn[dup, k] = nrm[k]
                                continue
                            n_c = _push_contact(n_c, cap, ca, cb, cfeat, cftype, cp, cn, cgap, crad,
                                                tb, b, s, FEAT_SPHERE, cpt, nrm, gap, r)
    return n_c


@njit(cache=True)
def _tangents(n):
    if abs(n[0]) > 0.57735:
        t1 = np.array([n[1], -n[0], 0.0])
    else:
        t1 = np.array([0.0, n[2], -n[1]])
    t1 = t1 / math.sqrt(_dot(t1, t1))
    t2 = _cross(n, t1)
    return t1, t2


@njit(cache=True)
def _k_term(iinv, r, d):
    rd = _cross(r, d)
    return _dot(_cross(_mat_vec(iinv, rd), r), d)


@njit(cache=True)
def _invert3(m):
    det = (m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
           - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
           + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]))
    out = np.zeros((3, 3))
    if abs(det) < 1e-300:
        return out, False
    inv = 1.0 / det
    out[0, 0] = (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]) * inv
    out[0, 1] = (m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]) * inv
    out[0, 2] = (m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]) * inv
    out[1, 0] = (m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]) * inv
    out[1, 1] = (m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]) * inv
    out[1, 2] = (m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]) * inv
    out[2, 0] = (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]) * inv
    out[2, 1] = (m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]) * inv
    out[2, 2] = (m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]) * inv
    return out, True


@njit(cache=True)
def _apply(vel, angvel, inv_mass, iinv_w, a, b, ra, rb, imp):
    for k in range(3):
        vel[b, k] += inv_mass[b] * imp[k]
        vel[a, k] -= inv_mass[a] * imp[k]
    db = _mat_vec(iinv_w[b], _cross(rb, imp))
    da = _mat_vec(iinv_w[a], _cross(ra, imp))
    for k in range(3):
        angvel[b, k] += db[k]
        angvel[a, k] -= da[k]


@njit(cache=True)
def _rel_vel(vel, angvel, a, b, ra, rb):
    vb = vel[b] + _cross(angvel[b], rb)
    va = vel[a] + _cross(angvel[a], ra)
    return vb - va


@njit(cache=True)
def solve_contacts(mode, pos, vel, angvel, inv_mass, iinv_w, fparams, iters, n_c, ca, cb, cftype, cp, cn, cgap, crad):
    dt = fparams[P_DT]
    mu = fparams[P_MU]
    mu_roll = fparams[P_MU_ROLL]
    rest = fparams[P_REST]
    slop = fparams[P_SLOP]
    beta = fparams[P_BETA]

    ra = np.empty((n_c, 3))
    rb = np.empty((n_c, 3))
    t1 = np.empty((n_c, 3))
    t2 = np.empty((n_c, 3))
    kn = np.zeros(n_c)
    kt1 = np.zeros(n_c)
    kt2 = np.zeros(n_c)
    target = np.zeros(n_c)
    kroll = np.zeros((n_c, 3, 3))
    has_roll = np.zeros(n_c, dtype=np.bool_)
    lam_n = np.zeros(n_c)
    lam_t = np.zeros((n_c, 2))
    lam_r = np.zeros((n_c, 3))

    for i in range(n_c):
        a, b = ca[i], cb[i]
        n = cn[i]
        for k in range(3):
            ra[i, k] = cp[i, k] - pos[a, k]
            rb[i, k] = cp[i, k] - pos[b, k]
        k_n = inv_mass[a] + inv_mass[b] + _k_term(iinv_w[a], ra[i], n) + _k_term(iinv_w[b], rb[i], n)
        if k_n < 1e-14:
            continue
        kn[i] = k_n
        u1, u2 = _tangents(n)
        t1[i] = u1
        t2[i] = u2
        kt1[i] = inv_mass[a] + inv_mass[b] + _k_term(iinv_w[a], ra[i], u1) + _k_term(iinv_w[b], rb[i], u1)
        kt2[i] = inv_mass[a] + inv_mass[b] + _k_term(iinv_w[a], ra[i], u2) + _k_term(iinv_w[b], rb[i], u2)
        gap = cgap[i]
        if gap > 0.0:
            tgt = -gap / dt
        else:
            tgt = beta / dt * max(-gap - slop, 0.0)
        if rest > 0.0:
            vn0 = _dot(_rel_vel(vel, angvel, a, b, ra[i], rb[i]), n)
            if vn0 < -1e-3 and gap <= slop:
                tgt = max(tgt, -rest * vn0)
        target[i] = tgt
        if cftype[i] == FEAT_SPHERE and mu_roll > 0.0:
            inv_k, ok = _invert3(iinv_w[a] + iinv_w[b])
            if ok:
                kroll[i] = inv_k
                has_roll[i] = True

    for _ in range(iters):
        for i in range(n_c):
            if kn[i] == 0.0:
                continue
            a, b = ca[i], cb[i]
            n = cn[i]
            dv = _rel_vel(vel, angvel, a, b, ra[i], rb[i])
            vn = _dot(dv, n)
            dl = (target[i] - vn) / kn[i]
            new = max(lam_n[i] + dl, 0.0)
            dl = new - lam_n[i]
            lam_n[i] = new
            if dl != 0.0:
                _apply(vel, angvel, inv_mass, iinv_w, a, b, ra[i], rb[i], dl * n)

            limit = mu * lam_n[i]
            if limit > 0.0 or lam_t[i, 0] != 0.0 or lam_t[i, 1] != 0.0:
                dv = _rel_vel(vel, angvel, a, b, ra[i], rb[i])
                n1 = lam_t[i, 0] - _dot(dv, t1[i]) / kt1[i]
                n2 = lam_t[i, 1] - _dot(dv, t2[i]) / kt2[i]
                mag = math.sqrt(n1 * n1 + n2 * n2)
                if mag > limit:
                    if mag > 0.0:
                        n1 *= limit / mag
                        n2 *= limit / mag
                d1 = n1 - lam_t[i, 0]
                d2 = n2 - lam_t[i, 1]
                lam_t[i, 0] = n1
                lam_t[i, 1] = n2
                _apply(vel, angvel, inv_mass, iinv_w, a, b, ra[i], rb[i], d1 * t1[i] + d2 * t2[i])

            if has_roll[i]:
                rlimit = mu_roll * lam_n[i] * crad[i]
                if rlimit > 0.0 or lam_r[i, 0] != 0.0 or lam_r[i, 1] != 0.0 or lam_r[i, 2] != 0.0:
                    wrel = angvel[b] - angvel[a]
                    dL = -_mat_vec(kroll[i], wrel)
                    newL = lam_r[i] + dL
                    mag = math.sqrt(_dot(newL, newL))
                    if mag > rlimit:
                        if mag > 0.0:
                            newL = newL * (rlimit / mag)
                    dL = newL - lam_r[i]
                    lam_r[i] = newL
                    db = _mat_vec(iinv_w[b], dL)
                    da = _mat_vec(iinv_w[a], dL)
                    for k in range(3):
                        angvel[b, k] += db[k]
                        angvel[a, k] -= da[k]
    return lam_n


@njit(cache=True)
def world_inverse_inertia(mode, quat, inv_inertia_body):
    nb = mode.shape[0]
    out = np.zeros((nb, 3, 3))
    for i in range(nb):
        if mode[i] == MODE_DYNAMIC:
            r = quat_to_mat(quat[i])
            out[i] = r @ inv_inertia_body[i] @ r.T
    return out


@njit(cache=True)
def integrate(mode, pos, quat, vel, angvel, inertia_body, inv_inertia_body, dt):
    for i in range(mode.shape[0]):
        if mode[i] == MODE_STATIC:
            continue
        for k in range(3):
            pos[i, k] += vel[i, k] * dt
        if mode[i] == MODE_KINEMATIC:
            quat[i] = _quat_integrate(quat[i], angvel[i], dt)
            continue
        r0 = quat_to_mat(quat[i])
        mom = r0 @ inertia_body[i] @ r0.T
        ang_mom = _mat_vec(mom, angvel[i])
        ke0 = 0.5 * _dot(angvel[i], ang_mom)
        quat[i] = _quat_integrate(quat[i], angvel[i], dt)
        if ke0 <= 0.0:
            continue
        r1 = quat_to_mat(quat[i])
        w1 = _mat_vec(r1 @ inv_inertia_body[i] @ r1.T, ang_mom)
        ke1 = 0.5 * _dot(w1, ang_mom)
        # rotating the inertia tensor must not change rotational energy
        if ke1 > 0.0:
            w1 = w1 * math.sqrt(ke0 / ke1)
        angvel[i] = w1


@njit(cache=True)
def _step(
    kind, mode, pos, quat, vel, angvel, inv_mass, inertia_body, inv_inertia_body, bound_r,
    sph_body, sph_off, sph_r, mv_body, mv_off, tri, tri_body,
    g_meta, g_dims, g_start, g_items, ground_body, ground_z, fparams, iparams,
    ca, cb, cfeat, cftype, cp, cn, cgap, crad,
):
    """One timestep; returns the id of a body with non-finite state, or -1."""
    dt = fparams[P_DT]
    nb = kind.shape[0]
    for i in range(nb):
        if mode[i] == MODE_DYNAMIC:
            vel[i, 0] += fparams[P_GX] * dt
            vel[i, 1] += fparams[P_GY] * dt
            vel[i, 2] += fparams[P_GZ] * dt
    iinv_w = world_inverse_inertia(mode, quat, inv_inertia_body)
    n_c = collide(kind, mode, pos, quat, vel, angvel, bound_r, sph_body, sph_off, sph_r,
                  mv_body, mv_off, tri, tri_body, g_meta, g_dims, g_start, g_items,
                  ground_body, ground_z, fparams, False,
                  ca, cb, cfeat, cftype, cp, cn, cgap, crad)
    eff_inv_mass = np.where(mode == MODE_DYNAMIC, inv_mass, 0.0)
    solve_contacts(mode, pos, vel, angvel, eff_inv_mass, iinv_w, fparams, iparams[I_ITERS], n_c,
                   ca, cb, cftype, cp, cn, cgap, crad)
    integrate(mode, pos, quat, vel, angvel, inertia_body, inv_inertia_body, dt)
    for i in range(nb):
        if mode[i] == MODE_STATIC:
            continue
        for k in range(3):
            if not (math.isfinite(pos[i, k]) and math.isfinite(vel[i, k]) and math.isfinite(angvel[i, k])):
                return i
        for k in range(4):
            if not math.isfinite(quat[i, k]):
                return i
    return -1


@njit(cache=True)
def run(
    kind, mode, pos, quat, vel, angvel, inv_mass, inertia_body, inv_inertia_body, bound_r,
    sph_body, sph_off, sph_r, mv_body, mv_off, tri, tri_body,
    g_meta, g_dims, g_start, g_items, ground_body, ground_z, fparams, iparams,
    ca, cb, cfeat, cftype, cp, cn, cgap, crad,
    max_steps, settle_mode,
):
    """Advance up to ``max_steps`` steps.

    Returns ``(steps_taken, settled, blown_body)``; ``blown_body`` is -1
    unless a non-finite state appeared. In settle mode the loop stops once
    every dynamic body stayed below the speed threshold for the window.
    """
    eps = fparams[P_EPS]
    window = iparams[I_WINDOW]
    nb = kind.shape[0]
    quiet = 0
    for step in range(max_steps):
        blown = _step(kind, mode, pos, quat, vel, angvel, inv_mass, inertia_body, inv_inertia_body, bound_r,
                      sph_body, sph_off, sph_r, mv_body, mv_off, tri, tri_body,
                      g_meta, g_dims, g_start, g_items, ground_body, ground_z, fparams, iparams,
                      ca, cb, cfeat, cftype, cp, cn, cgap, crad)
        if blown >= 0:
            return step + 1, False, blown
        if settle_mode:
            calm = True
            for i in range(nb):
                if mode[i] != MODE_DYNAMIC:
                    continue
                if _dot(vel[i], vel[i]) >= eps * eps or _dot(angvel[i], angvel[i]) >= eps * eps:
                    calm = False
                    break
            quiet = quiet + 1 if calm else 0
            if quiet >= window:
                return step + 1, True, -1
    return max_steps, False, -1


@njit(cache=True)
def _blocking_contact(moving_mask, slop, n_c, ca, cb, cgap):
    for k in range(n_c):
        if moving_mask[ca[k]] != moving_mask[cb[k]] and cgap[k] < -slop:
            return True
    return False


@njit(cache=True)
def run_kinematic(
    kind, mode, pos, quat, vel, angvel, inv_mass, inertia_body, inv_inertia_body, bound_r,
    sph_body, sph_off, sph_r, mv_body, mv_off, tri, tri_body,
    g_meta, g_dims, g_start, g_items, ground_body, ground_z, fparams, iparams,
    ca, cb, cfeat, cftype, cp, cn, cgap, crad,
    moving, traj_pos, traj_quat,
):
    """Drive the ``moving`` bodies through precomputed poses, one per step.

    Row 0 of the trajectory is the spawn pose. Other bodies are simulated
    normally. Motion stops at the first step where a moving body
    penetrates a non-moving one deeper than the slop. Returns
    ``(steps_taken, collided, blown_body)``.
    """
    dt = fparams[P_DT]
    slop = fparams[P_SLOP]
    nb = kind.shape[0]
    moving_mask = np.zeros(nb, dtype=np.bool_)
    for m in moving:
        moving_mask[m] = True
    for j in range(moving.shape[0]):
        b = moving[j]
        pos[b] = traj_pos[0, j]
        quat[b] = traj_quat[0, j]
        vel[b] = 0.0
        angvel[b] = 0.0
    n_c = collide(kind, mode, pos, quat, vel, angvel, bound_r, sph_body, sph_off, sph_r,
                  mv_body, mv_off, tri, tri_body, g_meta, g_dims, g_start, g_items,
                  ground_body, ground_z, fparams, True,
                  ca, cb, cfeat, cftype, cp, cn, cgap, crad)
    if _blocking_contact(moving_mask, slop, n_c, ca, cb, cgap):
        return 0, True, -1
    n_steps = traj_pos.shape[0] - 1
    for s in range(1, n_steps + 1):
        for j in range(moving.shape[0]):
            b = moving[j]
            for k in range(3):
                vel[b, k] = (traj_pos[s, j, k] - pos[b, k]) / dt
            # angular velocity of the relative rotation q_s * conj(q_prev)
            q0 = quat[b]
            q1 = traj_quat[s, j]
            w = q1[0] * q0[0] + q1[1] * q0[1] + q1[2] * q0[2] + q1[3] * q0[3]
            x = -q1[0] * q0[1] + q1[1] * q0[0] - q1[2] * q0[3] + q1[3] * q0[2]
            y = -q1[0] * q0[2] + q1[1] * q0[3] + q1[2] * q0[0] - q1[3] * q0[1]
            z = -q1[0] * q0[3] - q1[1] * q0[2] + q1[2] * q0[1] + q1[3] * q0[0]
            if w < 0.0:
                w, x, y, z = -w, -x, -y, -z
            sn = math.sqrt(x * x + y * y + z * z)
            if sn > 1e-15:
                ang = 2.0 * math.atan2(sn, w)
                angvel[b, 0] = x / sn * ang / dt
                angvel[b, 1] = y / sn * ang / dt
                angvel[b, 2] = z / sn * ang / dt
            else:
                angvel[b] = 0.0
        blown = _step(kind, mode, pos, quat, vel, angvel, inv_mass, inertia_body, inv_inertia_body, bound_r,
                      sph_body, sph_off, sph_r, mv_body, mv_off, tri, tri_body,
                      g_meta, g_dims, g_start, g_items, ground_body, ground_z, fparams, iparams,
                      ca, cb, cfeat, cftype, cp, cn, cgap, crad)
        if blown >= 0:
            return s, False, blown
        for j in range(moving.shape[0]):
            b = moving[j]
            pos[b] = traj_pos[s, j]
            quat[b] = traj_quat[s, j]
        n_c = collide(kind, mode, pos, quat, vel, angvel, bound_r, sph_body, sph_off, sph_r,
                      mv_body, mv_off, tri, tri_body, g_meta, g_dims, g_start, g_items,
                      ground_body, ground_z, fparams, True,
                      ca, cb, cfeat, cftype, cp, cn, cgap, crad)
        if _blocking_contact(moving_mask, slop, n_c, ca, cb, cgap):
            for j in range(moving.shape[0]):
                vel[moving[j]] = 0.0
                angvel[moving[j]] = 0.0
            return s, True, -1
    for j in range(moving.shape[0]):
        vel[moving[j]] = 0.0
        angvel[moving[j]] = 0.0
    return n_steps, False, -1


@njit(cache=True)
def build_grid(tri, cell):
    """Uniform grid over triangle bounding boxes (CSR layout)."""
    lo = np.empty(3)
    hi = np.empty(3)
    for k in range(3):
        lo[k] = tri[:, :, k].min() - cell
        hi[k] = tri[:, :, k].max() + cell
    dims = np.empty(3, dtype=np.int64)
    for k in range(3):
        dims[k] = max(1, int(math.ceil((hi[k] - lo[k]) / cell)))
    n_cells = dims[0] * dims[1] * dims[2]
    counts = np.zeros(n_cells + 1, dtype=np.int64)
    nt = tri.shape[0]
    rng = np.empty((nt, 6), dtype=np.int64)
    for t in range(nt):
        for k in range(3):
            a = min(tri[t, 0, k], tri[t, 1, k], tri[t, 2, k])
            b = max(tri[t, 0, k], tri[t, 1, k], tri[t, 2, k])
            rng[t, k] = min(max(int(math.floor((a - lo[k]) / cell)), 0), dims[k] - 1)
            rng[t, 3 + k] = min(max(int(math.floor((b - lo[k]) / cell)), 0), dims[k] - 1)
        for ix in range(rng[t, 0], rng[t, 3] + 1):
            for iy in range(rng[t, 1], rng[t, 4] + 1):
                for iz in range(rng[t, 2], rng[t, 5] + 1):
                    counts[(ix * dims[1] + iy) * dims[2] + iz + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    items = np.empty(start[-1], dtype=np.int64)
    for t in range(nt):
        for ix in range(rng[t, 0], rng[t, 3] + 1):
            for iy in range(rng[t, 1], rng[t, 4] + 1):
                for iz in range(rng[t, 2], rng[t, 5] + 1):
                    c = (ix * dims[1] + iy) * dims[2] + iz
                    items[fill[c]] = t
                    fill[c] += 1
    meta = np.array([lo[0], lo[1], lo[2], cell])
    return meta, dims, start, items
