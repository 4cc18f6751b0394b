"""Hot per-element/per-edge kernels, in two interchangeable flavors.

Every kernel has a numba ``@njit`` loop implementation and a vectorized
pure-numpy fallback.  The active flavor is chosen once at import time from
the environment variable ``SBMROM_NUMBA``:

  * unset / ``auto`` / ``1``: use numba when it is importable,
  * ``0`` / ``off`` / ``false``: force the numpy path.

Both flavors stay importable (``*_numpy`` / ``*_numba``) so tests and the
benchmark in ``benchmarks/bench_kernels.py`` can compare them directly.

Local velocity dofs are ordered component-major: dof ``a*3+i`` is component
``a`` at local node ``i``, matching the component-block global layout.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_FLAG = os.environ.get("SBMROM_NUMBA", "auto").strip().lower()
USE_NUMBA = HAS_NUMBA and _FLAG not in ("0", "off", "false")

_EYE2 = np.eye(2)


# ---------------------------------------------------------------------------
# Stokes volume blocks


def stokes_volume_blocks_numpy(area, grads, h_K, nu, delta, g):
    """Per-element blocks of the interior Stokes terms.

    Returns ``(visc, divb, stab, fg, fq)`` with shapes
    ``(n,6,6), (n,3,6), (n,3,3), (n,6), (n,3)``:
    symmetric-gradient viscous block, divergence block, pressure-gradient
    stabilization block, body-force load and its stabilization counterpart.
    """
    n = area.shape[0]
    gij = np.einsum("nid,njd->nij", grads, grads)
    t1 = _EYE2[None, :, None, :, None] * gij[:, None, :, None, :]
    t2 = grads[:, None, :, :, None] * grads.transpose(0, 2, 1)[:, :, None, None, :]
    visc = (nu * area)[:, None, None, None, None] * (t1 + t2)
    visc = visc.reshape(n, 6, 6)

    cols = -(area / 3.0)[:, None] * grads.transpose(0, 2, 1).reshape(n, 6)
    divb = np.broadcast_to(cols[:, None, :], (n, 3, 6)).copy()

    coef = -delta * h_K**2 / (2.0 * nu) * area
    stab = coef[:, None, None] * gij

    fg = np.empty((n, 6))
    fg[:, 0:3] = (-g[0] * area / 3.0)[:, None]
    fg[:, 3:6] = (-g[1] * area / 3.0)[:, None]
    fq = (-coef)[:, None] * (grads @ np.asarray(g))
    return visc, divb, stab, fg, fq


@njit(cache=True)
def stokes_volume_blocks_numba(area, grads, h_K, nu, delta, g):
    n = area.shape[0]
    visc = np.zeros((n, 6, 6))
    divb = np.zeros((n, 3, 6))
    stab = np.zeros((n, 3, 3))
    fg = np.zeros((n, 6))
    fq = np.zeros((n, 3))
    for e in range(n):
        a_e = area[e]
        coef = -delta * h_K[e] * h_K[e] / (2.0 * nu) * a_e
        for i in range(3):
            for j in range(3):
                gij = grads[e, i, 0] * grads[e, j, 0] + grads[e, i, 1] * grads[e, j, 1]
                stab[e, i, j] = coef * gij
                for a in range(2):
                    for b in range(2):
                        val = grads[e, i, b] * grads[e, j, a]
                        if a == b:
                            val += gij
                        visc[e, a * 3 + i, b * 3 + j] = nu * a_e * val
            for b in range(2):
                for m in range(3):
                    divb[e, m, b * 3 + i] = -a_e / 3.0 * grads[e, i, b]
            fg[e, 0 * 3 + i] = -g[0] * a_e / 3.0
            fg[e, 1 * 3 + i] = -g[1] * a_e / 3.0
            fq[e, i] = -coef * (grads[e, i, 0] * g[0] + grads[e, i, 1] * g[1])
    return visc, divb, stab, fg, fq


# ---------------------------------------------------------------------------
# Stokes surrogate-edge blocks


def stokes_edge_blocks_numpy(G, v, d, w, nt, tau, hK, gD, nu, alpha, beta):
    """Per-edge blocks of the weak embedded-Dirichlet terms.

    Arguments are per surrogate edge: owner-element P1 gradients ``G
    (e,3,2)``, trace values at quad points ``v (e,q,3)``, boundary-shift
    vectors ``d (e,q,2)``, quad weights ``w (e,q)`` (length-scaled), edge
    normals ``nt (e,2)``, true tangents ``tau (e,q,2)``, owner sizes ``hK
    (e,)`` and Dirichlet data at the projected points ``gD (e,q,2)``.

    Returns ``(a_e, b_e, bhat_e, fg_e, fq_e)`` with shapes
    ``(e,6,6), (e,3,6), (e,3,6), (e,6), (e,3)``.
    """
    ne = G.shape[0]
    s = v + np.einsum("eid,eqd->eqi", G, d)
    gn = np.einsum("eid,ed->ei", G, nt)
    sw = np.einsum("eq,eqi->ei", w, s)
    ss = np.einsum("eq,eqi,eqj->eij", w, s, s)
    gt = np.einsum("eid,eqd->eqi", G, tau)
    tt = np.einsum("eq,eqi,eqj->eij", w, gt, gt)
    vv = np.einsum("eq,eqm,eqj->emj", w, v, v)
    gd = np.einsum("ejd,eqd->eqj", G, d)
    vgd = np.einsum("eq,eqm,eqj->emj", w, v, gd)

    # flux factor x[e,a,j,b] = delta_ab*gn_j + G[j,a]*nt_b
    x = _EYE2[None, :, None, :] * gn[:, None, :, None] + np.einsum(
        "eja,eb->eajb", G, nt
    )
    a_t1 = -nu * np.einsum("ei,eajb->eaibj", sw, x)
    a_blk = a_t1 + a_t1.transpose(0, 3, 4, 1, 2)
    diag = (2.0 * nu * alpha / hK)[:, None, None] * ss + (
        2.0 * nu * beta * hK
    )[:, None, None] * tt
    a_blk[:, 0, :, 0, :] += diag
    a_blk[:, 1, :, 1, :] += diag
    a_e = a_blk.reshape(ne, 6, 6)

    b_e = np.einsum("emj,eb->embj", vv, nt).reshape(ne, 3, 6)
    bhat_e = np.einsum("emj,eb->embj", vgd, nt).reshape(ne, 3, 6)

    wgd = np.einsum("eq,eqa->ea", w, gD)
    sgd = np.einsum("eq,eqi,eqa->eia", w, s, gD)
    gig = np.einsum("eid,eq,eqd->ei", G, w, gD)
    fg_e = -nu * (
        np.einsum("ea,ei->eai", wgd, gn) + np.einsum("ei,ea->eai", gig, nt)
    ) + (2.0 * nu * alpha / hK)[:, None, None] * sgd.transpose(0, 2, 1)
    fg_e = fg_e.reshape(ne, 6)

    gdn = np.einsum("eqa,ea->eq", gD, nt)
    fq_e = np.einsum("eq,eq,eqm->em", w, gdn, v)
    return a_e, b_e, bhat_e, fg_e, fq_e


@njit(cache=True)
def stokes_edge_blocks_numba(G, v, d, w, nt, tau, hK, gD, nu, alpha, beta):
    ne = G.shape[0]
    nq = w.shape[1]
    a_e = np.zeros((ne, 6, 6))
    b_e = np.zeros((ne, 3, 6))
    bhat_e = np.zeros((ne, 3, 6))
    fg_e = np.zeros((ne, 6))
    fq_e = np.zeros((ne, 3))
    s = np.zeros((nq, 3))
    gt = np.zeros((nq, 3))
    for e in range(ne):
        pen = 2.0 * nu * alpha / hK[e]
        tng = 2.0 * nu * beta * hK[e]
        for q in range(nq):
            for i in range(3):
                s[q, i] = v[e, q, i] + G[e, i, 0] * d[e, q, 0] + G[e, i, 1] * d[e, q, 1]
                gt[q, i] = G[e, i, 0] * tau[e, q, 0] + G[e, i, 1] * tau[e, q, 1]
        for i in range(3):
            gn_i = G[e, i, 0] * nt[e, 0] + G[e, i, 1] * nt[e, 1]
            for j in range(3):
                gn_j = G[e, j, 0] * nt[e, 0] + G[e, j, 1] * nt[e, 1]
                sw_i = 0.0
                sw_j = 0.0
                ss_ij = 0.0
                tt_ij = 0.0
                vv_ij = 0.0
                vgd_ij = 0.0
                for q in range(nq):
                    sw_i += w[e, q] * s[q, i]
                    sw_j += w[e, q] * s[q, j]
                    ss_ij += w[e, q] * s[q, i] * s[q, j]
                    tt_ij += w[e, q] * gt[q, i] * gt[q, j]
                    vv_ij += w[e, q] * v[e, q, i] * v[e, q, j]
                    gd_j = G[e, j, 0] * d[e, q, 0] + G[e, j, 1] * d[e, q, 1]
                    vgd_ij += w[e, q] * v[e, q, i] * gd_j
                for a in range(2):
                    for b in range(2):
                        val = 0.0
                        # consistency with shifted test function
                        t = G[e, j, a] * nt[e, b]
                        if a == b:
                            t += gn_j
                        val -= nu * sw_i * t
                        # adjoint term with shifted trial function
                        t = G[e, i, b] * nt[e, a]
                        if a == b:
                            t += gn_i
                        val -= nu * sw_j * t
                        if a == b:
                            val += pen * ss_ij + tng * tt_ij
                        a_e[e, a * 3 + i, b * 3 + j] += val
                for b in range(2):
                    b_e[e, i, b * 3 + j] += vv_ij * nt[e, b]
                    bhat_e[e, i, b * 3 + j] += vgd_ij * nt[e, b]
            for q in range(nq):
                gdn = gD[e, q, 0] * nt[e, 0] + gD[e, q, 1] * nt[e, 1]
                fq_e[e, i] += w[e, q] * gdn * v[e, q, i]
                gig = G[e, i, 0] * gD[e, q, 0] + G[e, i, 1] * gD[e, q, 1]
                for a in range(2):
                    fg_e[e, a * 3 + i] += w[e, q] * (
                        -nu * (gD[e, q, a] * gn_i + gig * nt[e, a])
                        + pen * s[q, i] * gD[e, q, a]
                    )
    return a_e, b_e, bhat_e, fg_e, fq_e


# ---------------------------------------------------------------------------
# Scalar (Poisson) blocks for the velocity-enrichment solves


def poisson_volume_blocks_numpy(area, grads):
    """Per-element P1 stiffness blocks ``(n,3,3)`` of the scalar Laplacian."""
    gij = np.einsum("nid,njd->nij", grads, grads)
    return area[:, None, None] * gij


@njit(cache=True)
def poisson_volume_blocks_numba(area, grads):
    n = area.shape[0]
    out = np.zeros((n, 3, 3))
    for e in range(n):
        for i in range(3):
            for j in range(3):
                out[e, i, j] = area[e] * (
                    grads[e, i, 0] * grads[e, j, 0] + grads[e, i, 1] * grads[e, j, 1]
                )
    return out


def poisson_edge_blocks_numpy(G, v, d, w, nt, hK, gdata, alpha):
    """Per-edge blocks of the shifted weak Dirichlet terms for the scalar
    Laplacian: ``(k_e (e,3,3), f_e (e,3))``, with data ``gdata (e,q)``
    evaluated at the projected boundary points."""
    s = v + np.einsum("eid,eqd->eqi", G, d)
    gn = np.einsum("eid,ed->ei", G, nt)
    wv = np.einsum("eq,eqi->ei", w, v)
    ws = np.einsum("eq,eqi->ei", w, s)
    ss = np.einsum("eq,eqi,eqj->eij", w, s, s)
    pen = (alpha / hK)[:, None, None]
    k_e = (
        -np.einsum("ei,ej->eij", wv, gn)
        - np.einsum("ei,ej->eij", gn, ws)
        + pen * ss
    )
    wg = np.einsum("eq,eq->e", w, gdata)
    sg = np.einsum("eq,eqi,eq->ei", w, s, gdata)
    f_e = -gn * wg[:, None] + (alpha / hK)[:, None] * sg
    return k_e, f_e


@njit(cache=True)
def poisson_edge_blocks_numba(G, v, d, w, nt, hK, gdata, alpha):
    ne = G.shape[0]
    nq = w.shape[1]
    k_e = np.zeros((ne, 3, 3))
    f_e = np.zeros((ne, 3))
    s = np.zeros((nq, 3))
    for e in range(ne):
        pen = alpha / hK[e]
        for q in range(nq):
            for i in range(3):
                s[q, i] = v[e, q, i] + G[e, i, 0] * d[e, q, 0] + G[e, i, 1] * d[e, q, 1]
        for i in range(3):
            gn_i = G[e, i, 0] * nt[e, 0] + G[e, i, 1] * nt[e, 1]
            for j in range(3):
                gn_j = G[e, j, 0] * nt[e, 0] + G[e, j, 1] * nt[e, 1]
                acc = 0.0
                for q in range(nq):
                    acc += w[e, q] * (
                        -v[e, q, i] * gn_j - gn_i * s[q, j] + pen * s[q, i] * s[q, j]
                    )
                k_e[e, i, j] = acc
            acc = 0.0
            for q in range(nq):
                acc += w[e, q] * (-gn_i + pen * s[q, i]) * gdata[e, q]
            f_e[e, i] = acc
    return k_e, f_e


# ---------------------------------------------------------------------------
# Closest point on a polyline


def polyline_closest_numpy(points, seg_a, seg_b):
    """Closest point on a segment soup for each query point.

    Returns ``(dist2, idx, t, dist2_alt, idx_alt, t_alt)`` where the ``alt``
    triple is the best candidate on a segment whose closest point differs
    from the winner (used to flag ambiguous projections).
    """
    ab = seg_b - seg_a  # (s,2)
    len2 = np.maximum(np.einsum("sd,sd->s", ab, ab), 1e-300)
    ap = points[:, None, :] - seg_a[None, :, :]  # (m,s,2)
    t = np.clip(np.einsum("msd,sd->ms", ap, ab) / len2[None, :], 0.0, 1.0)
    proj = seg_a[None, :, :] + t[:, :, None] * ab[None, :, :]
    diff = points[:, None, :] - proj
    d2 = np.einsum("msd,msd->ms", diff, diff)
    idx = np.argmin(d2, axis=1)
    m = np.arange(points.shape[0])
    best = d2[m, idx]
    tbest = t[m, idx]
    pbest = proj[m, idx]
    # best candidate at a geometrically different location
    sep2 = np.einsum("msd,msd->ms", proj - pbest[:, None, :], proj - pbest[:, None, :])
    masked = np.where(sep2 > 1e-18, d2, np.inf)
    idx2 = np.argmin(masked, axis=1)
    alt = masked[m, idx2]
    talt = t[m, idx2]
    return best, idx.astype(np.int64), tbest, alt, idx2.astype(np.int64), talt


@njit(cache=True)
def polyline_closest_numba(points, seg_a, seg_b):
    m = points.shape[0]
    ns = seg_a.shape[0]
    dist2 = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    tout = np.empty(m)
    dist2_alt = np.empty(m)
    idx_alt = np.empty(m, dtype=np.int64)
    t_alt = np.empty(m)
    proj = np.empty((ns, 2))
    d2 = np.empty(ns)
    ts = np.empty(ns)
    for k in range(m):
        px, py = points[k, 0], points[k, 1]
        best = np.inf
        ibest = 0
        for s in range(ns):
            ax, ay = seg_a[s, 0], seg_a[s, 1]
            vx, vy = seg_b[s, 0] - ax, seg_b[s, 1] - ay
            len2 = vx * vx + vy * vy
            if len2 < 1e-300:
                t = 0.0
            else:
                t = ((px - ax) * vx + (py - ay) * vy) / len2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
            qx = ax + t * vx
            qy = ay + t * vy
            dd = (px - qx) ** 2 + (py - qy) ** 2
            proj[s, 0] = qx
            proj[s, 1] = qy
            d2[s] = dd
            ts[s] = t
            if dd < best:
                best = dd
                ibest = s
        dist2[k] = best
        idx[k] = ibest
        tout[k] = ts[ibest]
        bx, by = proj[ibest, 0], proj[ibest, 1]
        alt = np.inf
        ialt = ibest
        for s in range(ns):
            sep2 = (proj[s, 0] - bx) ** 2 + (proj[s, 1] - by) ** 2
            if sep2 > 1e-18 and d2[s] < alt:
                alt = d2[s]
                ialt = s
        dist2_alt[k] = alt
        idx_alt[k] = ialt
        t_alt[k] = ts[ialt]
    return dist2, idx, tout, dist2_alt, idx_alt, t_alt


# ---------------------------------------------------------------------------
# Flavor selection

if USE_NUMBA:
    stokes_volume_blocks = stokes_volume_blocks_numba
    stokes_edge_blocks = stokes_edge_blocks_numba
    poisson_volume_blocks = poisson_volume_blocks_numba
    poisson_edge_blocks = poisson_edge_blocks_numba
    polyline_closest = polyline_closest_numba
else:
    stokes_volume_blocks = stokes_volume_blocks_numpy
    stokes_edge_blocks = stokes_edge_blocks_numpy
    poisson_volume_blocks = poisson_volume_blocks_numpy
    poisson_edge_blocks = poisson_edge_blocks_numpy
    polyline_closest = polyline_closest_numpy
