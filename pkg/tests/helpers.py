"""Independent oracle implementations used by the test suite.

Everything here is deliberately written with plain dense loops and its own
derivations so it shares no code path with the package assembly kernels.
"""

import numpy as np

from sbmrom.assembly import ProblemConfig, assemble_poisson, solve_poisson
from sbmrom.geometry import GeometryParams, build_surrogate
from sbmrom.mesh import generate_structured

GAUSS2 = (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0]))


def p1_values(tri_pts, x):
    """Barycentric P1 values by solving the 3x3 vertex system."""
    m = np.vstack([tri_pts.T, np.ones(3)])
    return np.linalg.solve(m, np.array([x[0], x[1], 1.0]))


def p1_gradients(tri_pts):
    """P1 gradients from the inverse vertex map (independent derivation)."""
    m = np.vstack([tri_pts.T, np.ones(3)])
    inv = np.linalg.inv(m)
    return inv[:, 0:2]  # row i: gradient of basis i


def fitted_nitsche_stokes_oracle(mesh, surr, cfg: ProblemConfig):
    """Dense fitted-boundary Nitsche assembly on the surrogate edge set.

    Valid when the embedded boundary lies exactly on mesh edges (zero
    shift).  Returns dense ``(A, B, C, F_g, F_q)`` after the same strong
    outer-boundary treatment, implemented here with dense operations.
    """
    na = surr.n_active_nodes
    g2a = surr.global_to_active
    nu, alpha, beta, delta = (
        cfg.nu,
        cfg.nitsche_alpha,
        cfg.nitsche_beta,
        cfg.stab_delta,
    )
    gbar = np.asarray(cfg.embedded_value, dtype=np.float64)
    A = np.zeros((2 * na, 2 * na))
    B = np.zeros((na, 2 * na))
    C = np.zeros((na, na))
    F_g = np.zeros(2 * na)
    F_q = np.zeros(na)

    for e in surr.active_elements:
        tri = mesh.triangles[e]
        loc = g2a[tri]
        pts = mesh.nodes[tri]
        area = 0.5 * abs(
            (pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
            - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0])
        )
        grad = p1_gradients(pts)
        h_k = max(
            np.linalg.norm(pts[1] - pts[0]),
            np.linalg.norm(pts[2] - pts[1]),
            np.linalg.norm(pts[0] - pts[2]),
        )
        for i in range(3):
            for a in range(2):
                row = a * na + loc[i]
                for j in range(3):
                    for b in range(2):
                        col = b * na + loc[j]
                        val = grad[i, b] * grad[j, a]
                        if a == b:
                            val += grad[i] @ grad[j]
                        A[row, col] += nu * area * val
                    B[loc[j], row] += -area / 3.0 * grad[i, a]
        for i in range(3):
            for j in range(3):
                C[loc[i], loc[j]] += (
                    -delta * h_k**2 / (2.0 * nu) * area * (grad[i] @ grad[j])
                )

    gp, gw = GAUSS2
    for k in range(surr.n_edges):
        n1, n2 = surr.edge_nodes[k]
        owner = surr.edge_owner[k]
        tri = mesh.triangles[owner]
        loc = g2a[tri]
        pts = mesh.nodes[tri]
        grad = p1_gradients(pts)
        h_k = max(
            np.linalg.norm(pts[1] - pts[0]),
            np.linalg.norm(pts[2] - pts[1]),
            np.linalg.norm(pts[0] - pts[2]),
        )
        pa, pb = mesh.nodes[n1], mesh.nodes[n2]
        length = np.linalg.norm(pb - pa)
        nrm = surr.edge_normal[k]
        tang = np.array([-nrm[1], nrm[0]])
        for q in range(2):
            xq = 0.5 * (pa + pb) + 0.5 * gp[q] * (pb - pa)
            wq = 0.5 * length * gw[q]
            phi = p1_values(pts, xq)
            for i in range(3):
                gn_i = grad[i] @ nrm
                gt_i = grad[i] @ tang
                for a in range(2):
                    row = a * na + loc[i]
                    for j in range(3):
                        gn_j = grad[j] @ nrm
                        gt_j = grad[j] @ tang
                        for b in range(2):
                            col = b * na + loc[j]
                            val = 0.0
                            # consistency: -<w x n, 2 nu eps(u)>
                            t = grad[j, a] * nrm[b]
                            if a == b:
                                t += gn_j
                            val -= nu * phi[i] * t
                            # symmetry: -<2 nu eps(w), u x n>
                            t = grad[i, b] * nrm[a]
                            if a == b:
                                t += gn_i
                            val -= nu * phi[j] * t
                            if a == b:
                                val += (
                                    2.0 * nu * alpha / h_k * phi[i] * phi[j]
                                    + 2.0 * nu * beta * h_k * gt_i * gt_j
                                )
                            A[row, col] += wq * val
                        # pressure flux <w.n, p>
                        B[loc[j], row] += wq * phi[i] * phi[j] * nrm[a]
                    # data terms
                    F_g[row] += wq * (
                        -nu * (gbar[a] * gn_i + (grad[i] @ gbar) * nrm[a])
                        + 2.0 * nu * alpha / h_k * phi[i] * gbar[a]
                    )
                F_q[loc[i]] += wq * (gbar @ nrm) * phi[i]

    # strong rows: inlet on the left, slip on top/bottom, symmetric elimination
    constrained = {}
    for n in mesh.boundary_nodes("left"):
        la = g2a[n]
        if la >= 0:
            constrained[la] = cfg.inlet_velocity[0]
            constrained[na + la] = cfg.inlet_velocity[1]
    for tag in ("top", "bottom"):
        for n in mesh.boundary_nodes(tag):
            la = g2a[n]
            if la >= 0:
                constrained.setdefault(na + la, 0.0)
    dofs = np.array(sorted(constrained), dtype=int)
    vals = np.array([constrained[d] for d in dofs])
    lift = np.zeros(2 * na)
    lift[dofs] = vals
    F_g -= A @ lift
    F_q -= B @ lift
    A[dofs, :] = 0.0
    A[:, dofs] = 0.0
    A[dofs, dofs] = 1.0
    B[:, dofs] = 0.0
    F_g[dofs] = vals
    return A, B, C, F_g, F_q


def fitted_poisson_oracle(mesh, load):
    """Dense P1 Poisson solve with strong zero Dirichlet on the whole
    rectangle and a constant volumetric load (2 components)."""
    n = mesh.n_nodes
    K = np.zeros((n, n))
    F = np.zeros((n, 2))
    for e in range(mesh.n_triangles):
        tri = mesh.triangles[e]
        pts = mesh.nodes[tri]
        area = 0.5 * abs(
            (pts[1, 0] - pts[0, 0]) * (pts[2, 1] - pts[0, 1])
            - (pts[1, 1] - pts[0, 1]) * (pts[2, 0] - pts[0, 0])
        )
        grad = p1_gradients(pts)
        for i in range(3):
            for j in range(3):
                K[tri[i], tri[j]] += area * (grad[i] @ grad[j])
            F[tri[i]] += area / 3.0 * np.asarray(load)
    fixed = np.unique(mesh.boundary_edges)
    K[fixed, :] = 0.0
    K[fixed, fixed] = 1.0
    F[fixed] = 0.0
    return np.linalg.solve(K, F)


def poisson_manufactured_error(nx):
    """L2 error of the embedded-Dirichlet scalar solve against the
    manufactured field sin(pi x) sin(pi y) on a circle-embedded unit square."""
    mesh = generate_structured((0.0, 1.0, 0.0, 1.0), nx, nx)
    geom = GeometryParams(kind="circle", mu=(0.5, 0.5), radius=0.25)
    surr = build_surrogate(mesh, geom)
    cfg = ProblemConfig()

    def s_ex(x, y):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    def f(x, y):
        return 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)

    k, rhs = assemble_poisson(mesh, surr, cfg, rhs_fn=f, gamma_data=s_ex)
    sol = solve_poisson(k, rhs)[:, 0]
    s_full = np.zeros(mesh.n_nodes)
    s_full[surr.active_nodes] = sol

    # error with the edge-midpoint rule over the active region
    act = surr.active_elements
    tri = mesh.triangles[act]
    p = mesh.nodes[tri]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    nodal = s_full[tri]
    sh_mid = 0.5 * (nodal + np.roll(nodal, -1, axis=1))
    ex_mid = s_ex(mids[..., 0], mids[..., 1])
    err2 = (mesh.areas[act] / 3.0)[:, None] * (sh_mid - ex_mid) ** 2
    ref2 = (mesh.areas[act] / 3.0)[:, None] * ex_mid**2
    return mesh.h, float(np.sqrt(err2.sum() / ref2.sum()))
