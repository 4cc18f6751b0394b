"""Invariant suite behind the ``validate`` subcommand.

Each check returns a CheckResult with the measured quantity so failures
are diagnosable from the report alone.  Solve-based checks run on small
internal meshes built over the study rectangle but use the study's own
physics constants, so misconfigured penalties (for example a Nitsche
factor far below the inverse-trace constant) surface here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .assembly import ProblemConfig, assemble_stokes, residual_norm, solve_fom
from .errors import SbmRomError
from .geometry import GeometryParams, build_surrogate, full_domain, rectangle_obstacle
from .mesh import assemble_mass, generate_structured
from .pipeline import Study, reproduce_training_point, run_offline
from .rom import mass_apply, pod


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: str
    tolerance: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: measured={self.measured} tol={self.tolerance}"


def _validation_mesh(study: Study, nx=48, ny=24):
    return generate_structured(study.mesh.rect, nx, ny)


def _center_geometry(study: Study) -> GeometryParams:
    mu = study.parameter_box.mean(axis=1)
    return GeometryParams(kind=study.geometry_kind, mu=tuple(mu), radius=study.radius)


def check_mesh_area(study: Study) -> CheckResult:
    rect = study.mesh.rect
    total = (rect[1] - rect[0]) * (rect[3] - rect[2])
    gap = abs(study.mesh.areas.sum() - total) / total
    return CheckResult("mesh-area-partition", gap <= 1e-12, f"{gap:.2e}", "1e-12")


def check_mass_affine(study: Study) -> CheckResult:
    mesh = _validation_mesh(study)
    m = assemble_mass(mesh)
    rect = mesh.rect
    g = 0.3 + 1.7 * mesh.nodes[:, 0] - 0.9 * mesh.nodes[:, 1]

    def integral():  # exact integral of (a+bx+cy)^2 over the rectangle
        import sympy as sym

        x, y = sym.symbols("x y")
        return float(
            sym.integrate(
                sym.integrate((0.3 + 1.7 * x - 0.9 * y) ** 2, (y, rect[2], rect[3])),
                (x, rect[0], rect[1]),
            )
        )

    exact = integral()
    rel = abs(g @ (m @ g) - exact) / exact
    return CheckResult("mass-affine-interpolant", rel <= 1e-12, f"{rel:.2e}", "1e-12")


def check_geometry(study: Study, n_samples=25, seed=123):
    rng = np.random.default_rng(seed)
    box = study.parameter_box
    worst_dot = np.inf
    worst_res = 0.0
    for _ in range(n_samples):
        mu = [rng.uniform(lo, hi) if hi > lo else lo for lo, hi in box]
        geom = GeometryParams(kind=study.geometry_kind, mu=tuple(mu), radius=study.radius)
        surr = build_surrogate(study.mesh, geom, study.edge_quad_order)
        dots = np.einsum("eqd,ed->eq", surr.proj_n, surr.edge_normal)
        worst_dot = min(worst_dot, float(dots.min()))
        if study.geometry_kind == "circle":
            x = surr.qpoints + surr.proj_d
            res = np.abs(np.linalg.norm(x - np.asarray(mu), axis=2) - study.radius)
            worst_res = max(worst_res, float(res.max()))
    results = [
        CheckResult(
            "geometry-normal-compatibility",
            worst_dot >= -1e-12,
            f"min n.n_edge={worst_dot:.3e}",
            ">= -1e-12",
        )
    ]
    if study.geometry_kind == "circle":
        results.append(
            CheckResult(
                "geometry-projection-residual",
                worst_res <= 1e-10,
                f"{worst_res:.2e}",
                "1e-10",
            )
        )
    return results


def check_assembly_symmetry(study: Study) -> CheckResult:
    mesh = _validation_mesh(study)
    surr = build_surrogate(mesh, _center_geometry(study), study.edge_quad_order)
    sys = assemble_stokes(mesh, surr, study.physics)
    rel = np.abs(sys.A - sys.A.T).max() / np.abs(sys.A).max()
    return CheckResult("assembly-A-symmetry", rel <= 1e-12, f"{rel:.2e}", "1e-12")


def check_velocity_coercivity(study: Study) -> CheckResult:
    mesh = _validation_mesh(study)
    surr = build_surrogate(mesh, _center_geometry(study), study.edge_quad_order)
    sys = assemble_stokes(mesh, surr, study.physics)
    w = np.linalg.eigvalsh(sys.A.toarray())
    return CheckResult(
        "assembly-velocity-coercivity",
        w[0] > 0.0,
        f"min eig={w[0]:.3e}",
        "> 0 (weak-penalty coercivity)",
    )


def _dense_fitted_reference(mesh, surr, cfg: ProblemConfig):
    """Independent dense Nitsche velocity block for the zero-shift limit."""
    na = surr.n_active_nodes
    g2a = surr.global_to_active
    nu, alpha, beta = cfg.nu, cfg.nitsche_alpha, cfg.nitsche_beta
    a = np.zeros((2 * na, 2 * na))
    for e in surr.active_elements:
        tri = mesh.triangles[e]
        loc = g2a[tri]
        grad = mesh.grads[e]
        area = mesh.areas[e]
        for i in range(3):
            for j in range(3):
                gij = grad[i] @ grad[j]
                for c1 in range(2):
                    for c2 in range(2):
                        val = grad[i, c2] * grad[j, c1]
                        if c1 == c2:
                            val += gij
                        a[c1 * na + loc[i], c2 * na + loc[j]] += nu * area * val
    gp = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    for k in range(surr.n_edges):
        n1, n2 = surr.edge_nodes[k]
        owner = surr.edge_owner[k]
        tri = mesh.triangles[owner]
        loc = g2a[tri]
        grad = mesh.grads[owner]
        h_k = mesh.h_K[owner]
        pa, pb = mesh.nodes[n1], mesh.nodes[n2]
        length = np.linalg.norm(pb - pa)
        nrm = surr.edge_normal[k]
        tng = np.array([-nrm[1], nrm[0]])
        cen = mesh.nodes[tri].mean(axis=0)
        for q in range(2):
            xq = 0.5 * (pa + pb) + 0.5 * gp[q] * (pb - pa)
            wq = 0.5 * length
            phi = 1.0 / 3.0 + grad @ (xq - cen)
            for i in range(3):
                gn_i = grad[i] @ nrm
                gt_i = grad[i] @ tng
                for j in range(3):
                    gn_j = grad[j] @ nrm
                    gt_j = grad[j] @ tng
                    for c1 in range(2):
                        for c2 in range(2):
                            val = 0.0
                            t = grad[j, c1] * nrm[c2]
                            if c1 == c2:
                                t += gn_j
                            val -= nu * phi[i] * t
                            t = grad[i, c2] * nrm[c1]
                            if c1 == c2:
                                t += gn_i
                            val -= nu * phi[j] * t
                            if c1 == c2:
                                val += (
                                    2 * nu * cfg.nitsche_alpha / h_k * phi[i] * phi[j]
                                    + 2 * nu * beta * h_k * gt_i * gt_j
                                )
                            a[c1 * na + loc[i], c2 * na + loc[j]] += wq * val
    return a


def check_fitted_limit(study: Study) -> CheckResult:
    rect = study.mesh.rect
    mesh = generate_structured(rect, 16, 8)
    xs = np.linspace(rect[0], rect[1], 17)
    ys = np.linspace(rect[2], rect[3], 9)
    box = rectangle_obstacle(xs[6], xs[10], ys[3], ys[5])
    surr = build_surrogate(mesh, box, study.edge_quad_order)
    sys_pre = _assemble_without_constraints(mesh, surr, study.physics)
    ref = _dense_fitted_reference(mesh, surr, study.physics)
    rel = np.abs(sys_pre - ref).max() / np.abs(ref).max()
    return CheckResult("assembly-fitted-limit", rel <= 1e-12, f"{rel:.2e}", "1e-12")


def _assemble_without_constraints(mesh, surr, cfg):
    """Velocity block before strong rows, for the fitted-limit comparison."""
    na = surr.n_active_nodes
    act = surr.active_elements
    loc = surr.global_to_active[mesh.triangles[act]]
    visc, _, _, _, _ = kernels.stokes_volume_blocks(
        mesh.areas[act], mesh.grads[act], mesh.h_K[act], cfg.nu, cfg.stab_delta,
        np.asarray(cfg.body_force, dtype=np.float64),
    )
    vdofs = np.hstack([loc, loc + na])
    a = sp.coo_matrix(
        (
            visc.reshape(-1),
            (np.repeat(vdofs, 6, axis=1).reshape(-1), np.tile(vdofs, (1, 6)).reshape(-1)),
        ),
        shape=(2 * na, 2 * na),
    ).tocsr()
    owner_tris = mesh.triangles[surr.edge_owner]
    eloc = surr.global_to_active[owner_tris]
    ne, nq = surr.qweights.shape
    gD = np.zeros((ne, nq, 2))
    a_e, _, _, _, _ = kernels.stokes_edge_blocks(
        np.ascontiguousarray(mesh.grads[surr.edge_owner]),
        np.ascontiguousarray(surr.traces),
        np.ascontiguousarray(surr.proj_d),
        np.ascontiguousarray(surr.qweights),
        np.ascontiguousarray(surr.edge_normal),
        np.ascontiguousarray(surr.proj_tau),
        np.ascontiguousarray(surr.edge_h),
        gD,
        cfg.nu,
        cfg.nitsche_alpha,
        cfg.nitsche_beta,
    )
    evdofs = np.hstack([eloc, eloc + na])
    a = a + sp.coo_matrix(
        (
            a_e.reshape(-1),
            (
                np.repeat(evdofs, 6, axis=1).reshape(-1),
                np.tile(evdofs, (1, 6)).reshape(-1),
            ),
        ),
        shape=(2 * na, 2 * na),
    ).tocsr()
    return a.toarray()


def check_uniform_channel(study: Study) -> CheckResult:
    mesh = _validation_mesh(study)
    sys = assemble_stokes(mesh, full_domain(mesh, study.edge_quad_order), study.physics)
    sol = solve_fom(sys)
    n = mesh.n_nodes
    gx, gy = study.physics.inlet_velocity
    dev = max(
        np.abs(sol.u[:n] - gx).max(),
        np.abs(sol.u[n:] - gy).max(),
        np.abs(sol.p).max(),
    )
    return CheckResult("assembly-uniform-channel", dev <= 1e-9, f"{dev:.2e}", "1e-9")


def check_solution(study: Study):
    mesh = _validation_mesh(study)
    surr = build_surrogate(mesh, _center_geometry(study), study.edge_quad_order)
    sys = assemble_stokes(mesh, surr, study.physics)
    sol = solve_fom(sys)
    res = residual_norm(sys, sol)
    n = mesh.n_nodes
    ghost_max = max(
        np.abs(sol.u[surr.ghost_nodes]).max(initial=0.0),
        np.abs(sol.u[n + surr.ghost_nodes]).max(initial=0.0),
        np.abs(sol.p[surr.ghost_nodes]).max(initial=0.0),
    )
    return [
        CheckResult("assembly-momentum-residual", res <= 1e-10, f"{res:.2e}", "1e-10"),
        CheckResult(
            "solution-ghost-zeros", ghost_max == 0.0, f"{ghost_max:.1e}", "exactly 0"
        ),
    ]


def check_pod(study: Study):
    mesh = generate_structured(study.mesh.rect, 12, 6)
    m = assemble_mass(mesh)
    rng = np.random.default_rng(99)
    base = rng.normal(size=(mesh.n_nodes, 5))
    s = base @ (rng.normal(size=(5, 20)) * (0.4 ** np.arange(5))[:, None])
    basis = pod(s, m, 20)
    gram = basis.modes.T @ mass_apply(m, basis.modes)
    ortho = np.abs(gram - np.eye(basis.n_modes)).max()
    worst = 0.0
    for n_r in range(1, basis.n_modes + 1):
        modes = basis.truncated(n_r)
        err = s - modes @ (modes.T @ mass_apply(m, s))
        energy = float(np.einsum("nk,nk->", err, mass_apply(m, err)))
        tail = float(basis.eigenvalues[n_r:].sum())
        denom = max(tail, 1e-12 * basis.eigenvalues[0])
        worst = max(worst, abs(energy - tail) / denom)
    return [
        CheckResult("pod-orthonormality", ortho <= 1e-8, f"{ortho:.2e}", "1e-8"),
        CheckResult("pod-optimality", worst <= 1e-8, f"{worst:.2e}", "1e-8 relative"),
    ]


def check_rom_reproduction(study: Study) -> CheckResult:
    mesh = _validation_mesh(study)
    box = study.parameter_box.copy()
    mini = Study(
        mesh=mesh,
        physics=study.physics,
        geometry_kind=study.geometry_kind,
        radius=study.radius,
        parameter_box=box,
        sample_count=4,
        sample_strategy="equispaced",
        sample_seed=0,
        mode_schedule=(4,),
        velocity_ratio=1,
        pressure_ratio=1,
        supremizer_ratio=1,
        use_supremizers=False,
        timing_repeats=1,
    )
    try:
        off = run_offline(mini)
        e_u, _ = reproduce_training_point(mini, off, 1)
    except SbmRomError as exc:
        return CheckResult("rom-training-reproduction", False, f"error: {exc}", "1e-6")
    return CheckResult("rom-training-reproduction", e_u <= 1e-6, f"{e_u:.2e}", "1e-6")


def run_validation(study: Study):
    """The full invariant suite; returns one CheckResult per check."""
    results = [check_mesh_area(study), check_mass_affine(study)]
    results.extend(check_geometry(study))
    results.append(check_assembly_symmetry(study))
    results.append(check_velocity_coercivity(study))
    results.append(check_fitted_limit(study))
    results.append(check_uniform_channel(study))
    results.extend(check_solution(study))
    results.extend(check_pod(study))
    results.append(check_rom_reproduction(study))
    return results
