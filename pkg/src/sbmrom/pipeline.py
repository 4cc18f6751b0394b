"""End-to-end study orchestration: offline snapshot/basis construction and
the online sweep over mode counts and test parameters.

The online stage deliberately re-assembles the full-order operators for
every new parameter before projecting them: the reduced system is small,
but its blocks depend on the parameter through the surrogate boundary, so
per-parameter assembly + projection + dense solve is the honest cost model
(no affine-decomposition shortcut is attempted).
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import BlockSystem, FieldSolution, ProblemConfig, assemble_stokes, solve_fom
from .errors import InvalidInputError
from .geometry import GeometryParams, build_surrogate
from .mesh import TriMesh, assemble_mass
from .rom import (
    PodBasis,
    enrich,
    mass_norm,
    pod,
    project,
    relative_error,
    sample_parameters,
    solve_rom,
    supremizer_snapshots,
)


@dataclass
class Study:
    """Validated study description (see config.SCHEMA for the JSON form)."""

    mesh: TriMesh
    physics: ProblemConfig
    geometry_kind: str
    radius: float
    parameter_box: np.ndarray
    sample_count: int
    sample_strategy: str = "equispaced"
    sample_seed: int = 0
    mode_schedule: tuple = (8, 16, 32, 48)
    velocity_ratio: int = 1
    pressure_ratio: int = 6
    supremizer_ratio: int = 4
    use_supremizers: bool = True
    test_count: int = 10
    test_seed: int = 7
    edge_quad_order: int = 2
    timing_repeats: int = 3
    output_dir: str = None

    def geometry_for(self, mu) -> GeometryParams:
        return GeometryParams(kind=self.geometry_kind, mu=tuple(mu), radius=self.radius)


@dataclass
class OfflineData:
    """Everything the online stage needs, as produced by run_offline."""

    samples: np.ndarray
    s_u: np.ndarray
    s_p: np.ndarray
    s_sup: np.ndarray  # zero columns when enrichment is disabled
    basis_u: PodBasis
    basis_p: PodBasis
    basis_sup: PodBasis
    mass: sp.csr_matrix
    timings: dict = field(default_factory=dict)


@dataclass
class OnlineRow:
    """One mode-count row of the online sweep."""

    j: int
    n_u: int
    n_p: int
    n_sup: int
    mean_e_u: float
    mean_e_p: float
    errors_u: list
    errors_p: list
    t_fom_assembly: float
    t_fom_solve: float
    t_projection: float
    t_reduced_solve: float

    @property
    def t_fom(self) -> float:
        return self.t_fom_assembly + self.t_fom_solve

    @property
    def t_rom(self) -> float:
        return self.t_fom_assembly + self.t_projection + self.t_reduced_solve


def assemble_for(study: Study, mu) -> BlockSystem:
    surr = build_surrogate(
        study.mesh, study.geometry_for(mu), edge_quad_order=study.edge_quad_order
    )
    return assemble_stokes(study.mesh, surr, study.physics)


def fom_solve(study: Study, mu) -> FieldSolution:
    return solve_fom(assemble_for(study, mu), mu=tuple(mu))


def _offline_sample(args):
    study, mu, with_sup = args
    surr = build_surrogate(
        study.mesh, study.geometry_for(mu), edge_quad_order=study.edge_quad_order
    )
    sys = assemble_stokes(study.mesh, surr, study.physics)
    sol = solve_fom(sys, mu=tuple(mu))
    if with_sup:
        s_sup = supremizer_snapshots(
            sol.p[:, None], study.mesh, [surr], study.physics
        )[:, 0]
    else:
        s_sup = np.zeros_like(sol.u)
    return sol.u, sol.p, s_sup


def max_mode_counts(study: Study, n_samples: int):
    jmax = max(study.mode_schedule) if study.mode_schedule else 1
    n_u = min(study.velocity_ratio * jmax, n_samples)
    n_p = min(study.pressure_ratio * jmax, n_samples)
    n_sup = min(study.supremizer_ratio * jmax, n_samples)
    return max(n_u, 1), max(n_p, 1), max(n_sup, 1)


def run_offline(study: Study, jobs: int = 1) -> OfflineData:
    """Full-order solves for all training samples plus basis construction."""
    samples = sample_parameters(
        study.parameter_box,
        study.sample_count,
        study.sample_strategy,
        seed=study.sample_seed,
    )
    t0 = time.perf_counter()
    tasks = [(study, mu, study.use_supremizers) for mu in samples]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_offline_sample, tasks))
    else:
        results = [_offline_sample(t) for t in tasks]
    t_snap = time.perf_counter() - t0

    s_u = np.column_stack([r[0] for r in results])
    s_p = np.column_stack([r[1] for r in results])
    s_sup = np.column_stack([r[2] for r in results])

    mass = assemble_mass(study.mesh)
    n_u, n_p, n_sup = max_mode_counts(study, samples.shape[0])
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        # rank saturation of large requested counts is expected at desk scale
        warnings.simplefilter("ignore", UserWarning)
        basis_u = pod(s_u, mass, n_u, inner_product="mass-x2")
        basis_p = pod(s_p, mass, n_p, inner_product="mass")
        if study.use_supremizers and np.abs(s_sup).max() > 0.0:
            basis_sup = pod(s_sup, mass, n_sup, inner_product="mass-x2")
        else:
            basis_sup = PodBasis(
                modes=np.zeros((s_u.shape[0], 0)),
                eigenvalues=np.zeros(samples.shape[0]),
                inner_product="mass-x2",
                ncomp=2,
            )
    t_pod = time.perf_counter() - t0
    return OfflineData(
        samples=samples,
        s_u=s_u,
        s_p=s_p,
        s_sup=s_sup,
        basis_u=basis_u,
        basis_p=basis_p,
        basis_sup=basis_sup,
        mass=mass,
        timings={"snapshots_s": t_snap, "pod_s": t_pod},
    )


def _timed(fn, repeats):
    """Median-of-repeats wall clock; returns (result, seconds)."""
    best = []
    result = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        result = fn()
        best.append(time.perf_counter() - t0)
    return result, float(np.median(best))


def mode_counts(study: Study, off: OfflineData, j: int, use_sup: bool):
    n_u = min(study.velocity_ratio * j, off.basis_u.n_modes)
    n_p = min(study.pressure_ratio * j, off.basis_p.n_modes)
    n_sup = min(study.supremizer_ratio * j, off.basis_sup.n_modes) if use_sup else 0
    return n_u, n_p, n_sup


def run_online(
    study: Study,
    off: OfflineData,
    use_supremizers=None,
    schedule=None,
    test_samples=None,
) -> list:
    """Error/timing sweep over the mode schedule on unseen test parameters.

    Returns one OnlineRow per scheduled mode count; reduced errors are
    averaged over the test set.  Wall-clock figures are medians of
    ``study.timing_repeats`` repetitions.
    """
    use_sup = study.use_supremizers if use_supremizers is None else use_supremizers
    schedule = list(study.mode_schedule if schedule is None else schedule)
    if test_samples is None:
        test_samples = sample_parameters(
            study.parameter_box, study.test_count, "random", seed=study.test_seed
        )
    if len(schedule) == 0 or len(test_samples) == 0:
        return []
    if use_sup and off.basis_sup.n_modes == 0:
        raise InvalidInputError("offline data carries no enrichment basis")

    rows = []
    systems = []
    fom_sols = []
    t_asm_all = []
    t_solve_all = []
    for mu in test_samples:
        sys, t_asm = _timed(lambda m=mu: assemble_for(study, m), study.timing_repeats)
        sol, t_solve = _timed(lambda s=sys: solve_fom(s), study.timing_repeats)
        systems.append(sys)
        fom_sols.append(sol)
        t_asm_all.append(t_asm)
        t_solve_all.append(t_solve)

    for j in schedule:
        n_u, n_p, n_sup = mode_counts(study, off, j, use_sup)
        lu = enrich(
            PodBasis(
                off.basis_u.truncated(n_u),
                off.basis_u.eigenvalues,
                off.basis_u.inner_product,
                2,
            ),
            off.basis_sup,
            n_sup,
        )
        lp = off.basis_p.truncated(n_p)
        e_us, e_ps, t_projs, t_solves = [], [], [], []
        for sys, sol in zip(systems, fom_sols):
            red, t_proj = _timed(lambda s=sys: project(s, lu, lp), study.timing_repeats)
            rsol, t_rsolve = _timed(lambda r=red: solve_rom(r), study.timing_repeats)
            e_u, e_p = relative_error(sol, rsol, off.mass)
            e_us.append(e_u)
            e_ps.append(e_p)
            t_projs.append(t_proj)
            t_solves.append(t_rsolve)
        rows.append(
            OnlineRow(
                j=j,
                n_u=n_u,
                n_p=n_p,
                n_sup=n_sup,
                mean_e_u=float(np.mean(e_us)),
                mean_e_p=float(np.mean(e_ps)),
                errors_u=e_us,
                errors_p=e_ps,
                t_fom_assembly=float(np.mean(t_asm_all)),
                t_fom_solve=float(np.mean(t_solve_all)),
                t_projection=float(np.mean(t_projs)),
                t_reduced_solve=float(np.mean(t_solves)),
            )
        )
    return rows


def reproduce_training_point(study: Study, off: OfflineData, k: int, use_sup=False):
    """Online solve at training sample ``k`` with untruncated bases;
    returns the relative errors against the stored snapshot."""
    mu = off.samples[k]
    sys = assemble_for(study, mu)
    lu = enrich(off.basis_u, off.basis_sup, off.basis_sup.n_modes if use_sup else 0)
    red = project(sys, lu, off.basis_p.modes)
    rsol = solve_rom(red)
    full = FieldSolution(u=off.s_u[:, k], p=off.s_p[:, k], mu=tuple(mu))
    return relative_error(full, rsol, off.mass)
