"""Snapshot collection, mass-weighted proper orthogonal decomposition,
velocity-space enrichment, Galerkin projection and reduced solves.

Snapshots are full-order nodal vectors over the whole background mesh with
ghost entries exactly zero; the inner product is the consistent mass matrix
(block-diagonal over the two components for velocity-like fields), so the
correlation matrix, the basis orthonormality and all reported errors use
the same discrete L2 weight.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import BlockSystem, FieldSolution, ProblemConfig, assemble_poisson, solve_poisson
from .errors import InvalidInputError, RomStabilityError, SingularSystemError
from .mesh import TriMesh
from .solver_backend import dense_solve, sym_eig

#: eigenvalues below RANK_TOL * lambda_1 are beyond numerical rank
RANK_TOL = 1e-14


def sample_parameters(box, n: int, strategy: str = "equispaced", seed=None):
    """Training/test points inside a parameter box.

    ``box`` is a sequence of ``(lo, hi)`` pairs; degenerate pairs pin that
    coordinate.  ``equispaced`` covers the endpoints and requires ``n`` to
    be a perfect ``m``-th power for ``m`` free coordinates; ``random``
    draws uniform iid samples reproducibly from ``seed``.
    """
    box = np.atleast_2d(np.asarray(box, dtype=np.float64))
    if box.ndim != 2 or box.shape[1] != 2:
        raise InvalidInputError("parameter box must be a sequence of (lo, hi) pairs")
    if n < 1:
        raise InvalidInputError("need at least one sample")
    if np.any(box[:, 1] < box[:, 0]):
        raise InvalidInputError("empty parameter box (hi < lo)")
    free = np.nonzero(box[:, 1] > box[:, 0])[0]
    out = np.tile(box[:, 0], (n, 1))
    if len(free) == 0:
        return out
    if strategy == "equispaced":
        m = round(n ** (1.0 / len(free)))
        if m ** len(free) != n:
            raise InvalidInputError(
                f"equispaced sampling of a {len(free)}-dim box needs a perfect "
                f"power sample count, got {n}"
            )
        axes = [np.linspace(box[k, 0], box[k, 1], m) for k in free]
        grid = np.meshgrid(*axes, indexing="ij")
        for k, gk in zip(free, grid):
            out[:, k] = gk.reshape(-1)
        return out
    if strategy == "random":
        rng = np.random.default_rng(seed)
        for k in free:
            out[:, k] = rng.uniform(box[k, 0], box[k, 1], size=n)
        return out
    raise InvalidInputError(f"unknown sampling strategy {strategy!r}")


def collect_snapshots(samples, solver):
    """One full-order solve per sample; columns stored in sample order.

    ``solver`` maps a parameter vector to a :class:`FieldSolution`.
    """
    s_u, s_p = [], []
    for k, mu in enumerate(samples):
        try:
            sol = solver(mu)
        except Exception as exc:
            raise type(exc)(
                f"full-order solve failed for sample {k} at mu={tuple(mu)}: {exc}"
            ) from exc
        s_u.append(sol.u)
        s_p.append(sol.p)
    return np.column_stack(s_u), np.column_stack(s_p)


def mass_apply(m, x):
    """Apply the scalar mass matrix blockwise to stacked component vectors."""
    x = np.asarray(x)
    n = m.shape[0]
    if x.shape[0] % n != 0:
        raise InvalidInputError(
            f"vector length {x.shape[0]} is not a multiple of the mass size {n}"
        )
    ncomp = x.shape[0] // n
    if ncomp == 1:
        return m @ x
    out = np.empty_like(x, dtype=np.float64)
    for c in range(ncomp):
        out[c * n : (c + 1) * n] = m @ x[c * n : (c + 1) * n]
    return out


def mass_norm(m, x):
    return float(np.sqrt(np.abs(np.asarray(x) @ mass_apply(m, x))))


@dataclass
class PodBasis:
    """Mass-orthonormal modes with the full eigenvalue spectrum.

    ``modes`` has one column per retained mode, ordered by descending
    eigenvalue; ``eigenvalues`` keeps the whole (clamped) spectrum of the
    snapshot correlation matrix.
    """

    modes: np.ndarray
    eigenvalues: np.ndarray
    inner_product: str
    ncomp: int

    @property
    def n_modes(self) -> int:
        return self.modes.shape[1]

    def truncated(self, k: int) -> np.ndarray:
        if k < 0:
            raise InvalidInputError("mode count must be non-negative")
        return self.modes[:, : min(k, self.n_modes)]


def pod(s, m, n_r: int, inner_product: str = "mass") -> PodBasis:
    """Mass-weighted POD of a snapshot matrix via the correlation
    eigenproblem on the samples.

    Modes are built from the eigenvectors of ``C_ij = (u_i, u_j)_M`` and
    re-normalized to unit M-norm; eigenvalues below ``RANK_TOL * lambda_1``
    are beyond numerical rank and never yield modes (``n_r`` is truncated
    with a warning if it exceeds the rank).
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] < 1:
        raise InvalidInputError("snapshot matrix must be 2-D with >= 1 column")
    n_s = s.shape[1]
    if not (1 <= n_r <= n_s):
        raise InvalidInputError(f"need 1 <= N_r <= {n_s}, got {n_r}")
    ncomp = s.shape[0] // m.shape[0]
    ms = mass_apply(m, s)
    corr = s.T @ ms
    lam, q = sym_eig(corr)
    lam_max = lam[0] if lam.size else 0.0
    if lam_max <= 0.0:
        raise InvalidInputError("snapshot matrix is identically zero")
    if lam.min() < -1e-12 * lam_max:
        raise InvalidInputError("correlation matrix is numerically indefinite")
    lam = np.clip(lam, 0.0, None)
    rank = int(np.sum(lam >= RANK_TOL * lam_max))
    if n_r > rank:
        warnings.warn(
            f"requested {n_r} modes but numerical rank is {rank}; truncating",
            stacklevel=2,
        )
    r = min(n_r, rank)
    modes = s @ q[:, :r]
    norms = np.sqrt(np.einsum("nk,nk->k", modes, mass_apply(m, modes)))
    modes = modes / norms[None, :]
    return PodBasis(modes=modes, eigenvalues=lam, inner_product=inner_product, ncomp=ncomp)


def supremizer_snapshots(s_p, mesh: TriMesh, surrogates, cfg: ProblemConfig):
    """Velocity-enrichment snapshots, one scalar-Laplacian solve pair per
    pressure snapshot on that sample's own surrogate domain.

    The load is the negated piecewise-constant gradient of the pressure
    snapshot; boundary values are zero everywhere.
    """
    s_p = np.asarray(s_p, dtype=np.float64)
    n_s = s_p.shape[1]
    if len(surrogates) != n_s:
        raise InvalidInputError("need one surrogate domain per pressure snapshot")
    n = mesh.n_nodes
    out = np.zeros((2 * n, n_s))
    for k, surr in enumerate(surrogates):
        try:
            p = s_p[:, k]
            act = surr.active_elements
            tri = mesh.triangles[act]
            gp = np.einsum("ei,eid->ed", p[tri], mesh.grads[act])
            kk, ff = assemble_poisson(mesh, surr, cfg, rhs_elem=-gp)
            sol = solve_poisson(kk, ff)
        except SingularSystemError as exc:
            raise SingularSystemError(f"enrichment solve failed for sample {k}: {exc}") from exc
        out[surr.active_nodes, k] = sol[:, 0]
        out[n + surr.active_nodes, k] = sol[:, 1]
    return out


def enrich(basis_u: PodBasis, basis_sup: PodBasis, n_sup: int) -> np.ndarray:
    """Concatenate the velocity modes with the first ``n_sup`` enrichment
    modes.  Each group is internally M-orthonormal; no re-orthonormalization
    is performed across the groups."""
    if n_sup < 0:
        raise InvalidInputError("n_sup must be non-negative")
    if n_sup == 0:
        return basis_u.modes
    if basis_u.modes.shape[0] != basis_sup.modes.shape[0]:
        raise InvalidInputError("bases live on different meshes")
    if basis_u.inner_product != basis_sup.inner_product:
        raise InvalidInputError("bases built with different inner products")
    return np.hstack([basis_u.modes, basis_sup.truncated(n_sup)])


@dataclass
class ReducedSystem:
    """Dense Galerkin-projected saddle-point blocks plus the bases used."""

    Ar: np.ndarray
    Br: np.ndarray
    Bhatr: np.ndarray
    Cr: np.ndarray
    Fgr: np.ndarray
    Fqr: np.ndarray
    basis_u: np.ndarray
    basis_p: np.ndarray
    system: BlockSystem


@dataclass
class ReducedSolution:
    """Reduced coefficients and the reconstructed full-mesh fields."""

    a: np.ndarray
    b: np.ndarray
    u: np.ndarray
    p: np.ndarray


def _restrict_velocity(sys: BlockSystem, lu):
    n_nodes = sys.mesh.n_nodes
    na = sys.n_active
    if lu.shape[0] == 2 * na:
        return lu
    if lu.shape[0] == 2 * n_nodes:
        rows = np.concatenate([sys.active_nodes, n_nodes + sys.active_nodes])
        return lu[rows]
    raise InvalidInputError(
        f"velocity basis rows {lu.shape[0]} match neither the mesh ({2 * n_nodes}) "
        f"nor the active dofs ({2 * na})"
    )


def _restrict_pressure(sys: BlockSystem, lp):
    n_nodes = sys.mesh.n_nodes
    na = sys.n_active
    if lp.shape[0] == na:
        return lp
    if lp.shape[0] == n_nodes:
        return lp[sys.active_nodes]
    raise InvalidInputError(
        f"pressure basis rows {lp.shape[0]} match neither the mesh ({n_nodes}) "
        f"nor the active dofs ({na})"
    )


def project(sys: BlockSystem, lu, lp) -> ReducedSystem:
    """Galerkin projection of all blocks, the stabilization included."""
    lu = np.asarray(lu, dtype=np.float64)
    lp = np.asarray(lp, dtype=np.float64)
    u = _restrict_velocity(sys, lu)
    p = _restrict_pressure(sys, lp)
    au = sys.A @ u
    return ReducedSystem(
        Ar=u.T @ au,
        Br=p.T @ (sys.B @ u),
        Bhatr=p.T @ (sys.Bhat @ u),
        Cr=p.T @ (sys.C @ p),
        Fgr=u.T @ sys.F_g,
        Fqr=p.T @ sys.F_q,
        basis_u=lu,
        basis_p=lp,
        system=sys,
    )


def solve_rom(red: ReducedSystem) -> ReducedSolution:
    """Dense solve of the reduced saddle system and field reconstruction."""
    ku = red.Ar.shape[0]
    kp = red.Cr.shape[0]
    kmat = np.block([[red.Ar, red.Br.T], [red.Br + red.Bhatr, red.Cr]])
    rhs = np.concatenate([red.Fgr, red.Fqr])
    try:
        x = dense_solve(kmat, rhs)
    except SingularSystemError as exc:
        raise RomStabilityError(
            "reduced saddle-point system is singular; the projected velocity "
            "space cannot balance the pressure space - enable supremizer "
            f"enrichment or reduce the pressure mode count ({exc})"
        ) from exc
    a, b = x[:ku], x[ku:]
    sys = red.system
    n_nodes = sys.mesh.n_nodes
    if red.basis_u.shape[0] == 2 * n_nodes:
        u = red.basis_u @ a
    else:
        u = np.zeros(2 * n_nodes)
        rows = np.concatenate([sys.active_nodes, n_nodes + sys.active_nodes])
        u[rows] = red.basis_u @ a
    if red.basis_p.shape[0] == n_nodes:
        p = red.basis_p @ b
    else:
        p = np.zeros(n_nodes)
        p[sys.active_nodes] = red.basis_p @ b
    return ReducedSolution(a=a, b=b, u=u, p=p)


def relative_error(full: FieldSolution, red: ReducedSolution, m):
    """Mass-weighted relative L2 errors over the whole background mesh."""
    nu_ref = mass_norm(m, full.u)
    np_ref = mass_norm(m, full.p)
    if nu_ref == 0.0 or np_ref == 0.0:
        raise InvalidInputError("reference solution has zero norm")
    e_u = mass_norm(m, full.u - red.u) / nu_ref
    e_p = mass_norm(m, full.p - red.p) / np_ref
    return e_u, e_p
