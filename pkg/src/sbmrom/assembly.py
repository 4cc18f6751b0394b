"""Block assembly of the embedded-boundary Stokes system and the scalar
Poisson solver used for the velocity-enrichment fields.

Unknowns live on active nodes only.  Velocity dofs are component-blocked:
dof ``a * n_active + i`` is component ``a`` at active node ``i``.  The
Stokes system has the saddle structure::

    [ A   B^T ] [u]   [F_g]
    [ B+Bh  C ] [p] = [F_q]

where ``A`` collects the viscous terms plus the weak embedded-Dirichlet
terms (consistency, adjoint and penalty contributions are written so that
``A`` is exactly symmetric), ``B`` the divergence/pressure coupling with
its boundary flux, ``Bh`` the boundary-shift flux correction and ``C`` the
pressure-gradient stabilization that makes the equal-order pair usable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import InvalidInputError, SingularSystemError
from .geometry import SurrogateDomain
from .mesh import TriMesh
from .solver_backend import SparseFactor


@dataclass(frozen=True)
class ProblemConfig:
    """Physical and numerical constants of the flow problem."""

    nu: float = 1.0
    body_force: tuple = (0.0, 0.0)
    inlet_velocity: tuple = (1.0, 0.0)
    outflow_traction: tuple = (0.0, 0.0)
    embedded_value: tuple = (0.0, 0.0)
    nitsche_alpha: float = 10.0
    nitsche_beta: float = 1.0
    stab_delta: float = 0.1

    def __post_init__(self):
        if self.nu <= 0.0:
            raise InvalidInputError("nu must be positive")
        if self.nitsche_alpha <= 0.0:
            raise InvalidInputError("nitsche_alpha must be positive")
        if self.nitsche_beta < 0.0:
            raise InvalidInputError("nitsche_beta must be non-negative")
        if self.stab_delta <= 0.0:
            raise InvalidInputError("stab_delta must be positive")


@dataclass
class BlockSystem:
    """Assembled sparse blocks in active-node numbering."""

    A: sp.csr_matrix
    B: sp.csr_matrix
    Bhat: sp.csr_matrix
    C: sp.csr_matrix
    F_g: np.ndarray
    F_q: np.ndarray
    active_nodes: np.ndarray
    global_to_active: np.ndarray
    mesh: TriMesh
    surrogate: SurrogateDomain

    @property
    def n_active(self) -> int:
        return self.active_nodes.shape[0]

    def full_matrix(self) -> sp.csc_matrix:
        return sp.bmat(
            [[self.A, self.B.T], [self.B + self.Bhat, self.C]], format="csc"
        )

    def full_rhs(self) -> np.ndarray:
        return np.concatenate([self.F_g, self.F_q])

    def export_coo(self, path):
        """Dump all blocks of the full matrix as ``row col value`` text."""
        coo = self.full_matrix().tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {float(v)!r}\n")


@dataclass
class FieldSolution:
    """Full-order fields scattered to the whole background mesh.

    ``u`` is component-blocked of length ``2 n_nodes``, ``p`` of length
    ``n_nodes``; ghost-node entries are exactly zero.
    """

    u: np.ndarray
    p: np.ndarray
    mu: tuple = None


def _scatter(blocks, rows, cols, shape):
    m = sp.coo_matrix(
        (blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=shape
    ).tocsr()
    m.sum_duplicates()
    return m


def _edge_arrays(surr: SurrogateDomain):
    mesh = surr.mesh
    owner_tris = mesh.triangles[surr.edge_owner]
    loc = surr.global_to_active[owner_tris]
    grads = mesh.grads[surr.edge_owner]
    return owner_tris, loc, grads


def assemble_stokes(
    mesh: TriMesh, surr: SurrogateDomain, cfg: ProblemConfig
) -> BlockSystem:
    """Assemble the stabilized Stokes blocks on the active region.

    Strong conditions are applied on the outer rectangle: the configured
    inlet velocity on the left edge, zero normal velocity (slip) on top and
    bottom, natural outflow on the right.  The embedded boundary enters
    weakly through the surrogate edges.
    """
    if surr.mesh is not mesh:
        raise InvalidInputError("surrogate domain was built on a different mesh")
    if surr.n_edges == 0 and surr.ghost_elements.size > 0:
        raise InvalidInputError("empty surrogate boundary")
    na = surr.n_active_nodes
    act = surr.active_elements
    loc = surr.global_to_active[mesh.triangles[act]]  # (n_act, 3)
    if loc.min() < 0:
        raise InvalidInputError("active element references a ghost node")

    g = np.asarray(cfg.body_force, dtype=np.float64)
    visc, divb, stab, fg_vol, fq_vol = kernels.stokes_volume_blocks(
        mesh.areas[act], mesh.grads[act], mesh.h_K[act], cfg.nu, cfg.stab_delta, g
    )

    vdofs = np.hstack([loc, loc + na])  # (n_act, 6), component-major
    a_rows = np.repeat(vdofs, 6, axis=1)
    a_cols = np.tile(vdofs, (1, 6))
    A = _scatter(visc, a_rows, a_cols, (2 * na, 2 * na))

    b_rows = np.repeat(loc, 6, axis=1)
    b_cols = np.tile(vdofs, (1, 3))
    B = _scatter(divb, b_rows, b_cols, (na, 2 * na))

    c_rows = np.repeat(loc, 3, axis=1)
    c_cols = np.tile(loc, (1, 3))
    C = _scatter(stab, c_rows, c_cols, (na, na))

    F_g = np.zeros(2 * na)
    F_q = np.zeros(na)
    np.add.at(F_g, vdofs.reshape(-1), fg_vol.reshape(-1))
    np.add.at(F_q, loc.reshape(-1), fq_vol.reshape(-1))

    # surrogate-edge terms
    if surr.n_edges > 0:
        _, eloc, egrads = _edge_arrays(surr)
        ne, nq = surr.qweights.shape
        gD = np.broadcast_to(
            np.asarray(cfg.embedded_value, dtype=np.float64), (ne, nq, 2)
        ).copy()
        a_e, b_e, bhat_e, fg_e, fq_e = kernels.stokes_edge_blocks(
            np.ascontiguousarray(egrads),
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
        A = A + _scatter(
            a_e, np.repeat(evdofs, 6, axis=1), np.tile(evdofs, (1, 6)), (2 * na, 2 * na)
        )
        B = B + _scatter(
            b_e, np.repeat(eloc, 6, axis=1), np.tile(evdofs, (1, 3)), (na, 2 * na)
        )
        Bhat = _scatter(
            bhat_e, np.repeat(eloc, 6, axis=1), np.tile(evdofs, (1, 3)), (na, 2 * na)
        )
        np.add.at(F_g, evdofs.reshape(-1), fg_e.reshape(-1))
        np.add.at(F_q, eloc.reshape(-1), fq_e.reshape(-1))
    else:
        Bhat = sp.csr_matrix((na, 2 * na))

    # natural outflow traction on the fitted right edge (zero by default)
    g_n = np.asarray(cfg.outflow_traction, dtype=np.float64)
    if np.any(g_n != 0.0):
        mask = mesh.boundary_tags == "right"
        for n1, n2 in mesh.boundary_edges[mask]:
            l1, l2 = surr.global_to_active[n1], surr.global_to_active[n2]
            length = np.linalg.norm(mesh.nodes[n2] - mesh.nodes[n1])
            for a in range(2):
                for l in (l1, l2):
                    if l >= 0:
                        F_g[a * na + l] += 0.5 * length * g_n[a]

    dofs, vals = _strong_velocity_constraints(mesh, surr, cfg)
    A, B, Bhat, F_g, F_q = _constrain_velocity(A, B, Bhat, F_g, F_q, dofs, vals)

    sys = BlockSystem(
        A=A,
        B=B,
        Bhat=Bhat,
        C=C,
        F_g=F_g,
        F_q=F_q,
        active_nodes=surr.active_nodes,
        global_to_active=surr.global_to_active,
        mesh=mesh,
        surrogate=surr,
    )
    nnz_rows = (sys.full_matrix() != 0).sum(axis=1)
    if nnz_rows.min() == 0:
        raise SingularSystemError(
            f"zero row {int(np.argmin(nnz_rows))} after constraint application"
        )
    return sys


def _strong_velocity_constraints(mesh, surr, cfg):
    """Velocity dofs pinned on the outer rectangle: inlet on the left edge,
    zero normal component on top/bottom."""
    na = surr.n_active_nodes
    g2a = surr.global_to_active
    assigned = {}
    gx, gy = cfg.inlet_velocity
    for n in mesh.boundary_nodes("left"):
        la = g2a[n]
        if la >= 0:
            assigned[la] = gx
            assigned[na + la] = gy
    for tag in ("top", "bottom"):
        for n in mesh.boundary_nodes(tag):
            la = g2a[n]
            if la >= 0:
                assigned.setdefault(na + la, 0.0)
    dofs = np.fromiter(assigned.keys(), dtype=np.int64)
    vals = np.fromiter(assigned.values(), dtype=np.float64)
    order = np.argsort(dofs)
    return dofs[order], vals[order]


def _constrain_velocity(A, B, Bhat, F_g, F_q, dofs, vals):
    """Symmetric elimination: lift the data, zero rows+columns, unit diagonal."""
    n = A.shape[0]
    lift = np.zeros(n)
    lift[dofs] = vals
    F_g = F_g - A @ lift
    F_q = F_q - (B @ lift + Bhat @ lift)
    keep = np.ones(n)
    keep[dofs] = 0.0
    dk = sp.diags(keep)
    A = (dk @ A @ dk).tocsr() + sp.coo_matrix(
        (np.ones(dofs.shape[0]), (dofs, dofs)), shape=A.shape
    ).tocsr()
    B = (B @ dk).tocsr()
    Bhat = (Bhat @ dk).tocsr()
    F_g[dofs] = vals
    for m in (A, B, Bhat):
        m.eliminate_zeros()
        m.sum_duplicates()
    return A, B, Bhat, F_g, F_q


def solve_fom(sys: BlockSystem, mu=None) -> FieldSolution:
    """Sparse direct solve of the full saddle system, scattered to the
    whole background mesh with ghost nodes zeroed."""
    na = sys.n_active
    x = SparseFactor(sys.full_matrix()).solve(sys.full_rhs())
    n_nodes = sys.mesh.n_nodes
    u = np.zeros(2 * n_nodes)
    p = np.zeros(n_nodes)
    u[sys.active_nodes] = x[:na]
    u[n_nodes + sys.active_nodes] = x[na : 2 * na]
    p[sys.active_nodes] = x[2 * na :]
    return FieldSolution(u=u, p=p, mu=mu)


def restrict_solution(sys: BlockSystem, sol: FieldSolution) -> np.ndarray:
    """Gather a full-mesh solution back into the active unknown vector."""
    n_nodes = sys.mesh.n_nodes
    return np.concatenate(
        [
            sol.u[sys.active_nodes],
            sol.u[n_nodes + sys.active_nodes],
            sol.p[sys.active_nodes],
        ]
    )


def residual_norm(sys: BlockSystem, sol: FieldSolution) -> float:
    """Relative residual of the assembled system at a scattered solution."""
    rhs = sys.full_rhs()
    r = sys.full_matrix() @ restrict_solution(sys, sol) - rhs
    return float(np.linalg.norm(r) / np.linalg.norm(rhs))


def assemble_poisson(
    mesh: TriMesh,
    surr: SurrogateDomain,
    cfg: ProblemConfig,
    rhs_elem=None,
    rhs_fn=None,
    gamma_data=None,
    outer_data=None,
):
    """Scalar Laplacian with shifted weak Dirichlet data on the surrogate
    edges and strong Dirichlet rows on the outer rectangle.

    ``rhs_elem`` is an ``(n_active_elements, ncomp)`` array of per-element
    constant loads (the enrichment solves pass the negated pressure-mode
    gradient); ``rhs_fn`` alternatively integrates a callable load with the
    edge-midpoint rule.  ``gamma_data``/``outer_data`` are optional callables
    for inhomogeneous boundary values (both default to zero, as the
    enrichment problem requires).

    Returns ``(K, F)`` with ``K`` in active numbering and ``F`` of shape
    ``(n_active_nodes, ncomp)``.
    """
    na = surr.n_active_nodes
    act = surr.active_elements
    loc = surr.global_to_active[mesh.triangles[act]]
    areas = mesh.areas[act]
    grads = mesh.grads[act]

    stiff = kernels.poisson_volume_blocks(areas, grads)
    K = _scatter(stiff, np.repeat(loc, 3, axis=1), np.tile(loc, (1, 3)), (na, na))

    if rhs_elem is not None:
        rhs_elem = np.atleast_2d(np.asarray(rhs_elem, dtype=np.float64))
        if rhs_elem.shape[0] != act.shape[0]:
            raise InvalidInputError(
                "rhs_elem must provide one constant load per active element"
            )
        ncomp = rhs_elem.shape[1]
        F = np.zeros((na, ncomp))
        scaled = (areas / 3.0)[:, None] * rhs_elem  # (n, c), same for all 3 nodes
        for c in range(ncomp):
            np.add.at(
                F[:, c], loc.reshape(-1), np.repeat(scaled[:, c], 3)
            )
    elif rhs_fn is not None:
        ncomp = 1
        F = np.zeros((na, 1))
        p = mesh.nodes[mesh.triangles[act]]
        mids = 0.5 * (p + np.roll(p, -1, axis=1))  # midpoints 01, 12, 20
        fv = np.array(
            [rhs_fn(mids[:, k, 0], mids[:, k, 1]) for k in range(3)]
        ).T  # (n,3)
        w = areas / 3.0
        node_vals = np.stack(
            [
                0.5 * (fv[:, 0] + fv[:, 2]) * w,
                0.5 * (fv[:, 0] + fv[:, 1]) * w,
                0.5 * (fv[:, 1] + fv[:, 2]) * w,
            ],
            axis=1,
        )
        np.add.at(F[:, 0], loc.reshape(-1), node_vals.reshape(-1))
    else:
        ncomp = 1
        F = np.zeros((na, 1))

    # surrogate-edge terms
    if surr.n_edges > 0:
        _, eloc, egrads = _edge_arrays(surr)
        ne, nq = surr.qweights.shape
        if gamma_data is None:
            gdata = np.zeros((ne, nq))
        else:
            flat = surr.proj_x.reshape(-1, 2)
            gdata = np.asarray(gamma_data(flat[:, 0], flat[:, 1])).reshape(ne, nq)
        k_e, f_e = kernels.poisson_edge_blocks(
            np.ascontiguousarray(egrads),
            np.ascontiguousarray(surr.traces),
            np.ascontiguousarray(surr.proj_d),
            np.ascontiguousarray(surr.qweights),
            np.ascontiguousarray(surr.edge_normal),
            np.ascontiguousarray(surr.edge_h),
            gdata,
            cfg.nitsche_alpha,
        )
        K = K + _scatter(
            k_e, np.repeat(eloc, 3, axis=1), np.tile(eloc, (1, 3)), (na, na)
        )
        if gamma_data is not None:
            np.add.at(F[:, 0], eloc.reshape(-1), f_e.reshape(-1))

    # strong rows on the whole outer rectangle
    outer = np.unique(mesh.boundary_edges)
    outer_loc = surr.global_to_active[outer]
    outer_loc = outer_loc[outer_loc >= 0]
    keep = np.ones(na)
    keep[outer_loc] = 0.0
    K = (sp.diags(keep) @ K).tocsr() + sp.coo_matrix(
        (np.ones(outer_loc.shape[0]), (outer_loc, outer_loc)), shape=(na, na)
    ).tocsr()
    K.eliminate_zeros()
    if outer_data is None:
        F[outer_loc, :] = 0.0
    else:
        pts = mesh.nodes[surr.active_nodes[outer_loc]]
        F[outer_loc, :] = np.asarray(outer_data(pts[:, 0], pts[:, 1])).reshape(-1, 1)
    return K, F


def solve_poisson(K, F):
    """Factor once and solve for every load column."""
    factor = SparseFactor(K)
    return np.column_stack([factor.solve(F[:, c]) for c in range(F.shape[1])])
