"""Embedded obstacle geometries, projections and surrogate-domain extraction.

An obstacle is anything exposing vectorized ``signed_distance(points)`` and
``closest_point(points)``; the built-in kinds are an analytic circle and a
polyline composite produced by a Bernstein-lattice free-form deformation of
a circle plus a fixed square.

Sign conventions (used consistently everywhere):

  * ``signed_distance`` is negative strictly inside the obstacle and
    positive in the fluid.
  * The boundary normal ``n`` points out of the fluid, i.e. into the
    obstacle, so the projection shift ``d = x - x_query`` of a fluid-side
    query satisfies ``d = |d| n`` and the surrogate-edge compatibility
    check ``n . n_edge >= 0`` holds (``n_edge`` points from the active side
    into the ghost side).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import kernels
from .errors import InvalidInputError, UnderResolvedError
from .mesh import TriMesh

#: vertices with signed distance >= -CLASSIFY_TOL count as fluid side
CLASSIFY_TOL = 1e-12

#: projection distance ties below this are reported as ambiguous
AMBIGUOUS_TOL = 1e-12

# fixed constants of the deformable composite geometry
FFD_CIRCLE_CENTER = (-1.0, 0.0)
FFD_CIRCLE_SEGMENTS = 512
FFD_LATTICE_SHAPE = (4, 4)
FFD_BOX_SCALE = 1.5  # lattice half-width in units of the circle radius
FFD_MOVED_POINTS = ((0, 1), (0, 2))  # left-column control points
FFD_SQUARE_CENTER = (0.6, 0.0)
FFD_SQUARE_HALF = 0.2

_GAUSS_1D = {
    1: (np.array([0.0]), np.array([2.0])),
    2: (np.array([-1.0, 1.0]) / np.sqrt(3.0), np.array([1.0, 1.0])),
    3: (
        np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)]),
        np.array([5.0, 8.0, 5.0]) / 9.0,
    ),
    4: (
        np.array(
            [
                -np.sqrt(3.0 / 7.0 + 2.0 / 7.0 * np.sqrt(6.0 / 5.0)),
                -np.sqrt(3.0 / 7.0 - 2.0 / 7.0 * np.sqrt(6.0 / 5.0)),
                np.sqrt(3.0 / 7.0 - 2.0 / 7.0 * np.sqrt(6.0 / 5.0)),
                np.sqrt(3.0 / 7.0 + 2.0 / 7.0 * np.sqrt(6.0 / 5.0)),
            ]
        ),
        np.array(
            [
                (18.0 - np.sqrt(30.0)) / 36.0,
                (18.0 + np.sqrt(30.0)) / 36.0,
                (18.0 + np.sqrt(30.0)) / 36.0,
                (18.0 - np.sqrt(30.0)) / 36.0,
            ]
        ),
    ),
}


@dataclass(frozen=True)
class GeometryParams:
    """Parametrized obstacle description.

    ``kind="circle"``: ``mu = (cx, cy)`` is the circle center, ``radius``
    its radius.  ``kind="ffd_composite"``: ``mu = (m1, m2)`` are the
    horizontal displacements of the two left-column lattice control points
    morphing the circular part; ``radius`` is the undeformed circle radius.
    """

    kind: str
    mu: tuple
    radius: float = 0.2

    def __post_init__(self):
        if self.kind not in ("circle", "ffd_composite"):
            raise InvalidInputError(f"unknown geometry kind {self.kind!r}")
        if self.radius <= 0.0:
            raise InvalidInputError("radius must be positive")
        if len(self.mu) != 2:
            raise InvalidInputError("mu must have two entries")


@dataclass
class Projection:
    """Closest-point data: surface point ``x``, shift ``d = x - query``,
    unit normal ``n`` (out of the fluid), tangent ``tau`` (``n`` rotated
    +90 degrees) and an ambiguity diagnostic per query."""

    x: np.ndarray
    d: np.ndarray
    n: np.ndarray
    tau: np.ndarray
    ambiguous: np.ndarray


def _rot90(v):
    out = np.empty_like(v)
    out[..., 0] = -v[..., 1]
    out[..., 1] = v[..., 0]
    return out


class CircleObstacle:
    """Analytic circular obstacle."""

    def __init__(self, center, radius: float):
        if radius <= 0.0:
            raise InvalidInputError("radius must be positive")
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)

    def signed_distance(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return np.linalg.norm(pts - self.center, axis=1) - self.radius

    def closest_point(self, points) -> Projection:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        r = pts - self.center
        rho = np.linalg.norm(r, axis=1)
        ambiguous = rho <= AMBIGUOUS_TOL
        out_dir = np.where(
            ambiguous[:, None], np.array([1.0, 0.0]), r / np.maximum(rho, 1e-300)[:, None]
        )
        x = self.center + self.radius * out_dir
        d = x - pts
        n = -out_dir  # into the obstacle
        return Projection(x=x, d=d, n=n, tau=_rot90(n), ambiguous=ambiguous)


class PolylineObstacle:
    """Obstacle bounded by one or more closed polyline loops.

    Loops are reoriented counter-clockwise on construction.  Normals come
    from segment geometry and are averaged at polyline vertices.
    """

    def __init__(self, loops):
        seg_a, seg_b, seg_n, va_n, vb_n = [], [], [], [], []
        for loop in loops:
            pts = np.asarray(loop, dtype=np.float64)
            if pts.shape[0] < 3:
                raise InvalidInputError("polyline loop needs at least 3 vertices")
            area2 = np.sum(
                pts[:, 0] * np.roll(pts[:, 1], -1) - np.roll(pts[:, 0], -1) * pts[:, 1]
            )
            if area2 < 0.0:
                pts = pts[::-1].copy()
            a = pts
            b = np.roll(pts, -1, axis=0)
            t = b - a
            tl = np.linalg.norm(t, axis=1)
            if np.any(tl <= 0.0):
                raise InvalidInputError("degenerate polyline segment")
            t = t / tl[:, None]
            # CCW loop: obstacle interior on the left of the tangent
            n = np.column_stack([-t[:, 1], t[:, 0]])
            vstart = n + np.roll(n, 1, axis=0)
            vstart /= np.maximum(np.linalg.norm(vstart, axis=1), 1e-300)[:, None]
            vend = np.roll(vstart, -1, axis=0)
            seg_a.append(a)
            seg_b.append(b)
            seg_n.append(n)
            va_n.append(vstart)
            vb_n.append(vend)
        self.seg_a = np.concatenate(seg_a)
        self.seg_b = np.concatenate(seg_b)
        self.seg_n = np.concatenate(seg_n)
        self.vert_n_start = np.concatenate(va_n)
        self.vert_n_end = np.concatenate(vb_n)

    def contains(self, points):
        """Even-odd ray-cast test, True strictly-ish inside any loop."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ay = self.seg_a[:, 1][None, :]
        by = self.seg_b[:, 1][None, :]
        ax = self.seg_a[:, 0][None, :]
        bx = self.seg_b[:, 0][None, :]
        py = pts[:, 1][:, None]
        px = pts[:, 0][:, None]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
        hit = straddle & (px < xint)
        return (hit.sum(axis=1) % 2).astype(bool)

    def signed_distance(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d2, _, _, _, _, _ = kernels.polyline_closest(pts, self.seg_a, self.seg_b)
        dist = np.sqrt(d2)
        inside = self.contains(pts)
        return np.where(inside, -dist, dist)

    def closest_point(self, points) -> Projection:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        d2, idx, t, d2_alt, _, _ = kernels.polyline_closest(pts, self.seg_a, self.seg_b)
        dist = np.sqrt(d2)
        ambiguous = (np.sqrt(d2_alt) - dist) <= AMBIGUOUS_TOL
        x = self.seg_a[idx] + t[:, None] * (self.seg_b[idx] - self.seg_a[idx])
        d = x - pts
        inside = self.contains(pts)
        sign = np.where(inside, -1.0, 1.0)
        # geometric normal fallback for on-curve queries
        n_geo = np.where(
            (t > 1e-12)[:, None] & (t < 1.0 - 1e-12)[:, None],
            self.seg_n[idx],
            np.where((t <= 1e-12)[:, None], self.vert_n_start[idx], self.vert_n_end[idx]),
        )
        on_curve = dist <= 1e-13
        with np.errstate(invalid="ignore"):
            n_dir = sign[:, None] * d / np.maximum(dist, 1e-300)[:, None]
        n = np.where(on_curve[:, None], n_geo, n_dir)
        return Projection(x=x, d=d, n=n, tau=_rot90(n), ambiguous=ambiguous)


class BernsteinLattice:
    """Tensor-product Bernstein lattice for free-form deformation in 2D."""

    def __init__(self, box_min, box_max, shape=FFD_LATTICE_SHAPE):
        self.box_min = np.asarray(box_min, dtype=np.float64)
        self.box_max = np.asarray(box_max, dtype=np.float64)
        if np.any(self.box_max <= self.box_min):
            raise InvalidInputError("degenerate lattice box")
        self.shape = tuple(shape)
        xs = np.linspace(self.box_min[0], self.box_max[0], self.shape[0])
        ys = np.linspace(self.box_min[1], self.box_max[1], self.shape[1])
        self.control = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)

    def displace(self, i, j, delta):
        self.control[i, j] += np.asarray(delta, dtype=np.float64)

    def deform(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        st = (pts - self.box_min) / (self.box_max - self.box_min)
        l, m = self.shape[0] - 1, self.shape[1] - 1
        bi = np.stack(
            [comb(l, i) * st[:, 0] ** i * (1 - st[:, 0]) ** (l - i) for i in range(l + 1)],
            axis=1,
        )
        bj = np.stack(
            [comb(m, j) * st[:, 1] ** j * (1 - st[:, 1]) ** (m - j) for j in range(m + 1)],
            axis=1,
        )
        return np.einsum("pi,pj,ijd->pd", bi, bj, self.control)


def _circle_polyline(center, radius, segments):
    theta = 2.0 * np.pi * np.arange(segments) / segments
    return np.column_stack(
        [center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)]
    )


def rectangle_obstacle(x0, x1, y0, y1) -> PolylineObstacle:
    """Axis-aligned rectangular obstacle as a 4-segment loop."""
    if not (x1 > x0 and y1 > y0):
        raise InvalidInputError("degenerate rectangle obstacle")
    return PolylineObstacle([np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])])


def make_ffd_composite(mu, radius) -> PolylineObstacle:
    """Morphed circle (via the lattice) plus the fixed square obstacle."""
    center = np.asarray(FFD_CIRCLE_CENTER)
    half = FFD_BOX_SCALE * radius
    lattice = BernsteinLattice(center - half, center + half)
    for (i, j), disp in zip(FFD_MOVED_POINTS, mu):
        lattice.displace(i, j, (disp, 0.0))
    circle = lattice.deform(_circle_polyline(center, radius, FFD_CIRCLE_SEGMENTS))
    cx, cy = FFD_SQUARE_CENTER
    hs = FFD_SQUARE_HALF
    square = np.array(
        [[cx - hs, cy - hs], [cx + hs, cy - hs], [cx + hs, cy + hs], [cx - hs, cy + hs]]
    )
    return PolylineObstacle([circle, square])


def make_obstacle(geom):
    """Resolve a GeometryParams (or pass through an obstacle object)."""
    if isinstance(geom, GeometryParams):
        if geom.kind == "circle":
            return CircleObstacle(geom.mu, geom.radius)
        return make_ffd_composite(geom.mu, geom.radius)
    if hasattr(geom, "signed_distance") and hasattr(geom, "closest_point"):
        return geom
    raise InvalidInputError(f"not a geometry: {geom!r}")


def signed_distance(geom, points):
    """Signed distance to the obstacle boundary, negative inside."""
    obstacle = make_obstacle(geom)
    pts = np.asarray(points, dtype=np.float64)
    sd = obstacle.signed_distance(pts)
    return float(sd[0]) if pts.ndim == 1 else sd


def closest_point(geom, points) -> Projection:
    """Closest boundary point with shift vector and extended normals."""
    obstacle = make_obstacle(geom)
    pts = np.asarray(points, dtype=np.float64)
    proj = obstacle.closest_point(pts)
    if pts.ndim == 1:
        return Projection(
            x=proj.x[0],
            d=proj.d[0],
            n=proj.n[0],
            tau=proj.tau[0],
            ambiguous=bool(proj.ambiguous[0]),
        )
    return proj


@dataclass
class SurrogateDomain:
    """Active/ghost element split plus the surrogate Dirichlet edges.

    The surrogate edges are the interfaces between active and ghost
    elements.  ``edge_normal`` points from the active into the ghost side.
    Projection data (``proj_*``) and trace values are stored per edge
    quadrature point.
    """

    mesh: TriMesh
    element_active: np.ndarray  # (n_tri,) bool
    active_elements: np.ndarray  # indices
    ghost_elements: np.ndarray
    active_nodes: np.ndarray
    ghost_nodes: np.ndarray
    global_to_active: np.ndarray  # (n_nodes,) int, -1 for ghost nodes
    edge_nodes: np.ndarray  # (E, 2)
    edge_owner: np.ndarray  # (E,) active element index
    edge_ghost: np.ndarray  # (E,) ghost element index
    edge_normal: np.ndarray  # (E, 2)
    edge_h: np.ndarray  # (E,) owner h_K
    qpoints: np.ndarray  # (E, q, 2)
    qweights: np.ndarray  # (E, q)
    proj_x: np.ndarray  # (E, q, 2)
    proj_d: np.ndarray
    proj_n: np.ndarray
    proj_tau: np.ndarray
    traces: np.ndarray  # (E, q, 3) owner P1 values at the quad points
    ambiguous: np.ndarray  # (E, q) bool

    @property
    def n_active_nodes(self) -> int:
        return self.active_nodes.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_nodes.shape[0]

    def active_area(self) -> float:
        return float(self.mesh.areas[self.active_elements].sum())


def full_domain(mesh: TriMesh, edge_quad_order: int = 2) -> SurrogateDomain:
    """Trivial domain with every element active and no embedded boundary.

    Used for fitted runs on the plain channel (no obstacle); all boundary
    conditions are then the strong outer-rectangle ones.
    """
    if edge_quad_order not in _GAUSS_1D:
        raise InvalidInputError(f"unsupported edge quadrature order {edge_quad_order}")
    nq = _GAUSS_1D[edge_quad_order][0].shape[0]
    n_tri = mesh.n_triangles
    active_nodes = np.arange(mesh.n_nodes)
    empty = np.zeros(0, dtype=np.int64)
    return SurrogateDomain(
        mesh=mesh,
        element_active=np.ones(n_tri, dtype=bool),
        active_elements=np.arange(n_tri),
        ghost_elements=empty,
        active_nodes=active_nodes,
        ghost_nodes=empty,
        global_to_active=active_nodes.copy(),
        edge_nodes=np.zeros((0, 2), dtype=np.int64),
        edge_owner=empty,
        edge_ghost=empty,
        edge_normal=np.zeros((0, 2)),
        edge_h=np.zeros(0),
        qpoints=np.zeros((0, nq, 2)),
        qweights=np.zeros((0, nq)),
        proj_x=np.zeros((0, nq, 2)),
        proj_d=np.zeros((0, nq, 2)),
        proj_n=np.zeros((0, nq, 2)),
        proj_tau=np.zeros((0, nq, 2)),
        traces=np.zeros((0, nq, 3)),
        ambiguous=np.zeros((0, nq), dtype=bool),
    )


def build_surrogate(mesh: TriMesh, geom, edge_quad_order: int = 2) -> SurrogateDomain:
    """Classify elements against the obstacle and extract surrogate edges.

    An element is active when all three vertices are on the fluid side
    (signed distance >= -CLASSIFY_TOL); elements cut by the boundary become
    ghosts, so the active region never requires cut-cell integration.
    """
    if edge_quad_order not in _GAUSS_1D:
        raise InvalidInputError(f"unsupported edge quadrature order {edge_quad_order}")
    obstacle = make_obstacle(geom)
    sd = obstacle.signed_distance(mesh.nodes)
    vertex_fluid = sd >= -CLASSIFY_TOL
    element_active = vertex_fluid[mesh.triangles].all(axis=1)
    if not element_active.any():
        raise InvalidInputError("empty active set: obstacle covers the mesh")
    if element_active.all():
        raise UnderResolvedError(
            "no ghost elements: mesh does not resolve the obstacle "
            "(it must span at least several elements)"
        )

    both_interior = mesh.edge_tris[:, 1] >= 0
    t0 = mesh.edge_tris[:, 0]
    t1 = mesh.edge_tris[:, 1]
    iface = both_interior & (element_active[t0] != element_active[t1])
    eidx = np.nonzero(iface)[0]
    edge_nodes = mesh.edges[eidx]
    owner_is_t0 = element_active[t0[eidx]]
    edge_owner = np.where(owner_is_t0, t0[eidx], t1[eidx])
    edge_ghost = np.where(owner_is_t0, t1[eidx], t0[eidx])

    pa = mesh.nodes[edge_nodes[:, 0]]
    pb = mesh.nodes[edge_nodes[:, 1]]
    tvec = pb - pa
    lengths = np.linalg.norm(tvec, axis=1)
    normal = np.column_stack([tvec[:, 1], -tvec[:, 0]]) / lengths[:, None]
    centroid = mesh.nodes[mesh.triangles[edge_owner]].mean(axis=1)
    mid = 0.5 * (pa + pb)
    flip = np.einsum("ed,ed->e", mid - centroid, normal) < 0.0
    normal[flip] *= -1.0

    gp, gw = _GAUSS_1D[edge_quad_order]
    # map [-1, 1] onto each edge
    qpoints = mid[:, None, :] + 0.5 * gp[None, :, None] * tvec[:, None, :]
    qweights = 0.5 * lengths[:, None] * gw[None, :]

    flat = qpoints.reshape(-1, 2)
    proj = obstacle.closest_point(flat)
    nq = gp.shape[0]
    ne = eidx.shape[0]
    proj_x = proj.x.reshape(ne, nq, 2)
    proj_d = proj.d.reshape(ne, nq, 2)
    proj_n = proj.n.reshape(ne, nq, 2)
    proj_tau = proj.tau.reshape(ne, nq, 2)
    ambiguous = proj.ambiguous.reshape(ne, nq)

    dot = np.einsum("eqd,ed->eq", proj_n, normal)
    bad = dot < -1e-12
    if bad.any():
        e, q = np.argwhere(bad)[0]
        raise UnderResolvedError(
            "surrogate normal inconsistency (true normal against edge normal "
            f"= {dot[e, q]:.3e}) on edge nodes {tuple(edge_nodes[e])} of "
            f"element {edge_owner[e]}: mesh too coarse for the boundary curvature"
        )

    # P1 traces of the owner element, exact for affine barycentric functions
    gr = mesh.grads[edge_owner]  # (E, 3, 2)
    rel = qpoints - centroid[:, None, :]
    traces = 1.0 / 3.0 + np.einsum("eid,eqd->eqi", gr, rel)

    active_nodes = np.unique(mesh.triangles[element_active])
    all_nodes = np.arange(mesh.n_nodes)
    ghost_nodes = np.setdiff1d(all_nodes, active_nodes, assume_unique=True)
    global_to_active = np.full(mesh.n_nodes, -1, dtype=np.int64)
    global_to_active[active_nodes] = np.arange(active_nodes.shape[0])

    return SurrogateDomain(
        mesh=mesh,
        element_active=element_active,
        active_elements=np.nonzero(element_active)[0],
        ghost_elements=np.nonzero(~element_active)[0],
        active_nodes=active_nodes,
        ghost_nodes=ghost_nodes,
        global_to_active=global_to_active,
        edge_nodes=edge_nodes,
        edge_owner=edge_owner,
        edge_ghost=edge_ghost,
        edge_normal=normal,
        edge_h=mesh.h_K[edge_owner],
        qpoints=qpoints,
        qweights=qweights,
        proj_x=proj_x,
        proj_d=proj_d,
        proj_n=proj_n,
        proj_tau=proj_tau,
        traces=traces,
        ambiguous=ambiguous,
    )
