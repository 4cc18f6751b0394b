"""Fixed background triangulations of a rectangle and P1 mass matrices.

The structured generator splits every grid quad along one diagonal, with the
diagonal direction alternating in a checkerboard pattern.  For an even number
of rows the triangulation is mirror symmetric about the horizontal midline of
the rectangle (an odd number of rows has a middle row of quads that no
single-diagonal split can reflect onto itself).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError, MeshFormatError

BOUNDARY_TAGS = ("left", "right", "top", "bottom")

#: Geometric tolerance used when locating boundary nodes/edges on the
#: bounding rectangle of a loaded mesh.
BOUNDARY_TOL = 1e-9


@dataclass
class TriMesh:
    """P1 triangulation of an axis-aligned rectangle.

    Attributes:
        nodes: (n_nodes, 2) vertex coordinates.
        triangles: (n_tri, 3) vertex indices, counter-clockwise.
        boundary_edges: (n_bedge, 2) node pairs lying on the rectangle.
        boundary_tags: (n_bedge,) side tag per boundary edge, one of
            ``left|right|top|bottom``.
        rect: (xmin, xmax, ymin, ymax) of the rectangle.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    rect: tuple

    # derived geometry, filled in __post_init__
    areas: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)
    h_K: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)
    edges: np.ndarray = field(init=False, repr=False)
    edge_tris: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        p = self.nodes[self.triangles]  # (n_tri, 3, 2)
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        signed = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(signed <= 0.0):
            bad = int(np.argmax(signed <= 0.0))
            raise InvalidInputError(
                f"triangle {bad} has non-positive area {signed[bad]:.3e}"
            )
        self.areas = signed
        # constant P1 gradients: grad phi_i = (b_i, c_i) / (2A), cyclic
        b = np.stack(
            [
                p[:, 1, 1] - p[:, 2, 1],
                p[:, 2, 1] - p[:, 0, 1],
                p[:, 0, 1] - p[:, 1, 1],
            ],
            axis=1,
        )
        c = np.stack(
            [
                p[:, 2, 0] - p[:, 1, 0],
                p[:, 0, 0] - p[:, 2, 0],
                p[:, 1, 0] - p[:, 0, 0],
            ],
            axis=1,
        )
        self.grads = np.stack([b, c], axis=2) / (2.0 * self.areas)[:, None, None]
        edge_len = np.stack(
            [
                np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
                np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
                np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            ],
            axis=1,
        )
        self.h_K = edge_len.max(axis=1)
        self.h = float(self.h_K.max())
        self._build_edge_table()

    def _build_edge_table(self):
        t = self.triangles
        raw = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        raw_sorted = np.sort(raw, axis=1)
        n_tri = t.shape[0]
        owner = np.tile(np.arange(n_tri), 3)
        self.edges, inverse = np.unique(raw_sorted, axis=0, return_inverse=True)
        edge_tris = np.full((self.edges.shape[0], 2), -1, dtype=np.int64)
        # deterministic fill: first owner into slot 0, second into slot 1
        order = np.argsort(inverse, kind="stable")
        for k in order:
            e = inverse[k]
            if edge_tris[e, 0] < 0:
                edge_tris[e, 0] = owner[k]
            else:
                edge_tris[e, 1] = owner[k]
        self.edge_tris = edge_tris

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def boundary_nodes(self, tag: str) -> np.ndarray:
        """Sorted node indices on the given rectangle side."""
        if tag not in BOUNDARY_TAGS:
            raise InvalidInputError(f"unknown boundary tag {tag!r}")
        mask = self.boundary_tags == tag
        return np.unique(self.boundary_edges[mask])

    def content_hash(self) -> str:
        """Hex digest identifying node/connectivity content."""
        import hashlib

        hsh = hashlib.sha256()
        hsh.update(self.nodes.tobytes())
        hsh.update(self.triangles.tobytes())
        return hsh.hexdigest()


def generate_structured(rect, nx: int, ny: int) -> TriMesh:
    """Structured crisscross triangulation of ``rect=(xmin, xmax, ymin, ymax)``.

    Produces ``2*nx*ny`` triangles; every quad is split along one diagonal
    and the diagonal direction alternates in a checkerboard.
    """
    xmin, xmax, ymin, ymax = map(float, rect)
    if not (xmax > xmin and ymax > ymin):
        raise InvalidInputError(f"degenerate rectangle {rect!r}")
    if nx < 1 or ny < 1:
        raise InvalidInputError("nx and ny must be at least 1")
    xs = np.linspace(xmin, xmax, nx + 1)
    ys = np.linspace(ymin, ymax, ny + 1)
    xg, yg = np.meshgrid(xs, ys)  # row-major in y
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            n00 = nid(i, j)
            n10 = nid(i + 1, j)
            n01 = nid(i, j + 1)
            n11 = nid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                # diagonal from lower-left to upper-right
                tris[k] = (n00, n10, n11)
                tris[k + 1] = (n00, n11, n01)
            else:
                # diagonal from lower-right to upper-left
                tris[k] = (n00, n10, n01)
                tris[k + 1] = (n10, n11, n01)
            k += 2

    bedges = []
    btags = []
    for j in range(ny):
        bedges.append((nid(0, j), nid(0, j + 1)))
        btags.append("left")
        bedges.append((nid(nx, j), nid(nx, j + 1)))
        btags.append("right")
    for i in range(nx):
        bedges.append((nid(i, 0), nid(i + 1, 0)))
        btags.append("bottom")
        bedges.append((nid(i, ny), nid(i + 1, ny)))
        btags.append("top")
    return TriMesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=np.array(bedges, dtype=np.int64),
        boundary_tags=np.array(btags, dtype=object),
        rect=(xmin, xmax, ymin, ymax),
    )


def load_mesh(path) -> TriMesh:
    """Load a mesh from the plain-text format.

    Line 1 holds ``N_nodes N_triangles``, then one ``x y`` line per node and
    one ``i j k`` line (0-based) per triangle.  Boundary side tags are
    inferred from the bounding rectangle with tolerance ``BOUNDARY_TOL``.
    Triangles with negative orientation are reordered.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise MeshFormatError(f"{path}: missing header")
    try:
        n_nodes, n_tri = int(tokens[0]), int(tokens[1])
        expected = 2 + 2 * n_nodes + 3 * n_tri
        if len(tokens) != expected:
            raise MeshFormatError(
                f"{path}: expected {expected} tokens, found {len(tokens)}"
            )
        vals = np.array(tokens[2 : 2 + 2 * n_nodes], dtype=np.float64)
        nodes = vals.reshape(n_nodes, 2)
        tris = np.array(tokens[2 + 2 * n_nodes :], dtype=np.int64).reshape(n_tri, 3)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
    if tris.min() < 0 or tris.max() >= n_nodes:
        raise MeshFormatError(f"{path}: triangle index out of range")

    # fix orientation where needed
    p = nodes[tris]
    signed = 0.5 * (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )
    flip = signed < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    xmin, ymin = nodes.min(axis=0)
    xmax, ymax = nodes.max(axis=0)
    # boundary edges: shared by exactly one triangle
    raw = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    raw_sorted = np.sort(raw, axis=1)
    uniq, counts = np.unique(raw_sorted, axis=0, return_counts=True)
    bedges = uniq[counts == 1]
    tags = []
    for a, b in bedges:
        pa, pb = nodes[a], nodes[b]
        if abs(pa[0] - xmin) < BOUNDARY_TOL and abs(pb[0] - xmin) < BOUNDARY_TOL:
            tags.append("left")
        elif abs(pa[0] - xmax) < BOUNDARY_TOL and abs(pb[0] - xmax) < BOUNDARY_TOL:
            tags.append("right")
        elif abs(pa[1] - ymax) < BOUNDARY_TOL and abs(pb[1] - ymax) < BOUNDARY_TOL:
            tags.append("top")
        elif abs(pa[1] - ymin) < BOUNDARY_TOL and abs(pb[1] - ymin) < BOUNDARY_TOL:
            tags.append("bottom")
        else:
            raise MeshFormatError(
                f"{path}: boundary edge ({a},{b}) not on the bounding rectangle"
            )
    return TriMesh(
        nodes=nodes,
        triangles=tris,
        boundary_edges=bedges.astype(np.int64),
        boundary_tags=np.array(tags, dtype=object),
        rect=(float(xmin), float(xmax), float(ymin), float(ymax)),
    )


def save_mesh(mesh: TriMesh, path):
    """Write the plain-text mesh format accepted by :func:`load_mesh`."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_nodes} {mesh.n_triangles}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix (exact for P1 x P1 products)."""
    local = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    vals = mesh.areas[:, None, None] * local[None, :, :]
    rows = np.repeat(mesh.triangles, 3, axis=1)  # (n_tri, 9): i i i j j j k k k
    cols = np.tile(mesh.triangles, (1, 3))
    m = sp.coo_matrix(
        (vals.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )
    out = m.tocsr()
    out.sum_duplicates()
    return out
