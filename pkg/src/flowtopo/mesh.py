"""Uniform triangulations of the unit square with P1/P2 Lagrange spaces.

The hold-all domain is D = (0, 1)^2, discretized by an ``n_div`` x
``n_div`` grid of squares, each split along the lower-left to
upper-right diagonal.  Linear (P1) unknowns live at grid vertices,
quadratic (P2) unknowns at vertices plus edge midpoints.  Boundary
facets are tagged as inlet, outlet or wall; the inlet/outlet openings
occupy the y-window [0.35, 0.65] on x = 0 and x = 1 respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import sparse


class BoundaryTag(Enum):
    INLET = "inlet"
    OUTLET = "outlet"
    WALL = "wall"


#: y-window of the inlet (x = 0) and outlet (x = 1) openings.
FLOW_WINDOW = (0.35, 0.65)

#: geometric tolerance for window-membership and point-location tests
GEOM_TOL = 1e-12


@dataclass(frozen=True)
class Quadrature:
    """Symmetric quadrature rule on the reference triangle.

    ``points`` are barycentric coordinates with shape (nq, 3),
    ``weights`` sum to the reference-triangle area 1/2.
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int


def triangle_rule(degree: int = 4) -> Quadrature:
    """Return a Dunavant rule exact for polynomials up to ``degree``.

    Degrees 4 (6 points) and 6 (12 points) are available; degree 4 is
    the assembly default (exact for P2*P2 products), degree 6 serves as
    a refined rule for error evaluation.
    """
    if degree <= 4:
        a1, b1, w1 = 0.816847572980459, 0.091576213509771, 0.109951743655322
        a2, b2, w2 = 0.108103018168070, 0.445948490915965, 0.223381589678011
        pts = [(a1, b1, b1), (b1, a1, b1), (b1, b1, a1),
               (a2, b2, b2), (b2, a2, b2), (b2, b2, a2)]
        wts = [w1, w1, w1, w2, w2, w2]
        deg = 4
    elif degree <= 6:
        a1, b1, w1 = 0.873821971016996, 0.063089014491502, 0.050844906370207
        a2, b2, w2 = 0.501426509658179, 0.249286745170910, 0.116786275726379
        a3, b3, c3 = 0.636502499121399, 0.310352451033785, 0.053145049844816
        w3 = 0.082851075618374
        pts = [(a1, b1, b1), (b1, a1, b1), (b1, b1, a1),
               (a2, b2, b2), (b2, a2, b2), (b2, b2, a2),
               (a3, b3, c3), (a3, c3, b3), (b3, a3, c3),
               (b3, c3, a3), (c3, a3, b3), (c3, b3, a3)]
        wts = [w1] * 3 + [w2] * 3 + [w3] * 6
        deg = 6
    else:
        raise ValueError(f"no triangle rule of degree {degree} available")
    points = np.asarray(pts, dtype=float)
    weights = 0.5 * np.asarray(wts, dtype=float)
    return Quadrature(points=points, weights=weights, degree=deg)


# ---------------------------------------------------------------------------
# Lagrange basis functions on the reference triangle
# ---------------------------------------------------------------------------

_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


def p1_values(bary) -> np.ndarray:
    """P1 basis values at barycentric points, shape (nq, 3)."""
    return np.atleast_2d(np.asarray(bary, dtype=float))


def p2_values(bary) -> np.ndarray:
    """P2 basis values at barycentric points, shape (nq, 6).

    Local ordering: three vertex functions, then the midpoint functions
    of edges (0,1), (1,2), (2,0).
    """
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    cols = [lam[:, i] * (2.0 * lam[:, i] - 1.0) for i in range(3)]
    cols += [4.0 * lam[:, i] * lam[:, j] for i, j in _EDGE_PAIRS]
    return np.column_stack(cols)


def p2_ref_gradients(bary) -> np.ndarray:
    """Reference-coordinate gradients of the P2 basis, shape (nq, 6, 2)."""
    lam = np.atleast_2d(np.asarray(bary, dtype=float))
    nq = lam.shape[0]
    g = np.zeros((nq, 6, 2))
    for i in range(3):
        g[:, i, :] = (4.0 * lam[:, i, None] - 1.0) * _DLAMBDA[i]
    for k, (i, j) in enumerate(_EDGE_PAIRS):
        g[:, 3 + k, :] = 4.0 * (lam[:, i, None] * _DLAMBDA[j]
                                + lam[:, j, None] * _DLAMBDA[i])
    return g


# ---------------------------------------------------------------------------
# Mesh
# ---------------------------------------------------------------------------

class TriMesh:
    """Conforming uniform triangulation of the unit square.

    All cells are split along the same lower-left to upper-right
    diagonal so that runs are reproducible.  The mesh is immutable
    after construction apart from boundary-tag population.
    """

    def __init__(self, n_div: int):
        if n_div < 2:
            raise ValueError(f"n_div must be at least 2, got {n_div}")
        n = int(n_div)
        self.n_div = n

        xs = np.linspace(0.0, 1.0, n + 1)
        gx, gy = np.meshgrid(xs, xs)
        self.vertices = np.column_stack([gx.ravel(), gy.ravel()])

        ig, jg = np.meshgrid(np.arange(n), np.arange(n))
        v00 = (jg * (n + 1) + ig).ravel()
        v10 = v00 + 1
        v01 = v00 + (n + 1)
        v11 = v01 + 1
        tris = np.empty((2 * n * n, 3), dtype=np.int64)
        tris[0::2] = np.column_stack([v00, v10, v11])
        tris[1::2] = np.column_stack([v00, v11, v01])
        self.triangles = tris

        # unique edges; the inverse map gives each triangle's local
        # edge ids in the order (0,1), (1,2), (2,0)
        local = tris[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        sorted_pairs = np.sort(local, axis=1)
        edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
        self.edges = edges
        self.edge_midpoints = self.vertices[edges].mean(axis=1)
        nv = self.vertices.shape[0]
        self.t2map = np.hstack(
            [tris, nv + inverse.reshape(-1, 3)]).astype(np.int64)

        counts = np.bincount(inverse, minlength=edges.shape[0])
        self.boundary_edge_ids = np.where(counts == 1)[0]
        self.boundary_tags: dict[int, BoundaryTag] = {}

        # affine element geometry
        a = self.vertices[tris[:, 0]]
        e1 = self.vertices[tris[:, 1]] - a
        e2 = self.vertices[tris[:, 2]] - a
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0.0):
            raise ValueError("mesh contains non-positively oriented triangles")
        self.det = det
        inv_t = np.empty((tris.shape[0], 2, 2))
        inv_t[:, 0, 0] = e2[:, 1]
        inv_t[:, 0, 1] = -e1[:, 1]
        inv_t[:, 1, 0] = -e2[:, 0]
        inv_t[:, 1, 1] = e1[:, 0]
        self.jac_invT = inv_t / det[:, None, None]

        self._mass_p1 = None

    # -- counts ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_p2(self) -> int:
        return self.n_vertices + self.n_edges

    @property
    def p2_coords(self) -> np.ndarray:
        return np.vstack([self.vertices, self.edge_midpoints])

    # -- boundary -------------------------------------------------------

    def facets_with_tag(self, tag: BoundaryTag) -> np.ndarray:
        """Edge ids of all boundary facets carrying ``tag``."""
        if not self.boundary_tags:
            raise ValueError("boundary tags have not been populated")
        return np.array(
            [eid for eid, t in self.boundary_tags.items() if t is tag],
            dtype=np.int64)

    # -- mass matrix ----------------------------------------------------

    def mass_matrix_p1(self) -> sparse.csr_matrix:
        """Exact P1 mass matrix (cached)."""
        if self._mass_p1 is None:
            local = np.array([[2.0, 1.0, 1.0],
                              [1.0, 2.0, 1.0],
                              [1.0, 1.0, 2.0]]) / 24.0
            data = self.det[:, None, None] * local
            rows = np.repeat(self.triangles, 3, axis=1).ravel()
            cols = np.tile(self.triangles, (1, 3)).ravel()
            nv = self.n_vertices
            self._mass_p1 = sparse.coo_matrix(
                (data.ravel(), (rows, cols)), shape=(nv, nv)).tocsr()
        return self._mass_p1


def build_unit_square_mesh(n_div: int) -> TriMesh:
    """Build the uniform triangulation of D = (0, 1)^2 (untagged)."""
    return TriMesh(n_div)


def tag_boundary(mesh: TriMesh) -> TriMesh:
    """Populate inlet/outlet/wall tags on all boundary facets.

    A facet is tagged inlet (outlet) when it lies on x = 0 (x = 1) and
    its midpoint falls inside the flow window, tested with a 1e-12
    tolerance so that facets merely touching the window stay walls.
    """
    lo, hi = FLOW_WINDOW
    tags: dict[int, BoundaryTag] = {}
    for eid in mesh.boundary_edge_ids:
        mx, my = mesh.edge_midpoints[eid]
        in_window = (lo - GEOM_TOL) <= my <= (hi + GEOM_TOL)
        if abs(mx) <= GEOM_TOL and in_window:
            tags[int(eid)] = BoundaryTag.INLET
        elif abs(mx - 1.0) <= GEOM_TOL and in_window:
            tags[int(eid)] = BoundaryTag.OUTLET
        else:
            tags[int(eid)] = BoundaryTag.WALL
    n_in = sum(1 for t in tags.values() if t is BoundaryTag.INLET)
    n_out = sum(1 for t in tags.values() if t is BoundaryTag.OUTLET)
    if n_in == 0 or n_out == 0:
        raise ValueError(
            "mesh too coarse: no boundary facet midpoint falls inside the "
            f"inlet/outlet window {FLOW_WINDOW}")
    mesh.boundary_tags = tags
    return mesh


# ---------------------------------------------------------------------------
# Point location and interpolation
# ---------------------------------------------------------------------------

def _locate(mesh: TriMesh, point) -> tuple[int, np.ndarray]:
    """Return (triangle index, barycentric coordinates) of a point."""
    x, y = float(point[0]), float(point[1])
    if not (-GEOM_TOL <= x <= 1.0 + GEOM_TOL
            and -GEOM_TOL <= y <= 1.0 + GEOM_TOL):
        raise ValueError(f"point {(x, y)} lies outside the unit square")
    x = min(max(x, 0.0), 1.0)
    y = min(max(y, 0.0), 1.0)
    n = mesh.n_div
    i = min(int(x * n), n - 1)
    j = min(int(y * n), n - 1)
    xi = x * n - i
    eta = y * n - j
    cell = j * n + i
    if eta <= xi:
        tri = 2 * cell
        bary = np.array([1.0 - xi, xi - eta, eta])
    else:
        tri = 2 * cell + 1
        bary = np.array([1.0 - eta, xi, eta - xi])
    return tri, bary


def interpolate_p1(mesh: TriMesh, field: np.ndarray, point) -> float:
    """Evaluate a P1 nodal field at a point via barycentric interpolation."""
    tri, bary = _locate(mesh, point)
    return float(bary @ field[mesh.triangles[tri]])


def interpolate_p2(mesh: TriMesh, field: np.ndarray, point):
    """Evaluate a P2 nodal field (scalar or vector) at a point."""
    tri, bary = _locate(mesh, point)
    phi = p2_values(bary)[0]
    vals = np.asarray(field)[mesh.t2map[tri]]
    out = phi @ vals
    return float(out) if np.ndim(out) == 0 else out


def p1_at_quadrature(mesh: TriMesh, field: np.ndarray,
                     quad: Quadrature) -> np.ndarray:
    """P1 field values at all quadrature points, shape (nt, nq)."""
    return field[mesh.triangles] @ quad.points.T


def p2_at_quadrature(mesh: TriMesh, field: np.ndarray,
                     quad: Quadrature) -> np.ndarray:
    """P2 field values at all quadrature points.

    Returns shape (nt, nq) for scalar fields and (nt, nq, 2) for
    two-component vector fields.
    """
    phi = p2_values(quad.points)
    vals = np.asarray(field)[mesh.t2map]
    if vals.ndim == 2:
        return np.einsum("qi,ei->eq", phi, vals)
    return np.einsum("qi,eic->eqc", phi, vals)


def quadrature_points_physical(mesh: TriMesh, quad: Quadrature) -> np.ndarray:
    """Physical coordinates of all quadrature points, shape (nt, nq, 2)."""
    corners = mesh.vertices[mesh.triangles]
    return np.einsum("qk,ekd->eqd", quad.points, corners)
