"""Vectorized element assembly shared by the flow and smoothing operators."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .mesh import Quadrature, TriMesh, p1_values, p2_ref_gradients, p2_values, triangle_rule


class ElementTables:
    """Precomputed basis/geometry tables for one (mesh, quadrature) pair."""

    def __init__(self, mesh: TriMesh, quad: Quadrature | None = None):
        self.mesh = mesh
        self.quad = quad if quad is not None else triangle_rule(4)
        q = self.quad
        self.phi1 = p1_values(q.points)                     # (nq, 3)
        self.phi2 = p2_values(q.points)                     # (nq, 6)
        gref = p2_ref_gradients(q.points)                   # (nq, 6, 2)
        # physical gradients: grad_x phi = J^{-T} grad_xi phi
        self.grad2 = np.einsum("edk,qik->eqid", mesh.jac_invT, gref)
        self.det = mesh.det
        self.weights = q.weights
        # w_q * phi_i * phi_j product table, shared by all mass assemblies
        self.phi_outer = np.einsum("q,qi,qj->qij", q.weights,
                                   self.phi2, self.phi2)

        t1, t2 = mesh.triangles, mesh.t2map
        self._rows66 = np.repeat(t2, 6, axis=1).ravel()
        self._cols66 = np.tile(t2, (1, 6)).ravel()
        self._rows36 = np.repeat(t1, 6, axis=1).ravel()
        self._cols36 = np.tile(t2, (1, 3)).ravel()

    def _scatter66(self, data: np.ndarray) -> sparse.csr_matrix:
        n2 = self.mesh.n_p2
        return sparse.coo_matrix(
            (data.ravel(), (self._rows66, self._cols66)),
            shape=(n2, n2)).tocsr()

    def p2_stiffness(self) -> sparse.csr_matrix:
        """Scalar P2 stiffness matrix, int grad(u) . grad(w)."""
        data = np.einsum("q,eqid,eqjd->eij", self.weights,
                         self.grad2, self.grad2)
        data *= self.det[:, None, None]
        return self._scatter66(data)

    def p2_mass(self) -> sparse.csr_matrix:
        """Scalar P2 mass matrix, int u w."""
        local = self.phi_outer.sum(axis=0)
        data = self.det[:, None, None] * local
        return self._scatter66(data)

    def weighted_p2_mass(self, coef: np.ndarray) -> sparse.csr_matrix:
        """P2 mass matrix weighted by per-quadrature-point values (nt, nq)."""
        data = np.einsum("eq,qij->eij", coef, self.phi_outer)
        data *= self.det[:, None, None]
        return self._scatter66(data)

    def divergence_blocks(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        """Pressure-velocity coupling blocks Bx, By with B = -int q div(u)."""
        nv, n2 = self.mesh.n_vertices, self.mesh.n_p2
        blocks = []
        for d in range(2):
            data = -np.einsum("q,qa,eqj->eaj", self.weights,
                              self.phi1, self.grad2[..., d])
            data *= self.det[:, None, None]
            blocks.append(sparse.coo_matrix(
                (data.ravel(), (self._rows36, self._cols36)),
                shape=(nv, n2)).tocsr())
        return blocks[0], blocks[1]

    def p2_load(self, values: np.ndarray) -> np.ndarray:
        """Weak load vector from quadrature-point integrand values.

        ``values`` has shape (nt, nq) for a scalar load or (nt, nq, 2)
        for a vector load; the result matches (n_p2,) or (n_p2, 2).
        """
        values = np.asarray(values)
        if values.ndim == 2:
            contrib = np.einsum("q,qi,eq->ei", self.weights,
                                self.phi2, values)
            contrib *= self.det[:, None]
            out = np.zeros(self.mesh.n_p2)
            np.add.at(out, self.mesh.t2map, contrib)
            return out
        contrib = np.einsum("q,qi,eqc->eic", self.weights,
                            self.phi2, values)
        contrib *= self.det[:, None, None]
        out = np.zeros((self.mesh.n_p2, 2))
        np.add.at(out, self.mesh.t2map, contrib)
        return out
