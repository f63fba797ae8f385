"""Global residual and sparse tangent assembly.

Element contributions are computed into per-element arrays and scattered with
a precomputed map into CSR storage.  The scatter uses ``np.bincount``, whose
summation order is fixed, so results do not depend on the element loop.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import micromorphic as mm
from ..damage import MaterialParams
from .element import assemble_kernel, raise_for_status
from .mesh import Mesh
from .shape import reference_gradients


@dataclass
class AssemblyResult:
    residual: np.ndarray
    tangent: sp.csr_matrix | None
    D: np.ndarray
    xi: np.ndarray
    dgamma: np.ndarray
    dissipation: np.ndarray
    energy: float


class Assembler:
    """Precomputed geometry and scatter pattern for one mesh and nonlocal model."""

    def __init__(self, mesh: Mesh, kind):
        self.mesh = mesh
        self.kind = mm.ModelKind.parse(kind)
        self.n_dbar = self.kind.n_dofs
        self.nd = 3 + self.n_dbar
        self.n_dofs = mesh.n_nodes * self.nd
        self.N, self.dNdX, self.wdet = reference_gradients(mesh.nodes[mesh.elements])
        if np.any(self.wdet <= 0.0):
            raise ValueError("mesh has non-positive reference Jacobians")
        conn = mesh.elements
        self.edofs = (conn[:, :, None] * self.nd + np.arange(self.nd)).reshape(len(conn), -1)
        m = self.edofs.shape[1]
        rows = np.repeat(self.edofs, m, axis=1).ravel()
        cols = np.tile(self.edofs, (1, m)).ravel()
        keys = rows * self.n_dofs + cols
        uniq, self._pos = np.unique(keys, return_inverse=True)
        self._pos = self._pos.ravel()
        self._indices = (uniq % self.n_dofs).astype(np.int32)
        counts = np.bincount(uniq // self.n_dofs, minlength=self.n_dofs)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.volume = float(self.wdet.sum())

    def new_state(self):
        ne = self.mesh.n_elements
        return np.zeros((ne, 8, 3, 3)), np.zeros((ne, 8))

    def nodal(self, U: np.ndarray) -> np.ndarray:
        return U.reshape(self.mesh.n_nodes, self.nd)

    def scatter_vector(self, element_vectors: np.ndarray) -> np.ndarray:
        return np.bincount(self.edofs.ravel(), element_vectors.ravel(), minlength=self.n_dofs)

    def scatter_matrix(self, element_matrices: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._pos, element_matrices.ravel(), minlength=len(self._indices))
        return sp.csr_matrix((data, self._indices, self._indptr),
                             shape=(self.n_dofs, self.n_dofs))

    def assemble(self, U, D, xi, dt, p: MaterialParams, tangent: bool = True,
                 guess: tuple | None = None) -> AssemblyResult:
        """Residual (and tangent) at nodal unknowns ``U`` from Gauss point states ``(D, xi)``.

        ``guess = (D, dgamma)`` seeds the local iterations at damaging points;
        it changes only the work done, not the converged result.
        """
        Un = np.ascontiguousarray(self.nodal(np.asarray(U, dtype=float)))
        D = np.ascontiguousarray(D)
        if guess is None:
            Dg, gg = D, np.zeros(xi.shape)
        else:
            Dg, gg = (np.ascontiguousarray(a) for a in guess)
        status, e, gp, R, Ks, Dn, xin, dg, diss, energy = assemble_kernel(
            self.mesh.elements, self.dNdX, self.wdet, self.N, Un, D,
            np.ascontiguousarray(xi), float(dt), p.vector(), p.penalties(self.kind),
            p.gradient_moduli(self.kind), int(self.kind), tangent, Dg, gg)
        if status < 0:
            raise_for_status(status, e, gp)
        K = self.scatter_matrix(Ks) if tangent else None
        return AssemblyResult(self.scatter_vector(R), K, Dn, xin, dg, diss, float(energy.sum()))
