"""Trilinear hexahedron shape functions and 2x2x2 Gauss quadrature."""
from __future__ import annotations

import numpy as np

# reference coordinates of the eight nodes in VTK order
NODE_XI = np.array([[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
                    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]], dtype=float)

_G = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = NODE_XI * _G
GAUSS_WEIGHTS = np.ones(8)


def shape_hex8(xi) -> tuple[np.ndarray, np.ndarray]:
    """Shape function values ``(8,)`` and gradients ``(8, 3)`` at local coordinates ``xi``."""
    xi = np.asarray(xi, dtype=float)
    terms = 1.0 + NODE_XI * xi
    N = 0.125 * terms.prod(axis=1)
    dN = np.empty((8, 3))
    for k in range(3):
        others = [m for m in range(3) if m != k]
        dN[:, k] = 0.125 * NODE_XI[:, k] * terms[:, others[0]] * terms[:, others[1]]
    return N, dN


def quad4(eta) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear quadrilateral values ``(4,)`` and local gradients ``(4, 2)``."""
    s, t = eta
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    a = 1.0 + corners[:, 0] * s
    b = 1.0 + corners[:, 1] * t
    N = 0.25 * a * b
    dN = np.column_stack([0.25 * corners[:, 0] * b, 0.25 * corners[:, 1] * a])
    return N, dN


def reference_gradients(X: np.ndarray):
    """Shape data on a batch of elements with nodal coordinates ``X (n, 8, 3)``.

    Returns ``N (8 gp, 8)``, ``dNdX (n, 8 gp, 8, 3)`` and ``wdet (n, 8 gp)``.
    """
    n = X.shape[0]
    N = np.empty((8, 8))
    dNdX = np.empty((n, 8, 8, 3))
    wdet = np.empty((n, 8))
    for g, xi in enumerate(GAUSS_POINTS):
        N[g], dN = shape_hex8(xi)
        J = np.einsum("eai,aj->eij", X, dN)
        det = np.linalg.det(J)
        dNdX[:, g] = np.einsum("aj,eji->eai", dN, np.linalg.inv(J))
        wdet[:, g] = GAUSS_WEIGHTS[g] * det
    return N, dNdX, wdet
