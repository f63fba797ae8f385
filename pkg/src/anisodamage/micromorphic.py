"""Micromorphic tuples of the damage tensor and their generalized stresses.

Three tuples are provided:

* ``A`` -- the six components ``tr(D M_i)`` with ``M_i`` the Cartesian
  structural tensors (order xx, yy, zz, xy, xz, yz);
* ``B`` -- principal traces ``(tr D, tr D^2, tr D^3)``;
* ``C`` -- volumetric/deviatoric pair ``(tr D / 3, tr (dev D)^2)``.

Each local value ``d_i(D)`` gets a nodal counterpart ``dbar_i``; the coupling
energy is ``1/2 sum H_i (d_i - dbar_i)^2 + 1/2 sum A_i |Grad dbar_i|^2``.
"""
from __future__ import annotations

import enum

import numpy as np
from numba import njit

from .tensor import mm3_k


class DimensionMismatch(ValueError):
    pass


class ModelKind(enum.IntEnum):
    A = 0
    B = 1
    C = 2

    @property
    def n_dofs(self) -> int:
        return (6, 3, 2)[self.value]

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        return cls[str(value).strip().upper()]


def structural_tensors() -> np.ndarray:
    """``M_1 ... M_6`` as a ``(6, 3, 3)`` array (not symmetrized)."""
    e = np.eye(3)
    pairs = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
    return np.array([np.outer(e[i], e[j]) for i, j in pairs])


def _check(kind, n):
    if n != ModelKind.parse(kind).n_dofs:
        raise DimensionMismatch(f"model {ModelKind.parse(kind).name} expects "
                                f"{ModelKind.parse(kind).n_dofs} nonlocal values, got {n}")


def tuple_value(D, kind) -> np.ndarray:
    return tuple_value_k(np.asarray(D, dtype=float), int(ModelKind.parse(kind)))


def tuple_derivative(D, kind) -> np.ndarray:
    """``d d_i / dD`` for every tuple entry, shape ``(n, 3, 3)``, each symmetric."""
    return tuple_derivative_k(np.asarray(D, dtype=float), int(ModelKind.parse(kind)))


def nonlocal_driving_force(D, dbar, kind, H) -> np.ndarray:
    """``Y_dbar = sum_i H_i (d_i(D) - dbar_i) dd_i/dD``."""
    dbar = np.asarray(dbar, dtype=float)
    H = np.asarray(H, dtype=float)
    _check(kind, dbar.shape[-1])
    _check(kind, H.shape[-1])
    return nonlocal_force_k(np.asarray(D, float), dbar, H, int(ModelKind.parse(kind)))


def generalized_stresses(d, dbar, grad_dbar, H, A):
    """Return ``(xi0, Xi0)`` with ``xi0_k = -H_k (d_k - dbar_k)`` and ``Xi0_k = A_k Grad dbar_k``."""
    d, dbar, grad_dbar, H, A = (np.asarray(x, dtype=float) for x in (d, dbar, grad_dbar, H, A))
    n = d.shape[-1]
    if dbar.shape[-1] != n or grad_dbar.shape[-2:] != (n, 3) or H.shape[-1] != n or A.shape[-1] != n:
        raise DimensionMismatch("micromorphic array shapes do not agree")
    return -H * (d - dbar), A[:, None] * grad_dbar


def micromorphic_energy(d, dbar, grad_dbar, H, A) -> float:
    d, dbar, grad_dbar, H, A = (np.asarray(x, dtype=float) for x in (d, dbar, grad_dbar, H, A))
    n = d.shape[-1]
    if dbar.shape[-1] != n or grad_dbar.shape[-2:] != (n, 3) or H.shape[-1] != n or A.shape[-1] != n:
        raise DimensionMismatch("micromorphic array shapes do not agree")
    return float(0.5 * np.sum(H * (d - dbar) ** 2) + 0.5 * np.sum(A * np.sum(grad_dbar ** 2, axis=-1)))


@njit(cache=True)
def n_dofs_k(kind):
    if kind == 0:
        return 6
    if kind == 1:
        return 3
    return 2


@njit(cache=True)
def tuple_value_k(D, kind):
    if kind == 0:
        return np.array([D[0, 0], D[1, 1], D[2, 2], D[0, 1], D[0, 2], D[1, 2]])
    if kind == 1:
        D2 = mm3_k(D, D)
        D3 = mm3_k(D2, D)
        return np.array([D[0, 0] + D[1, 1] + D[2, 2],
                         D2[0, 0] + D2[1, 1] + D2[2, 2],
                         D3[0, 0] + D3[1, 1] + D3[2, 2]])
    tr = D[0, 0] + D[1, 1] + D[2, 2]
    s = 0.0
    for i in range(3):
        for j in range(3):
            dev = D[i, j] - (tr / 3.0 if i == j else 0.0)
            s += dev * dev
    return np.array([tr / 3.0, s])


@njit(cache=True)
def tuple_derivative_k(D, kind):
    n = n_dofs_k(kind)
    out = np.zeros((n, 3, 3))
    if kind == 0:
        pairs = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
        for k in range(6):
            i, j = pairs[k]
            out[k, i, j] += 0.5
            out[k, j, i] += 0.5
    elif kind == 1:
        D2 = mm3_k(D, D)
        for i in range(3):
            out[0, i, i] = 1.0
        out[1] = 2.0 * D
        out[2] = 3.0 * D2
    else:
        tr = D[0, 0] + D[1, 1] + D[2, 2]
        out[1] = 2.0 * D
        for i in range(3):
            out[0, i, i] = 1.0 / 3.0
            out[1, i, i] -= 2.0 / 3.0 * tr
    return out


@njit(cache=True)
def nonlocal_force_k(D, dbar, H, kind):
    d = tuple_value_k(D, kind)
    dd = tuple_derivative_k(D, kind)
    out = np.zeros((3, 3))
    for k in range(d.shape[0]):
        if H[k] != 0.0:
            out += H[k] * (d[k] - dbar[k]) * dd[k]
    return out
