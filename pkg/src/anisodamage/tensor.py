"""Symmetric second-order and minor-symmetric fourth-order tensor algebra in 3D.

Tensors are handled as plain ``(3, 3)`` numpy arrays in the public API.  The
six-component storage order used throughout the package (files, tangent
blocks, state arrays) is ``(xx, yy, zz, xy, xz, yz)``.  Two vector forms exist:

* *component* form ``to_voigt`` -- the raw tensor entries, shear stored once;
* *Mandel* form ``to_mandel`` -- shear entries scaled by ``sqrt(2)`` so that the
  Euclidean dot product of two Mandel vectors equals the double contraction of
  the tensors.  Fourth-order tensors with minor symmetries are ``(6, 6)``
  matrices in this basis.

The ``*_k`` functions at the bottom are numba kernels for the hot paths of the
constitutive update; they work on single ``(3, 3)`` arrays.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

SQRT2 = np.sqrt(2.0)
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
COMPONENT_NAMES = ("xx", "yy", "zz", "xy", "xz", "yz")
_MANDEL_SCALE = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])
_ROWS = np.array([p[0] for p in VOIGT_PAIRS])
_COLS = np.array([p[1] for p in VOIGT_PAIRS])

# relative gap below which two eigenvalues are treated as coincident
DEGENERACY_TOL = 1e-9
SINGULAR_TOL = 1e-14


class SingularTensor(ValueError):
    """Raised when inverting a tensor whose determinant is numerically zero."""


class Spectral(NamedTuple):
    """Eigenvalues in descending order and matching unit eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values[..., None, :]) @ np.swapaxes(self.vectors, -1, -2)


def to_voigt(t):
    """Six independent components ``(xx, yy, zz, xy, xz, yz)`` of symmetric ``t``."""
    t = np.asarray(t, dtype=float)
    return t[..., _ROWS, _COLS]


def from_voigt(v):
    v = np.asarray(v, dtype=float)
    t = np.empty(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        t[..., i, j] = v[..., k]
        t[..., j, i] = v[..., k]
    return t


def to_mandel(t):
    return to_voigt(t) * _MANDEL_SCALE


def from_mandel(v):
    return from_voigt(np.asarray(v, dtype=float) / _MANDEL_SCALE)


def tensor4_to_mandel(a):
    """Map a minor-symmetric ``(3, 3, 3, 3)`` array to its ``(6, 6)`` Mandel matrix."""
    a = np.asarray(a, dtype=float)
    m = a[..., _ROWS[:, None], _COLS[:, None], _ROWS[None, :], _COLS[None, :]]
    return m * np.outer(_MANDEL_SCALE, _MANDEL_SCALE)


def mandel_to_tensor4(m):
    m = np.asarray(m, dtype=float) / np.outer(_MANDEL_SCALE, _MANDEL_SCALE)
    a = np.empty(m.shape[:-2] + (3, 3, 3, 3))
    for p, (i, j) in enumerate(VOIGT_PAIRS):
        for q, (k, l) in enumerate(VOIGT_PAIRS):
            for ii, jj in {(i, j), (j, i)}:
                for kk, ll in {(k, l), (l, k)}:
                    a[..., ii, jj, kk, ll] = m[..., p, q]
    return a


def apply4(m, t):
    """Action ``A : t`` of a Mandel ``(6, 6)`` tensor on a symmetric tensor."""
    return from_mandel(np.einsum("...ij,...j->...i", m, to_mandel(t)))


def symmetrize(t):
    t = np.asarray(t, dtype=float)
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def trace(t):
    return np.trace(np.asarray(t, dtype=float), axis1=-2, axis2=-1)


def det(t):
    return np.linalg.det(np.asarray(t, dtype=float))


def inverse(t):
    """Inverse of a second-order tensor.

    Raises
    ------
    SingularTensor
        If ``|det t|`` is below ``1e-14`` relative to ``||t||^3``.
    """
    t = np.asarray(t, dtype=float)
    scale = np.linalg.norm(t, axis=(-2, -1)) ** 3
    d = det(t)
    if np.any(np.abs(d) <= SINGULAR_TOL * np.maximum(scale, np.finfo(float).tiny)):
        raise SingularTensor(f"determinant {d} is numerically zero")
    return np.linalg.inv(t)


def double_contract(a, b):
    """``a : b = sum_ij a_ij b_ij``."""
    return np.einsum("...ij,...ij->...", np.asarray(a, float), np.asarray(b, float))


def matrix_product(a, b):
    """Plain product ``a b``; not symmetric in general even for symmetric inputs."""
    return np.asarray(a, float) @ np.asarray(b, float)


def deviator(t):
    t = np.asarray(t, dtype=float)
    return t - trace(t)[..., None, None] / 3.0 * np.eye(3)


def _sign_convention(vectors):
    # first component with magnitude above noise is made positive
    v = vectors.copy()
    mag = np.abs(v)
    first = np.argmax(mag > 1e-12 * mag.max(axis=-2, keepdims=True), axis=-2)
    pick = np.take_along_axis(v, first[..., None, :], axis=-2)[..., 0, :]
    return v * np.where(pick < 0.0, -1.0, 1.0)[..., None, :]


def spectral_decompose(t) -> Spectral:
    """Eigen-decomposition ``t = sum_i lam_i n_i (x) n_i`` with ``lam_1 >= lam_2 >= lam_3``.

    Eigenvectors are returned as columns; each is oriented so that its first
    non-negligible component is positive.  Works on stacks ``(..., 3, 3)``.
    """
    t = symmetrize(t)
    flat = np.ascontiguousarray(t.reshape(-1, 3, 3))
    w, v = _eig3_batch(flat)
    w = w.reshape(t.shape[:-1])
    v = v.reshape(t.shape)
    return Spectral(w, _sign_convention(v))


def spectral_function(t, fun) -> np.ndarray:
    """Isotropic tensor function ``sum_i fun(lam_i) n_i (x) n_i``."""
    s = spectral_decompose(t)
    return Spectral(fun(s.values), s.vectors).reconstruct()


def positive_part(t) -> np.ndarray:
    """Positive semi-definite part ``sum_i max(lam_i, 0) n_i (x) n_i``."""
    t = symmetrize(t)
    flat = np.ascontiguousarray(t.reshape(-1, 3, 3))
    out = np.empty_like(flat)
    for k in range(flat.shape[0]):
        out[k] = positive_part_k(flat[k])[0]
    return out.reshape(t.shape)


def abs_eigen_tensor(t) -> np.ndarray:
    return spectral_function(t, np.abs)


def positive_part_derivative(t) -> np.ndarray:
    """Mandel ``(6, 6)`` matrix of the derivative of :func:`positive_part`.

    Off-diagonal weights use the divided difference of ``max(x, 0)``; for
    eigenvalue pairs closer than ``1e-9 max(1, ||t||)`` the limit value (mean of
    the one-sided slopes) is taken.
    """
    t = np.asarray(t, dtype=float)
    s = spectral_decompose(t)
    w, v = s.values, s.vectors
    theta = _divided_difference(w, np.maximum(w, 0.0), (w > 0.0).astype(float),
                                DEGENERACY_TOL * max(1.0, float(np.linalg.norm(t))))
    out = np.zeros((3, 3, 3, 3))
    for i in range(3):
        for j in range(3):
            a = np.outer(v[:, i], v[:, j])
            sym_a = 0.5 * (a + a.T)
            out += theta[i, j] * np.einsum("ij,kl->ijkl", sym_a, sym_a)
    return tensor4_to_mandel(out)


def _divided_difference(w, g, dg, tol):
    theta = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            if i == j:
                theta[i, j] = dg[i]
            elif abs(w[i] - w[j]) > tol:
                theta[i, j] = (g[i] - g[j]) / (w[i] - w[j])
            else:
                theta[i, j] = 0.5 * (dg[i] + dg[j])
    return theta


def identity4_mandel():
    return np.eye(6)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def eig3_k(a_in):
    """Cyclic Jacobi eigen-solver for a symmetric 3x3 matrix.

    Returns eigenvalues (descending) and eigenvectors as columns.
    """
    a = a_in.copy()
    v = np.eye(3)
    scale = 0.0
    for i in range(3):
        for j in range(3):
            scale += a[i, j] * a[i, j]
    for _ in range(60):
        off = a[0, 1] * a[0, 1] + a[0, 2] * a[0, 2] + a[1, 2] * a[1, 2]
        if off <= 1e-34 * scale or off == 0.0:
            break
        for p, q, r in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
            if theta < 0.0:
                t = -t
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            tau = s / (1.0 + c)
            a[p, p] -= t * apq
            a[q, q] += t * apq
            a[p, q] = 0.0
            a[q, p] = 0.0
            arp = a[r, p]
            arq = a[r, q]
            a[r, p] = arp - s * (arq + tau * arp)
            a[p, r] = a[r, p]
            a[r, q] = arq + s * (arp - tau * arq)
            a[q, r] = a[r, q]
            for k in range(3):
                vkp = v[k, p]
                vkq = v[k, q]
                v[k, p] = vkp - s * (vkq + tau * vkp)
                v[k, q] = vkq + s * (vkp - tau * vkq)
    w = np.array([a[0, 0], a[1, 1], a[2, 2]])
    order = np.argsort(-w)
    ws = np.empty(3)
    vs = np.empty((3, 3))
    for k in range(3):
        ws[k] = w[order[k]]
        for i in range(3):
            vs[i, k] = v[i, order[k]]
    return ws, vs


@njit(cache=True)
def recompose_k(w, v):
    out = np.zeros((3, 3))
    for k in range(3):
        for i in range(3):
            for j in range(i, 3):
                out[i, j] += w[k] * v[i, k] * v[j, k]
    out[1, 0] = out[0, 1]
    out[2, 0] = out[0, 2]
    out[2, 1] = out[1, 2]
    return out


@njit(cache=True)
def det3_k(a):
    return (a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
            - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
            + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]))


@njit(cache=True)
def inv3_k(a):
    d = det3_k(a)
    out = np.empty((3, 3))
    out[0, 0] = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]) / d
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) / d
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) / d
    out[1, 0] = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]) / d
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) / d
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) / d
    out[2, 0] = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]) / d
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) / d
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) / d
    return out


@njit(cache=True)
def mm3_k(a, b):
    """``a @ b`` for 3x3 arrays without the BLAS call overhead."""
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return out


@njit(cache=True)
def mtm3_k(a, b):
    """``a.T @ b`` for 3x3 arrays."""
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[0, i] * b[0, j] + a[1, i] * b[1, j] + a[2, i] * b[2, j]
    return out


@njit(cache=True)
def mmt3_k(a, b):
    """``a @ b.T`` for 3x3 arrays."""
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[j, 0] + a[i, 1] * b[j, 1] + a[i, 2] * b[j, 2]
    return out


@njit(cache=True)
def matmul_k(a, b):
    """Small dense product with plain loops."""
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            if aip != 0.0:
                for j in range(n):
                    out[i, j] += aip * b[p, j]
    return out


@njit(cache=True)
def ddot_k(a, b):
    s = 0.0
    for i in range(3):
        for j in range(3):
            s += a[i, j] * b[i, j]
    return s


@njit(cache=True)
def to_voigt_k(t):
    return np.array([t[0, 0], t[1, 1], t[2, 2], t[0, 1], t[0, 2], t[1, 2]])


@njit(cache=True)
def from_voigt_k(v):
    t = np.empty((3, 3))
    t[0, 0] = v[0]
    t[1, 1] = v[1]
    t[2, 2] = v[2]
    t[0, 1] = v[3]
    t[1, 0] = v[3]
    t[0, 2] = v[4]
    t[2, 0] = v[4]
    t[1, 2] = v[5]
    t[2, 1] = v[5]
    return t


@njit(cache=True)
def _eig3_batch(a):
    w = np.empty((a.shape[0], 3))
    v = np.empty((a.shape[0], 3, 3))
    for k in range(a.shape[0]):
        w[k], v[k] = eig3_k(a[k])
    return w, v


@njit(cache=True)
def positive_part_k(t):
    """Positive part of symmetric ``t`` plus the eigen-pairs it was built from."""
    w, v = eig3_k(t)
    wp = np.maximum(w, 0.0)
    return recompose_k(wp, v), w, v
