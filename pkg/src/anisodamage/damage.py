"""Anisotropic damage at a material point.

Energy pieces
    ``psi_e = ((1 - k_ani) f_iso(D) + k_ani f_ani(C, D)) psi_NH(C)``,
    ``psi_d(xi)`` (isotropic hardening), ``psi_h(D)`` (kinematic hardening in
    the eigensystem of ``D``) and the micromorphic coupling of
    :mod:`anisodamage.micromorphic`.

Evolution
    onset function ``Phi = sqrt(3) sqrt(Y+ : A : Y+) - (Y0 - R_d)`` with the
    interaction tensor ``A : Y = (I - D)^c Y (I - D)^c``, associative flow
    ``dD = dgamma dPhi/dY``, ``dxi = dgamma`` and a Perzyna-type overstress
    ``Phi = eta_v dgamma / dt`` integrated with backward Euler.

The work is done by numba kernels (``*_k``) operating on ``(3, 3)`` arrays and a
packed parameter vector (see :meth:`MaterialParams.vector`).  The public
functions wrap them with validation and friendlier types.  Derivatives with
respect to a symmetric argument are returned as symmetric tensors
(``dphi/dT_ij`` with ``T_ij`` and ``T_ji`` varied independently); tangent
blocks of :class:`PointResponse` are Mandel matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from . import micromorphic as mm
from .hyperelastic import (MIN_DET_C, ElasticConstants, NonPositiveJacobian,
                           nh_energy_k, nh_stress_k)
from .tensor import (SQRT2, det3_k, matmul_k, mm3_k, mmt3_k, mtm3_k, ddot_k, eig3_k, from_voigt_k, inv3_k, positive_part_k,
                     recompose_k, tensor4_to_mandel, to_voigt_k)

_MANDEL = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])

# positions in the packed parameter vector
LAM, MU, KANI, ED, FD, Y0, CD, HD, RD, SD, KH, NH, AH, ETA = range(14)

# local solver status codes
ELASTIC, DAMAGING, FAILED, BAD_JACOBIAN = 0, 1, -1, -2


class LocalNewtonDiverged(RuntimeError):
    """The local return mapping did not converge."""


@dataclass(frozen=True)
class MaterialParams:
    """Material and numerical parameters.

    ``H_i`` and ``A_i`` are either one value used for every nonlocal degree of
    freedom or a sequence with one entry per degree of freedom.
    """

    elastic: ElasticConstants
    k_ani: float = 1.0
    e_d: float = 2.0
    f_d: float = 1.0
    Y0: float = 10.0
    c_d: float = 1.0
    H_d: float = 1.0
    r_d: float = 10.0
    s_d: float = 100.0
    K_h: float = 0.1
    n_h: float = 2.0
    a_h: float = 0.999999
    eta_v: float = 1.0
    H_i: float | tuple = 0.0
    A_i: float | tuple = 0.0

    def __post_init__(self):
        checks = {
            "k_ani in [0, 1]": 0.0 <= self.k_ani <= 1.0,
            "e_d >= 1": self.e_d >= 1.0,
            "f_d >= 1": self.f_d >= 1.0,
            "Y0 > 0": self.Y0 > 0.0,
            "n_h > 1": self.n_h > 1.0,
            "a_h in (0, 1)": 0.0 < self.a_h < 1.0,
            "eta_v >= 0": self.eta_v >= 0.0,
            "K_h >= 0": self.K_h >= 0.0,
            "H_i >= 0": np.all(np.asarray(self.H_i) >= 0.0),
            "A_i >= 0": np.all(np.asarray(self.A_i) >= 0.0),
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ValueError("invalid material parameters: " + ", ".join(bad))

    @classmethod
    def set1(cls, **overrides) -> "MaterialParams":
        """Single element parameter set (local: ``H_i = A_i = 0``)."""
        base = cls(ElasticConstants(5000.0, 7500.0), k_ani=1.0, Y0=10.0, r_d=10.0,
                   H_i=0.0, A_i=0.0)
        return replace(base, **overrides)

    @classmethod
    def set2(cls, **overrides) -> "MaterialParams":
        """Structural parameter set; gradient parameter defaults to model C's 3000 MPa mm^2."""
        base = cls(ElasticConstants(25000.0, 55000.0), k_ani=1.0, Y0=2.5, r_d=5.0,
                   H_i=1e4, A_i=3000.0)
        return replace(base, **overrides)

    def with_(self, **overrides) -> "MaterialParams":
        return replace(self, **overrides)

    def vector(self) -> np.ndarray:
        return np.array([self.elastic.lam, self.elastic.mu, self.k_ani, self.e_d, self.f_d,
                         self.Y0, self.c_d, self.H_d, self.r_d, self.s_d, self.K_h, self.n_h,
                         self.a_h, self.eta_v])

    def penalties(self, kind) -> np.ndarray:
        return _per_dof(self.H_i, mm.ModelKind.parse(kind).n_dofs, "H_i")

    def gradient_moduli(self, kind) -> np.ndarray:
        return _per_dof(self.A_i, mm.ModelKind.parse(kind).n_dofs, "A_i")

    def as_dict(self) -> dict:
        out = {"lam": self.elastic.lam, "mu": self.elastic.mu}
        for name in ("k_ani", "e_d", "f_d", "Y0", "c_d", "H_d", "r_d", "s_d", "K_h", "n_h",
                     "a_h", "eta_v"):
            out[name] = getattr(self, name)
        for name in ("H_i", "A_i"):
            v = getattr(self, name)
            out[name] = list(v) if isinstance(v, (tuple, list, np.ndarray)) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MaterialParams":
        d = dict(d)
        elastic = ElasticConstants(float(d.pop("lam")), float(d.pop("mu")))
        for name in ("H_i", "A_i"):
            if isinstance(d.get(name), list):
                d[name] = tuple(float(x) for x in d[name])
        return cls(elastic, **d)


def _per_dof(value, n, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise mm.DimensionMismatch(f"{name} has {arr.size} entries, model needs {n}")
    return arr.copy()


@dataclass
class InternalState:
    D: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    xi: float = 0.0

    def copy(self) -> "InternalState":
        return InternalState(self.D.copy(), float(self.xi))


@dataclass
class PointResponse:
    """Converged point quantities.

    Tangents (Mandel): ``dS_dC`` is ``dS/dC`` (6x6), ``dS_ddbar`` is ``(6, n)``,
    ``dxi0_dC`` is ``(n, 6)`` and ``dxi0_ddbar`` is ``(n, n)``.
    """

    S: np.ndarray
    Y: np.ndarray
    Y_e: np.ndarray
    Y_h: np.ndarray
    Y_dbar: np.ndarray
    R_d: float
    xi0: np.ndarray
    phi: float
    dgamma: float
    dS_dC: np.ndarray | None = None
    dS_ddbar: np.ndarray | None = None
    dxi0_dC: np.ndarray | None = None
    dxi0_ddbar: np.ndarray | None = None


# ---------------------------------------------------------------------------
# public wrappers
# ---------------------------------------------------------------------------

def _arr(x):
    return np.ascontiguousarray(x, dtype=float)


def _require_det(C):
    d = det3_k(C)
    if not d > MIN_DET_C:
        raise NonPositiveJacobian(f"det C = {d:g}")


def f_iso(D, p: MaterialParams) -> float:
    return float(f_iso_k(_arr(D), p.vector()))


def f_ani(C, D, p: MaterialParams) -> float:
    return float(f_ani_k(_arr(C), _arr(D), p.vector()))


def degradation(C, D, p: MaterialParams) -> float:
    """Mixed factor ``(1 - k_ani) f_iso + k_ani f_ani``."""
    return float(f_mix_k(_arr(C), _arr(D), p.vector()))


def psi_e(C, D, p: MaterialParams) -> float:
    C = _arr(C)
    _require_det(C)
    return float(psi_e_k(C, _arr(D), p.vector()))


def stress(C, D, p: MaterialParams) -> np.ndarray:
    C = _arr(C)
    _require_det(C)
    return stress_k(C, _arr(D), p.vector())


def dfani_dC(C, D, p: MaterialParams) -> np.ndarray:
    return dfani_dC_k(_arr(C), _arr(D), p.vector())


def dfiso_dD(D, p: MaterialParams) -> np.ndarray:
    return dfiso_dD_k(_arr(D), p.vector())


def dfani_dD(C, D, p: MaterialParams) -> np.ndarray:
    return dfani_dD_k(_arr(C), _arr(D), p.vector())


def dpsi_e_dD(C, D, p: MaterialParams) -> np.ndarray:
    """``dpsi_e/dD``; negative semi-definite for admissible states."""
    C = _arr(C)
    _require_det(C)
    return -driving_force_elastic_k(C, _arr(D), p.vector())


def driving_force_elastic(C, D, p: MaterialParams) -> np.ndarray:
    C = _arr(C)
    _require_det(C)
    return driving_force_elastic_k(C, _arr(D), p.vector())


def driving_force_kinematic(D, p: MaterialParams) -> np.ndarray:
    return driving_force_kinematic_k(_arr(D), p.vector())


def psi_h(D, p: MaterialParams) -> float:
    return float(psi_h_k(_arr(D), p.vector()))


def hardening_force(xi, p: MaterialParams) -> float:
    return float(hardening_force_k(float(xi), p.vector()))


def psi_d(xi, p: MaterialParams) -> float:
    return float(psi_d_k(float(xi), p.vector()))


def interaction_tensor(D, p: MaterialParams) -> np.ndarray:
    """Mandel matrix of the fourth-order interaction tensor with ``A : Y = B Y B``."""
    B = interaction_root_k(_arr(D), p.vector())
    a = 0.5 * (np.einsum("ik,jl->ijkl", B, B) + np.einsum("il,jk->ijkl", B, B))
    return tensor4_to_mandel(a)


def onset_function(Y, D, xi, p: MaterialParams) -> float:
    return float(onset_k(_arr(Y), _arr(D), float(xi), p.vector())[0])


def flow_direction(Y, D, xi, p: MaterialParams) -> np.ndarray:
    """``dPhi/dY`` including the derivative of the positive-part projection."""
    return onset_k(_arr(Y), _arr(D), float(xi), p.vector())[1]


def driving_force(C, D, dbar, p: MaterialParams, kind) -> np.ndarray:
    """Total ``Y = Y_e - Y_h - Y_dbar``."""
    kind = mm.ModelKind.parse(kind)
    C = _arr(C)
    _require_det(C)
    return total_driving_force_k(C, _arr(D), _arr(dbar), p.vector(),
                                 p.penalties(kind), int(kind))


def point_update(C, dbar, state: InternalState, dt: float, p: MaterialParams, kind,
                 tangent: bool = True) -> tuple[InternalState, PointResponse]:
    """Advance ``(D, xi)`` over one time step at fixed ``C`` and nonlocal values.

    Returns the new state and the converged response.  Tangent blocks come from
    linearising the converged local system (implicit function theorem, with
    finite-difference partial derivatives); :func:`consistent_tangent` offers
    the brute-force alternative.
    """
    kind = mm.ModelKind.parse(kind)
    C = _arr(C)
    dbar = _arr(np.atleast_1d(dbar))
    H = p.penalties(kind)
    if dbar.shape != H.shape:
        raise mm.DimensionMismatch(f"model {kind.name} expects {H.size} nonlocal values")
    if not dt > 0.0:
        raise ValueError("time step must be positive")
    pv = p.vector()
    Dn = _arr(state.D)
    out = point_update_k(C, dbar, Dn, float(state.xi), float(dt), pv, H, int(kind), tangent,
                         Dn, 0.0)
    status, D, xi, dgamma, S, xi0, dSdC, dSdd, dxdC, dxdd, phi = out
    if status == BAD_JACOBIAN:
        raise NonPositiveJacobian(f"det C = {det3_k(C):g}")
    if status == FAILED:
        raise LocalNewtonDiverged("return mapping failed to converge")
    Ye = driving_force_elastic_k(C, D, pv)
    Yh = driving_force_kinematic_k(D, pv)
    Yd = mm.nonlocal_force_k(D, dbar, H, int(kind))
    resp = PointResponse(S=S, Y=Ye - Yh - Yd, Y_e=Ye, Y_h=Yh, Y_dbar=Yd,
                         R_d=float(hardening_force_k(xi, pv)), xi0=xi0, phi=float(phi),
                         dgamma=float(dgamma))
    if tangent:
        _attach_mandel(resp, dSdC, dSdd, dxdC, dxdd)
    return InternalState(D, float(xi)), resp


def _attach_mandel(resp, dSdC, dSdd, dxdC, dxdd):
    # component-wise derivative -> Mandel: M = diag(s) K diag(1/s)
    resp.dS_dC = _MANDEL[:, None] * dSdC / _MANDEL[None, :]
    resp.dS_ddbar = _MANDEL[:, None] * dSdd
    resp.dxi0_dC = dxdC / _MANDEL[None, :]
    resp.dxi0_ddbar = dxdd.copy()


def consistent_tangent(C, dbar, state: InternalState, dt: float, p: MaterialParams, kind,
                       rel_step: float = 1e-6) -> PointResponse:
    """Tangent blocks by central differences of the whole :func:`point_update` map.

    Every perturbation re-runs the local return mapping from ``state``.  The
    result is a :class:`PointResponse` at the unperturbed input with the four
    blocks filled (Mandel convention).
    """
    kind = mm.ModelKind.parse(kind)
    C = _arr(C)
    dbar = _arr(np.atleast_1d(dbar))
    n = dbar.size
    _, base = point_update(C, dbar, state, dt, p, kind, tangent=False)
    dSdC = np.empty((6, 6))
    dxdC = np.empty((n, 6))
    for b, (i, j) in enumerate(((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))):
        h = rel_step * max(1.0, abs(C[i, j]))
        cols = []
        for sgn in (1.0, -1.0):
            Cp = C.copy()
            Cp[i, j] += sgn * h
            if i != j:
                Cp[j, i] += sgn * h
            cols.append(point_update(Cp, dbar, state, dt, p, kind, tangent=False)[1])
        dSdC[:, b] = (to_voigt_k(cols[0].S) - to_voigt_k(cols[1].S)) / (2 * h)
        dxdC[:, b] = (cols[0].xi0 - cols[1].xi0) / (2 * h)
    dSdd = np.empty((6, n))
    dxdd = np.empty((n, n))
    for b in range(n):
        h = rel_step * max(1.0, abs(dbar[b]))
        cols = []
        for sgn in (1.0, -1.0):
            dp = dbar.copy()
            dp[b] += sgn * h
            cols.append(point_update(C, dp, state, dt, p, kind, tangent=False)[1])
        dSdd[:, b] = (to_voigt_k(cols[0].S) - to_voigt_k(cols[1].S)) / (2 * h)
        dxdd[:, b] = (cols[0].xi0 - cols[1].xi0) / (2 * h)
    _attach_mandel(base, dSdC, dSdd, dxdC, dxdd)
    return base


# ---------------------------------------------------------------------------
# kernels: energies and driving forces
# ---------------------------------------------------------------------------

@njit(cache=True)
def _tr(a):
    return a[0, 0] + a[1, 1] + a[2, 2]


@njit(cache=True)
def _pow(base, e):
    if base <= 0.0:
        return 1.0 if e == 0.0 else 0.0
    return base ** e


@njit(cache=True)
def f_iso_k(D, P):
    return _pow(1.0 - _tr(D) / 3.0, P[ED])


@njit(cache=True)
def f_ani_k(C, D, P):
    C2 = mm3_k(C, C)
    return _pow(1.0 - ddot_k(C2, D) / _tr(C2), P[FD])


@njit(cache=True)
def f_mix_k(C, D, P):
    return (1.0 - P[KANI]) * f_iso_k(D, P) + P[KANI] * f_ani_k(C, D, P)


@njit(cache=True)
def psi_e_k(C, D, P):
    return f_mix_k(C, D, P) * nh_energy_k(C, P[LAM], P[MU])


@njit(cache=True)
def dfani_dC_k(C, D, P):
    C2 = mm3_k(C, C)
    t = _tr(C2)
    q = ddot_k(C2, D) / t
    pref = P[FD] * _pow(1.0 - q, P[FD] - 1.0)
    return pref * (-(mm3_k(D, C) + mm3_k(C, D)) / t + q * 2.0 * C / t)


@njit(cache=True)
def dfiso_dD_k(D, P):
    return -P[ED] * _pow(1.0 - _tr(D) / 3.0, P[ED] - 1.0) / 3.0 * np.eye(3)


@njit(cache=True)
def dfani_dD_k(C, D, P):
    C2 = mm3_k(C, C)
    t = _tr(C2)
    return -P[FD] * _pow(1.0 - ddot_k(C2, D) / t, P[FD] - 1.0) * C2 / t


@njit(cache=True)
def stress_k(C, D, P):
    psi = nh_energy_k(C, P[LAM], P[MU])
    s_nh = nh_stress_k(C, P[LAM], P[MU])
    out = f_mix_k(C, D, P) * s_nh
    if P[KANI] != 0.0:
        out += 2.0 * P[KANI] * psi * dfani_dC_k(C, D, P)
    return out


@njit(cache=True)
def driving_force_elastic_k(C, D, P):
    psi = nh_energy_k(C, P[LAM], P[MU])
    C2 = mm3_k(C, C)
    return _ye_from_parts(psi, C2, _tr(C2), D, P)


@njit(cache=True)
def _ye_from_parts(psi, C2, tC2, D, P):
    k = P[KANI]
    a_iso = (1.0 - k) * P[ED] * _pow(1.0 - _tr(D) / 3.0, P[ED] - 1.0) / 3.0
    a_ani = k * P[FD] * _pow(1.0 - ddot_k(C2, D) / tC2, P[FD] - 1.0) / tC2
    out = (a_ani * psi) * C2
    for i in range(3):
        out[i, i] += a_iso * psi
    return out


@njit(cache=True)
def _taylor_coeffs(P):
    a = P[AH]
    inv_n = 1.0 / P[NH]
    g0 = (1.0 - a) ** (-inv_n)
    g1 = inv_n * (1.0 - a) ** (-inv_n - 1.0)
    g2 = inv_n * (inv_n + 1.0) * (1.0 - a) ** (-inv_n - 2.0)
    return a, g0, g1, g2


@njit(cache=True)
def kinematic_scalar_k(x, P):
    """``(1 - x)^(-1/n_h) - 1``, continued by its 2nd-order Taylor expansion beyond ``a_h``."""
    a, g0, g1, g2 = _taylor_coeffs(P)
    if x <= a:
        return (1.0 - x) ** (-1.0 / P[NH]) - 1.0
    dx = x - a
    return g0 - 1.0 + g1 * dx + 0.5 * g2 * dx * dx


@njit(cache=True)
def kinematic_energy_scalar_k(x, P):
    a, g0, g1, g2 = _taylor_coeffs(P)
    m = 1.0 - 1.0 / P[NH]
    if x <= a:
        return -(1.0 - x) ** m / m - x + 1.0 / m
    base = -(1.0 - a) ** m / m - a + 1.0 / m
    dx = x - a
    return base + (g0 - 1.0) * dx + g1 * dx * dx / 2.0 + g2 * dx * dx * dx / 6.0


@njit(cache=True)
def driving_force_kinematic_k(D, P):
    if P[KH] == 0.0:
        return np.zeros((3, 3))
    w, v = eig3_k(D)
    g = np.empty(3)
    for i in range(3):
        g[i] = P[KH] * kinematic_scalar_k(w[i], P)
    return recompose_k(g, v)


@njit(cache=True)
def psi_h_k(D, P):
    w, _ = eig3_k(D)
    s = 0.0
    for i in range(3):
        s += kinematic_energy_scalar_k(w[i], P)
    return P[KH] * s


@njit(cache=True)
def hardening_force_k(xi, P):
    return -(P[RD] * (1.0 - np.exp(-P[SD] * xi)) + P[HD] * xi)


@njit(cache=True)
def hardening_slope_k(xi, P):
    return -(P[RD] * P[SD] * np.exp(-P[SD] * xi) + P[HD])


@njit(cache=True)
def psi_d_k(xi, P):
    return P[RD] * (xi + (np.exp(-P[SD] * xi) - 1.0) / P[SD]) + 0.5 * P[HD] * xi * xi


@njit(cache=True)
def interaction_root_k(D, P):
    """``B = (I - D)^c_d`` so that ``A : Y = B Y B``."""
    if P[CD] == 1.0:
        return np.eye(3) - D
    w, v = eig3_k(np.eye(3) - D)
    for i in range(3):
        w[i] = _pow(w[i], P[CD])
    return recompose_k(w, v)


# Relative width of the band of small positive eigenvalues of Y over which the
# Heaviside weight of the positive-part derivative is ramped from 0 to 1.  When
# B is not coaxial with Y, dPhi/dY jumps as an eigenvalue of Y crosses zero and
# the discrete flow rule then has no root; the ramp makes the direction continuous
# and leaves it exact for eigenvalues <= 0 or above the band.
KINK_BAND = 1e-6


@njit(cache=True)
def _step_weight(lam, band):
    if lam <= 0.0:
        return 0.0
    if lam >= band:
        return 1.0
    t = lam / band
    return t * t * (3.0 - 2.0 * t)


@njit(cache=True)
def _onset_parts(Y, D, P):
    """Pieces shared by the onset value and its derivatives.

    Returns ``(q, Yp, v, th, B)`` with ``q = Y+ : B Y+ B``, ``v`` the eigenvectors
    of ``Y`` and ``th`` the divided-difference weights of the positive part
    in that basis.
    """
    Yp, w, v = positive_part_k(Y)
    B = interaction_root_k(D, P)
    q = ddot_k(Yp, mm3_k(mm3_k(B, Yp), B))
    th = np.empty((3, 3))
    scale = max(1.0, np.sqrt(ddot_k(Y, Y)))
    tol = 1e-9 * scale
    band = KINK_BAND * scale
    for i in range(3):
        for j in range(3):
            if i == j:
                th[i, j] = _step_weight(w[i], band)
            elif abs(w[i] - w[j]) > tol:
                th[i, j] = (max(w[i], 0.0) - max(w[j], 0.0)) / (w[i] - w[j])
            else:
                th[i, j] = 0.5 * (_step_weight(w[i], band) + _step_weight(w[j], band))
    return q, Yp, v, th, B


@njit(cache=True)
def _pp_apply(v, th, X):
    """Derivative of the positive part (weights ``th`` in basis ``v``) applied to ``X``."""
    Xt = mm3_k(mtm3_k(v, X), v)
    for i in range(3):
        for j in range(3):
            Xt[i, j] *= th[i, j]
    out = mmt3_k(mm3_k(v, Xt), v)
    return 0.5 * (out + out.T)


@njit(cache=True)
def onset_k(Y, D, xi, P):
    """Onset value ``Phi`` and flow direction ``dPhi/dY``."""
    q, Yp, v, th, B = _onset_parts(Y, D, P)
    threshold = P[Y0] - hardening_force_k(xi, P)
    if q <= 0.0:
        return -threshold, np.zeros((3, 3))
    direction = (np.sqrt(3.0) / np.sqrt(q)) * _pp_apply(v, th, mm3_k(mm3_k(B, Yp), B))
    return np.sqrt(3.0 * q) - threshold, direction


@njit(cache=True)
def _onset_vector(Y, D, P):
    # six components of the flow direction and the root term of the onset value
    out = np.zeros(7)
    q, Yp, v, th, B = _onset_parts(Y, D, P)
    if q > 0.0:
        out[:6] = to_voigt_k((np.sqrt(3.0) / np.sqrt(q)) * _pp_apply(v, th, mm3_k(mm3_k(B, Yp), B)))
        out[6] = np.sqrt(3.0 * q)
    return out


@njit(cache=True)
def _onset_dD(Y, D, P):
    """Derivative of :func:`_onset_vector` w.r.t. the six components of ``D`` at fixed ``Y``."""
    out = np.zeros((7, 6))
    q, Yp, v, th, B = _onset_parts(Y, D, P)
    if q <= 0.0:
        return out
    M = mm3_k(mm3_k(B, Yp), B)
    PM = _pp_apply(v, th, M)
    YBY = mm3_k(mm3_k(Yp, B), Yp)
    sq = np.sqrt(q)
    for b in range(6):
        if P[CD] == 1.0:
            dB = -_perturbed(np.zeros((3, 3)), b, 1.0)
        else:
            hb = 1e-6
            dB = (interaction_root_k(_perturbed(D, b, hb), P)
                  - interaction_root_k(_perturbed(D, b, -hb), P)) / (2.0 * hb)
        dq = 2.0 * ddot_k(YBY, dB)
        BY = mm3_k(B, Yp)
        dM = mm3_k(mm3_k(dB, Yp), B) + mm3_k(BY, dB)
        dN = (-0.5 * np.sqrt(3.0) * dq / (q * sq)) * PM + (np.sqrt(3.0) / sq) * _pp_apply(v, th, dM)
        out[:6, b] = to_voigt_k(dN)
        out[6, b] = 1.5 * dq / np.sqrt(3.0 * q)
    return out


@njit(cache=True)
def total_driving_force_k(C, D, dbar, P, H, kind):
    Ye = driving_force_elastic_k(C, D, P)
    return Ye - driving_force_kinematic_k(D, P) - mm.nonlocal_force_k(D, dbar, H, kind)


# ---------------------------------------------------------------------------
# kernels: return mapping
# ---------------------------------------------------------------------------

@njit(cache=True)
def _local_residual(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind):
    D = from_voigt_k(z[:6])
    g = z[6]
    Y = _ye_from_parts(psi, C2, tC2, D, P) - driving_force_kinematic_k(D, P) \
        - mm.nonlocal_force_k(D, dbar, H, kind)
    phi, direction = onset_k(Y, D, xin + g, P)
    r = np.empty(7)
    rd = to_voigt_k(D - Dn - g * direction)
    r[:6] = rd
    r[6] = (phi - P[ETA] * g / dt) / P[Y0]
    return r


@njit(cache=True)
def _residual_at(C, z, dbar, Dn, xin, dt, P, H, kind):
    C2 = mm3_k(C, C)
    return _local_residual(z, nh_energy_k(C, P[LAM], P[MU]), C2, _tr(C2), dbar, Dn, xin,
                           dt, P, H, kind)


@njit(cache=True)
def _max_eig(z):
    w, _ = eig3_k(from_voigt_k(z[:6]))
    return w[0]


@njit(cache=True)
def _converged(r, tol_phi, tol_d):
    if abs(r[6]) > tol_phi:
        return False
    for k in range(6):
        if abs(r[k]) > tol_d:
            return False
    return True


@njit(cache=True)
def _rnorm(r):
    s = 0.0
    for k in range(7):
        s += r[k] * r[k]
    return np.sqrt(s)


@njit(cache=True)
def _fd_jacobian(z, r, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind):
    """Forward-difference Jacobian of the local residual."""
    J = np.empty((7, 7))
    for j in range(7):
        h = 1e-8 * max(1.0, abs(z[j]))
        zp = z.copy()
        zp[j] += h
        J[:, j] = (_local_residual(zp, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind) - r) / h
    return J


@njit(cache=True)
def _newton_monolithic(z0, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind, maxit, tol_phi,
                       tol_d):
    """Newton with backtracking on ``(D, dgamma)``.

    Returns ``(converged, z)``.
    """
    z = z0.copy()
    r = _local_residual(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
    for it in range(maxit):
        if _converged(r, tol_phi, tol_d):
            return True, z
        J = _fd_jacobian(z, r, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
        dz = np.linalg.solve(J, -r)
        rn0 = _rnorm(r)
        alpha = 1.0
        accepted = False
        for _ in range(30):
            zt = z + alpha * dz
            if zt[6] >= 0.0 and _max_eig(zt) < 1.0:
                rt = _local_residual(zt, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
                if _rnorm(rt) < (1.0 - 1e-4 * alpha) * rn0 or alpha < 1e-3:
                    accepted = True
                    break
            elif zt[6] < 0.0 and alpha == 1.0 and z[6] > 0.0:
                # keep dgamma non-negative by clipping the first trial
                alpha = min(0.999 * z[6] / -dz[6], 0.5)
                continue
            alpha *= 0.5
        if not accepted:
            return False, z
        z = zt
        r = rt
    return _converged(r, tol_phi, tol_d), z


@njit(cache=True)
def _solve_d_given_gamma(g, zD0, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind):
    # inner Newton on the six damage components at fixed multiplier
    z = np.empty(7)
    z[:6] = zD0
    z[6] = g
    J = np.empty((6, 6))
    for it in range(60):
        r = _local_residual(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
        err = 0.0
        for k in range(6):
            err = max(err, abs(r[k]))
        if err < 1e-13:
            return True, z, r[6]
        for j in range(6):
            h = 1e-8 * max(1.0, abs(z[j]))
            zp = z.copy()
            zp[j] += h
            J[:, j] = (_local_residual(zp, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)[:6]
                       - r[:6]) / h
        dz = np.linalg.solve(J, -r[:6])
        alpha = 1.0
        for _ in range(30):
            zt = z.copy()
            zt[:6] += alpha * dz
            if _max_eig(zt) < 1.0:
                break
            alpha *= 0.5
        z = zt
    return False, z, 0.0


@njit(cache=True)
def _newton_nested(psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind, tol_phi):
    """Fallback: regula falsi on the multiplier, inner Newton for ``D``."""
    zD = to_voigt_k(Dn)
    lo, f_lo = 0.0, 1.0  # residual at zero multiplier is the (positive) trial value
    z = np.empty(7)
    z[:6] = zD
    z[6] = 0.0
    f_lo = _local_residual(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)[6]
    hi = 1e-6
    f_hi = 0.0
    found = False
    zD_hi = zD.copy()
    for _ in range(80):
        ok, zt, f = _solve_d_given_gamma(hi, zD, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
        if ok and f < 0.0:
            f_hi = f
            zD_hi = zt[:6].copy()
            found = True
            break
        if ok:
            lo, f_lo = hi, f
            zD = zt[:6].copy()
        hi *= 2.0
    if not found:
        return False, z
    side = 0
    zD_lo = zD
    for _ in range(200):
        g = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not (lo < g < hi):
            g = 0.5 * (lo + hi)
        ok, zt, f = _solve_d_given_gamma(g, zD_lo, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
        if not ok:
            g = 0.5 * (lo + hi)
            ok, zt, f = _solve_d_given_gamma(g, zD_lo, psi, C2, tC2, dbar, Dn, xin, dt, P, H,
                                             kind)
            if not ok:
                return False, zt
        if abs(f) <= tol_phi:
            return True, zt
        if f > 0.0:
            lo, f_lo = g, f
            zD_lo = zt[:6].copy()
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi, f_hi = g, f
            if side == -1:
                f_lo *= 0.5
            side = -1
        if hi - lo <= 1e-15 * max(1.0, hi):
            return True, zt
    return False, zt


@njit(cache=True)
def _perturbed(T, b, h):
    i, j = _PAIRS_K[b]
    out = T.copy()
    out[i, j] += h
    if i != j:
        out[j, i] += h
    return out


_PAIRS_K = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@njit(cache=True)
def nh_dSdC_k(C, lam, mu):
    """Analytic ``dS_NH/dc`` with ``c`` the six components of ``C`` (shear varied pairwise)."""
    d = det3_k(C)
    ci = inv3_k(C)
    a = 0.5 * lam * d
    b = 0.5 * (lam * (d - 1.0) - 2.0 * mu)
    out = np.empty((6, 6))
    for p in range(6):
        I, J = _PAIRS_K[p]
        for q in range(6):
            K, L = _PAIRS_K[q]
            v = a * ci[I, J] * ci[K, L] - b * 0.5 * (ci[I, K] * ci[J, L] + ci[I, L] * ci[J, K])
            out[p, q] = v if K == L else 2.0 * v
    return out


@njit(cache=True)
def _is_zero(D):
    for i in range(3):
        for j in range(3):
            if D[i, j] != 0.0:
                return False
    return True


@njit(cache=True)
def _stress_dC(C, D, P, h):
    """``dS/dc`` at frozen damage: analytic for ``D = 0``, central differences otherwise."""
    if _is_zero(D):
        return nh_dSdC_k(C, P[LAM], P[MU])
    out = np.empty((6, 6))
    for b in range(6):
        out[:, b] = (to_voigt_k(stress_k(_perturbed(C, b, h), D, P))
                     - to_voigt_k(stress_k(_perturbed(C, b, -h), D, P))) / (2 * h)
    return out


@njit(cache=True)
def _stress_dD(C, D, P, h):
    out = np.empty((6, 6))
    for b in range(6):
        out[:, b] = (to_voigt_k(stress_k(C, _perturbed(D, b, h), P))
                     - to_voigt_k(stress_k(C, _perturbed(D, b, -h), P))) / (2 * h)
    return out


@njit(cache=True)
def _local_jacobians(C, z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind):
    """Jacobians of the local residual w.r.t. ``z`` and ``(c, dbar)`` at a converged point.

    The residual depends on ``C`` and ``dbar`` only through the driving force
    ``Y``, so both Jacobians are assembled from the derivative of the onset
    pieces w.r.t. ``Y`` (central differences), the explicit ``D`` and ``xi``
    dependence (analytic) and the derivatives of ``Y`` itself.
    """
    n = dbar.shape[0]
    D = from_voigt_k(z[:6])
    g = z[6]
    Y = total_driving_force_k(C, D, dbar, P, H, kind)
    # d(onset)/dY
    GY = np.empty((7, 6))
    hy = 1e-6 * max(1.0, np.sqrt(ddot_k(Y, Y)))
    for b in range(6):
        GY[:, b] = (_onset_vector(_perturbed(Y, b, hy), D, P)
                    - _onset_vector(_perturbed(Y, b, -hy), D, P)) / (2.0 * hy)
    GD = _onset_dD(Y, D, P)
    # dY/dD at fixed C and dbar
    YD = np.empty((6, 6))
    hd = 1e-6
    for b in range(6):
        Dp = _perturbed(D, b, hd)
        Dm = _perturbed(D, b, -hd)
        YD[:, b] = (to_voigt_k(_ye_from_parts(psi, C2, tC2, Dp, P) - driving_force_kinematic_k(Dp, P)
                               - mm.nonlocal_force_k(Dp, dbar, H, kind))
                    - to_voigt_k(_ye_from_parts(psi, C2, tC2, Dm, P)
                                 - driving_force_kinematic_k(Dm, P)
                                 - mm.nonlocal_force_k(Dm, dbar, H, kind))) / (2.0 * hd)
    # dY/dc and dY/ddbar
    Yp = np.empty((6, 6 + n))
    for b in range(6):
        i, j = _PAIRS_K[b]
        hc = 1e-6 * max(1.0, abs(C[i, j]))
        Cp = _perturbed(C, b, hc)
        Cm = _perturbed(C, b, -hc)
        Yp[:, b] = (to_voigt_k(driving_force_elastic_k(Cp, D, P))
                    - to_voigt_k(driving_force_elastic_k(Cm, D, P))) / (2.0 * hc)
    dd = mm.tuple_derivative_k(D, kind)
    for k in range(n):
        Yp[:, 6 + k] = H[k] * to_voigt_k(dd[k])
    dY = matmul_k(GY, YD) + GD
    Jz = np.zeros((7, 7))
    for a in range(6):
        Jz[a, a] = 1.0
        for b in range(6):
            Jz[a, b] -= g * dY[a, b]
    for b in range(6):
        Jz[6, b] = dY[6, b] / P[Y0]
    _, N = onset_k(Y, D, xin + g, P)
    Nv = to_voigt_k(N)
    for a in range(6):
        Jz[a, 6] = -Nv[a]
    Jz[6, 6] = (hardening_slope_k(xin + g, P) - P[ETA] / dt) / P[Y0]
    Jp = matmul_k(GY, Yp)
    for a in range(6):
        for b in range(6 + n):
            Jp[a, b] *= -g
    for b in range(6 + n):
        Jp[6, b] /= P[Y0]
    return Jz, Jp


@njit(cache=True)
def _tuple_jacobian(D, kind):
    # d d_k / d z_b with z the six components (shear entries varied pairwise)
    dd = mm.tuple_derivative_k(D, kind)
    n = dd.shape[0]
    out = np.empty((n, 6))
    pairs = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
    for k in range(n):
        for b in range(6):
            i, j = pairs[b]
            out[k, b] = dd[k, i, j] if i == j else 2.0 * dd[k, i, j]
    return out


@njit(cache=True)
def point_update_k(C, dbar, Dn, xin, dt, P, H, kind, want_tangent, Dg, gg):
    """Return mapping at one point.

    ``(Dg, gg)`` is a starting guess for the local Newton iteration, used when
    ``gg > 0`` (typically the solution of the previous global iteration); the
    loading decision is always taken at the trial state ``(Dn, 0)``.

    Returns ``(status, D, xi, dgamma, S, xi0, dSdC, dSdd, dxdC, dxdd, phi)`` with
    tangent blocks as derivatives with respect to the six components of ``C``
    (shear entries varied pairwise) and with respect to ``dbar``.
    """
    n = dbar.shape[0]
    dSdC = np.zeros((6, 6))
    dSdd = np.zeros((6, n))
    dxdC = np.zeros((n, 6))
    dxdd = np.zeros((n, n))
    xi0 = np.zeros(n)
    if not det3_k(C) > MIN_DET_C:
        return BAD_JACOBIAN, Dn.copy(), xin, 0.0, np.zeros((3, 3)), xi0, dSdC, dSdd, dxdC, \
            dxdd, 0.0
    psi = nh_energy_k(C, P[LAM], P[MU])
    C2 = mm3_k(C, C)
    tC2 = _tr(C2)
    z = np.zeros(7)
    z[:6] = to_voigt_k(Dn)
    r0 = _local_residual(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
    tol_phi = 1e-10
    tol_d = 1e-12
    status = ELASTIC
    if r0[6] > 0.0:
        ok = False
        if gg > 0.0:
            zg = np.empty(7)
            zg[:6] = to_voigt_k(Dg)
            zg[6] = gg
            # guesses further from the solution than the trial state are skipped;
            # the iteration count is capped so a poor guess costs little
            if _max_eig(zg) < 1.0 and _rnorm(_local_residual(
                    zg, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)) < _rnorm(r0):
                ok, zs = _newton_monolithic(zg, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind, 8,
                                            tol_phi, tol_d)
                if ok:
                    z = zs
        if not ok:
            ok, z = _newton_monolithic(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind, 50,
                                       tol_phi, tol_d)
        if not ok:
            ok, z = _newton_nested(psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind, tol_phi)
        if not ok:
            return FAILED, Dn.copy(), xin, 0.0, np.zeros((3, 3)), xi0, dSdC, dSdd, dxdC, \
                dxdd, 0.0
        status = DAMAGING
    D = Dn.copy() if status == ELASTIC else from_voigt_k(z[:6])
    g = z[6]
    xi = xin + g
    S = stress_k(C, D, P)
    d = mm.tuple_value_k(D, kind)
    for k in range(n):
        xi0[k] = -H[k] * (d[k] - dbar[k])
    rf = _local_residual(z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
    phi = rf[6] * P[Y0] + P[ETA] * g / dt
    if want_tangent:
        h = 1e-6
        dSdC[:, :] = _stress_dC(C, D, P, h)
        for k in range(n):
            dxdd[k, k] = H[k]
        if status == DAMAGING:
            Jz, Jp = _local_jacobians(C, z, psi, C2, tC2, dbar, Dn, xin, dt, P, H, kind)
            dz = -np.linalg.solve(Jz, Jp)
            dD = np.ascontiguousarray(dz[:6, :])
            full = matmul_k(_stress_dD(C, D, P, h), dD)
            dSdC[:, :] += full[:, :6]
            dSdd[:, :] = full[:, 6:]
            jd = matmul_k(_tuple_jacobian(D, kind), dD)
            for k in range(n):
                for b in range(6):
                    dxdC[k, b] = -H[k] * jd[k, b]
                for b in range(n):
                    dxdd[k, b] -= H[k] * jd[k, 6 + b]
    return status, D, xi, g, S, xi0, dSdC, dSdd, dxdC, dxdd, phi
