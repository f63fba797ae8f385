"""Coupled displacement / micromorphic hexahedron.

Each node carries ``3 + n`` unknowns ``(u_x, u_y, u_z, dbar_1, ..., dbar_n)``;
the element vector is node-major.  The residuals are

    r_u[a, i]  = sum_gp (F S)_iJ dN_a/dX_J w
    r_d[a, k]  = sum_gp (xi0_k N_a + A_k Grad dbar_k . Grad N_a) w

and the consistent tangent is assembled from the material blocks returned by
the point update.  ``element_tangent(..., method="fd")`` gives the
finite-difference reference.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .. import damage as dm
from .. import micromorphic as mm
from ..damage import MaterialParams, point_update_k
from ..hyperelastic import NonPositiveJacobian
from ..tensor import det3_k, mm3_k, mtm3_k
from .shape import reference_gradients

_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class ConstitutiveFailure(RuntimeError):
    """A point update failed; carries the element and Gauss point."""

    def __init__(self, element: int, gauss_point: int, status: int):
        self.element, self.gauss_point, self.status = element, gauss_point, status
        reason = "det F <= 0" if status == dm.BAD_JACOBIAN else "local Newton diverged"
        super().__init__(f"{reason} in element {element}, Gauss point {gauss_point}")


@njit(cache=True)
def _helmholtz(C, D, xi, d, dbar, grad, P, H, A):
    s = dm.psi_e_k(C, D, P) + dm.psi_h_k(D, P) + dm.psi_d_k(xi, P)
    for k in range(d.shape[0]):
        s += 0.5 * H[k] * (d[k] - dbar[k]) ** 2
        for j in range(3):
            s += 0.5 * A[k] * grad[k, j] ** 2
    return s


@njit(cache=True)
def element_kernel(dNdX, wdet, N, ue, de, Dn, xin, dt, P, H, A, kind, want_K, Dg, gg):
    """Residual, tangent and updated Gauss point states of one element.

    Returns ``(status, gp, r, K, D, xi, dgamma, dissipation, energy)`` where
    ``status`` is the first non-converged point status (0 when all converged)
    and ``dissipation`` is ``Y : dD + R_d dxi`` per Gauss point.  ``(Dg, gg)``
    are starting guesses for the local iterations (see ``point_update_k``).
    """
    n = de.shape[1]
    nd = 3 + n
    ndof = 8 * nd
    r = np.zeros(ndof)
    K = np.zeros((ndof, ndof))
    Dnew = np.empty((8, 3, 3))
    xinew = np.empty(8)
    dgam = np.zeros(8)
    diss = np.zeros(8)
    energy = 0.0
    G = np.empty((8, 3, 6))
    geo = np.empty((8, 8))
    gab = np.empty((8, 8))
    gw = np.empty(6)
    gwD = np.empty(6)
    gwS = np.empty(n)
    xG = np.empty((n, 8, 3))
    for g in range(8):
        dN = dNdX[g]
        w = wdet[g]
        F = np.eye(3)
        for a in range(8):
            for i in range(3):
                for J in range(3):
                    F[i, J] += ue[a, i] * dN[a, J]
        # det C cannot see inversion, so the sign of det F is checked here
        if det3_k(F) <= 0.0:
            return dm.BAD_JACOBIAN, g, r, K, Dnew, xinew, dgam, diss, energy
        C = mtm3_k(F, F)
        dbar = np.zeros(n)
        grad = np.zeros((n, 3))
        for a in range(8):
            for k in range(n):
                dbar[k] += N[g, a] * de[a, k]
                for J in range(3):
                    grad[k, J] += de[a, k] * dN[a, J]
        status, D, xi, dgamma, S, xi0, dSdC, dSdd, dxdC, dxdd, phi = point_update_k(
            C, dbar, Dn[g], xin[g], dt, P, H, kind, want_K, Dg[g], gg[g])
        if status < 0:
            return status, g, r, K, Dnew, xinew, dgam, diss, energy
        Dnew[g] = D
        xinew[g] = xi
        dgam[g] = dgamma
        if dgamma > 0.0:
            Y = dm.total_driving_force_k(C, D, dbar, P, H, kind)
            dD = D - Dn[g]
            diss[g] = dm.ddot_k(Y, dD) + dm.hardening_force_k(xi, P) * dgamma
        d = mm.tuple_value_k(D, kind)
        energy += w * _helmholtz(C, D, xi, d, dbar, grad, P, H, A)
        FS = mm3_k(F, S)
        for a in range(8):
            for i in range(3):
                s = 0.0
                for J in range(3):
                    s += FS[i, J] * dN[a, J]
                r[a * nd + i] += s * w
            for k in range(n):
                s = xi0[k] * N[g, a]
                for J in range(3):
                    s += A[k] * grad[k, J] * dN[a, J]
                r[a * nd + 3 + k] += s * w
        if not want_K:
            continue
        # dC components for a unit displacement of node a in direction i
        for a in range(8):
            for i in range(3):
                for c in range(6):
                    I, J = _PAIRS[c]
                    G[a, i, c] = F[i, I] * dN[a, J] + F[i, J] * dN[a, I]
        for a in range(8):
            for b in range(8):
                s = 0.0
                for I in range(3):
                    for J in range(3):
                        s += dN[a, I] * S[I, J] * dN[b, J]
                geo[a, b] = s
                s = 0.0
                for J in range(3):
                    s += dN[a, J] * dN[b, J]
                gab[a, b] = s
        for a in range(8):
            for i in range(3):
                row = a * nd + i
                for c in range(6):
                    gw[c] = G[a, i, c] * (0.5 if c < 3 else 1.0)
                for c in range(6):
                    s = 0.0
                    for e in range(6):
                        s += gw[e] * dSdC[e, c]
                    gwD[c] = s
                for m in range(n):
                    s = 0.0
                    for e in range(6):
                        s += gw[e] * dSdd[e, m]
                    gwS[m] = s
                for b in range(8):
                    for j in range(3):
                        s = 0.0
                        for c in range(6):
                            s += gwD[c] * G[b, j, c]
                        if i == j:
                            s += geo[a, b]
                        K[row, b * nd + j] += s * w
                    for m in range(n):
                        K[row, b * nd + 3 + m] += gwS[m] * N[g, b] * w
        for b in range(8):
            for j in range(3):
                for k in range(n):
                    s = 0.0
                    for c in range(6):
                        s += dxdC[k, c] * G[b, j, c]
                    xG[k, b, j] = s
        for a in range(8):
            for k in range(n):
                row = a * nd + 3 + k
                for b in range(8):
                    for j in range(3):
                        K[row, b * nd + j] += N[g, a] * xG[k, b, j] * w
                    for m in range(n):
                        v = N[g, a] * N[g, b] * dxdd[k, m]
                        if k == m:
                            v += A[k] * gab[a, b]
                        K[row, b * nd + 3 + m] += v * w
    return 0, -1, r, K, Dnew, xinew, dgam, diss, energy


@njit(cache=True)
def assemble_kernel(conn, dNdX, wdet, N, U, D, xi, dt, P, H, A, kind, want_K, Dg, gg):
    """Loop :func:`element_kernel` over all elements; stops at the first failure."""
    ne = conn.shape[0]
    nd = U.shape[1]
    n = nd - 3
    ndof = 8 * nd
    R = np.zeros((ne, ndof))
    Ks = np.zeros((ne, ndof, ndof) if want_K else (0, ndof, ndof))
    Dnew = np.empty_like(D)
    xinew = np.empty_like(xi)
    dgam = np.zeros((ne, 8))
    diss = np.zeros((ne, 8))
    energy = np.zeros(ne)
    ue = np.empty((8, 3))
    de = np.empty((8, n))
    for e in range(ne):
        for a in range(8):
            for i in range(3):
                ue[a, i] = U[conn[e, a], i]
            for k in range(n):
                de[a, k] = U[conn[e, a], 3 + k]
        status, gp, r, K, De, xie, dge, dse, en = element_kernel(
            dNdX[e], wdet[e], N, ue, de, D[e], xi[e], dt, P, H, A, kind, want_K, Dg[e], gg[e])
        if status < 0:
            return status, e, gp, R, Ks, Dnew, xinew, dgam, diss, energy
        R[e] = r
        if want_K:
            Ks[e] = K
        Dnew[e] = De
        xinew[e] = xie
        dgam[e] = dge
        diss[e] = dse
        energy[e] = en
    return 0, -1, -1, R, Ks, Dnew, xinew, dgam, diss, energy


# ---------------------------------------------------------------------------
# single-element Python interface
# ---------------------------------------------------------------------------

def _prepare(X_e, u_e, dbar_e, states_n, kind, p):
    kind = mm.ModelKind.parse(kind)
    n = kind.n_dofs
    X_e = np.asarray(X_e, dtype=float).reshape(8, 3)
    u_e = np.ascontiguousarray(np.asarray(u_e, dtype=float).reshape(8, 3))
    if dbar_e is None:
        dbar_e = np.zeros((8, n))
    dbar_e = np.ascontiguousarray(np.asarray(dbar_e, dtype=float).reshape(8, -1))
    if dbar_e.shape[1] != n:
        raise mm.DimensionMismatch(f"model {kind.name} needs {n} nonlocal values per node")
    if states_n is None:
        D, xi = np.zeros((8, 3, 3)), np.zeros(8)
    else:
        D, xi = states_n
        D = np.ascontiguousarray(np.asarray(D, dtype=float).reshape(8, 3, 3))
        xi = np.ascontiguousarray(np.asarray(xi, dtype=float).reshape(8))
    N, dNdX, wdet = reference_gradients(X_e[None])
    return kind, n, u_e, dbar_e, D, xi, N, dNdX[0], wdet[0], p.penalties(kind), \
        p.gradient_moduli(kind)


def _run(X_e, u_e, dbar_e, states_n, dt, p, kind, want_K):
    kind, n, u_e, dbar_e, D, xi, N, dNdX, wdet, H, A = _prepare(X_e, u_e, dbar_e, states_n,
                                                                kind, p)
    out = element_kernel(dNdX, wdet, N, u_e, dbar_e, D, xi, float(dt), p.vector(), H, A,
                         int(kind), want_K, D, np.zeros(8))
    status, gp = out[0], out[1]
    if status < 0:
        raise_for_status(status, 0, gp)
    return n, out


def element_residual(X_e, u_e, dbar_e, states_n, dt, p: MaterialParams, kind):
    """Residual of one element.

    Returns ``(r_u (24,), r_dbar (8 n,), (D (8, 3, 3), xi (8,)))``; the nonlocal
    part is ordered node-major.
    """
    n, out = _run(X_e, u_e, dbar_e, states_n, dt, p, kind, False)
    r = out[2].reshape(8, 3 + n)
    return r[:, :3].ravel(), r[:, 3:].ravel(), (out[4], out[5])


def element_tangent(X_e, u_e, dbar_e, states_n, dt, p: MaterialParams, kind,
                    method: str = "consistent", rel_step: float = 1e-6) -> np.ndarray:
    """Element matrix in node-major ordering, shape ``(8 (3 + n), 8 (3 + n))``.

    ``method="consistent"`` assembles the material blocks of the point
    update; ``method="fd"`` differentiates :func:`element_residual` by central
    differences with step ``rel_step * max(1, |q|)``.
    """
    if method == "consistent":
        return _run(X_e, u_e, dbar_e, states_n, dt, p, kind, True)[1][3]
    if method != "fd":
        raise ValueError(f"unknown tangent method {method!r}")
    kind = mm.ModelKind.parse(kind)
    n = kind.n_dofs
    u_e = np.asarray(u_e, dtype=float).reshape(8, 3)
    dbar_e = np.zeros((8, n)) if dbar_e is None else np.asarray(dbar_e, float).reshape(8, n)
    q0 = np.hstack([u_e, dbar_e]).ravel()
    K = np.empty((q0.size, q0.size))
    for j in range(q0.size):
        h = rel_step * max(1.0, abs(q0[j]))
        cols = []
        for sgn in (1.0, -1.0):
            q = q0.copy()
            q[j] += sgn * h
            qn = q.reshape(8, 3 + n)
            n_, out = _run(X_e, qn[:, :3], qn[:, 3:], states_n, dt, p, kind, False)
            cols.append(out[2])
        K[:, j] = (cols[0] - cols[1]) / (2.0 * h)
    return K


def raise_for_status(status, element, gp):
    if status == dm.BAD_JACOBIAN:
        raise NonPositiveJacobian(f"det F <= 0 in element {element}, Gauss point {gp}")
    raise ConstitutiveFailure(element, gp, status)
