"""Executable verification of the model's structural properties.

Four checks, each returning a :class:`CheckResult`:

``damage_growth``
    the elastic energy never increases for a positive semi-definite damage
    increment: ``dpsi_e/dD`` is negative semi-definite;
``isochoric_violation``
    a damage model acting on the isochoric energy ``mu/2 tr((Cbar - I)(I - D))``
    does violate that requirement (uniaxial counterexample);
``boundary_derivatives``
    ``df_ani/dC`` vanishes at ``D = 0`` and ``D = I``;
``fd_consistency``
    every analytic derivative matches central differences.

Random states follow one generator: ``C = F^T F`` with ``F = I + 0.5 R``,
``R`` uniform in ``[-1, 1]^9`` and ``det F >= 0.3``; ``D = Q diag(u) Q^T`` with
``u`` uniform in ``[0, 0.95]`` and ``Q`` a random rotation.
"""
from __future__ import annotations

import os
import time
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
import yaml
from numba import njit, prange
from scipy.spatial.transform import Rotation

from . import damage as dmg
from . import micromorphic as mm
from .damage import MaterialParams
from .hyperelastic import ElasticConstants, neo_hooke_energy, neo_hooke_stress, neo_hooke_tangent
from .tensor import VOIGT_PAIRS, eig3_k, positive_part, tensor4_to_mandel

DEFAULT_SEED = 42

# OpenMP and the work queue are tried before TBB, whose common packaged
# versions numba rejects with a warning; an explicit user choice wins
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@dataclass
class CheckResult:
    name: str
    samples: int
    worst: float
    tolerance: float
    passed: bool
    seed: int | None
    details: dict = field(default_factory=dict)
    worst_sample: dict | None = None
    seconds: float = 0.0


@dataclass
class VerifyReport:
    seed: int
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "passed": self.passed,
                "checks": [_plain(asdict(c)) for c in self.checks]}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# random admissible states
# ---------------------------------------------------------------------------

def random_deformation(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` deformation gradients ``I + 0.5 R`` with ``det F >= 0.3``."""
    out = np.empty((n, 3, 3))
    filled = 0
    while filled < n:
        F = np.eye(3) + 0.5 * rng.uniform(-1.0, 1.0, size=(2 * (n - filled) + 8, 3, 3))
        ok = F[np.linalg.det(F) >= 0.3][: n - filled]
        out[filled:filled + len(ok)] = ok
        filled += len(ok)
    return out


def random_cauchy_green(rng, n) -> np.ndarray:
    F = random_deformation(rng, n)
    return np.einsum("nki,nkj->nij", F, F)


def random_damage(rng, n, upper=0.95) -> np.ndarray:
    Q = Rotation.random(n, random_state=rng).as_matrix()
    u = rng.uniform(0.0, upper, size=(n, 3))
    return np.einsum("nij,nj,nkj->nik", Q, u, Q)


# ---------------------------------------------------------------------------
# damage growth criterion
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _growth_kernel(Cs, Ds, dDs, Ps):
    # samples are independent and write only their own slot, so the reduction
    # afterwards sees them in index order whatever the thread count
    n = Cs.shape[0]
    ratio = np.empty(n)
    ratio_fd = np.empty(n)
    contraction = np.empty(n)
    for s in prange(n):
        C, D, P = Cs[s], Ds[s], Ps[s]
        psi = dmg.nh_energy_k(C, P[dmg.LAM], P[dmg.MU])
        scale = max(1.0, psi)
        G = -dmg.driving_force_elastic_k(C, D, P)
        w, _ = eig3_k(G)
        ratio[s] = w[0] / scale
        # central differences, symmetric perturbation of each component
        Gfd = np.zeros((3, 3))
        for i in range(3):
            for j in range(i, 3):
                h = 1e-6
                Dp = D.copy()
                Dm = D.copy()
                Dp[i, j] += h
                Dm[i, j] -= h
                if i != j:
                    Dp[j, i] += h
                    Dm[j, i] -= h
                d = (dmg.psi_e_k(C, Dp, P) - dmg.psi_e_k(C, Dm, P)) / (2 * h)
                if i == j:
                    Gfd[i, i] = d
                else:
                    Gfd[i, j] = 0.5 * d
                    Gfd[j, i] = 0.5 * d
        wf, _ = eig3_k(Gfd)
        ratio_fd[s] = wf[0] / scale
        contraction[s] = dmg.ddot_k(G, dDs[s]) / scale
    return ratio, ratio_fd, contraction


def check_damage_growth(samples: int = 10_000, seed: int = DEFAULT_SEED,
                        k_values=(0.0, 0.5, 1.0), tol: float = 1e-10) -> CheckResult:
    """Largest eigenvalue of ``dpsi_e/dD`` over random states, scaled by ``max(1, psi_NH)``.

    Every sample is evaluated for each ``k_ani`` in ``k_values``, with
    exponents ``e_d, f_d`` drawn from ``[1, 3]`` and Lamé constants from
    either parameter set.  Also checks ``dpsi_e/dD : dD <= 0`` for random
    positive semi-definite ``dD``.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    C = random_cauchy_green(rng, samples)
    D = random_damage(rng, samples)
    dD = random_damage(rng, samples, upper=1.0)
    e_d = rng.uniform(1.0, 3.0, samples)
    f_d = rng.uniform(1.0, 3.0, samples)
    which = rng.integers(0, 2, samples)
    base = [MaterialParams.set1().vector(), MaterialParams.set2().vector()]
    worst, worst_fd, worst_c = -np.inf, -np.inf, -np.inf
    worst_sample = None
    for k in k_values:
        P = np.array([base[w] for w in which])
        P[:, dmg.KANI] = k
        P[:, dmg.ED] = e_d
        P[:, dmg.FD] = f_d
        r, rf, c = _growth_kernel(C, D, dD, P)
        i = int(np.argmax(r))
        if r[i] > worst:
            worst = float(r[i])
            worst_sample = {"index": i, "k_ani": k, "C": C[i], "D": D[i],
                            "e_d": e_d[i], "f_d": f_d[i]}
        worst_fd = max(worst_fd, float(rf.max()))
        worst_c = max(worst_c, float(c.max()))
    passed = worst <= tol and worst_fd <= tol and worst_c <= tol
    return CheckResult("damage_growth", samples * len(k_values), max(worst, worst_fd, worst_c),
                       tol, bool(passed), seed,
                       {"max_eigenvalue_analytic": worst, "max_eigenvalue_fd": worst_fd,
                        "max_contraction": worst_c, "k_values": list(k_values)},
                       _plain(worst_sample), time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# isochoric counterexample
# ---------------------------------------------------------------------------

def isochoric_energy_derivative(stretches, mu: float) -> np.ndarray:
    """``dpsi/dD`` of ``psi = mu/2 tr((Cbar - I)(I - D))`` for principal stretches.

    Returned in the principal frame (diagonal), ``-mu/2 (Cbar - I)``.
    """
    lam = np.asarray(stretches, dtype=float)
    J = lam.prod()
    cbar = lam ** 2 * J ** (-2.0 / 3.0)
    return np.diag(-0.5 * mu * (cbar - 1.0))


def isochoric_violation_eigenvalue(l1=1.2, l2=0.9, mu=7500.0) -> float:
    """Eigenvalue of ``dpsi/dD`` along the lateral direction for ``lambda_2 = lambda_3``.

    Positive means the energy grows under damage in that direction; closed
    form ``-mu/2 ((l2/l1)^(2/3) - 1)``.
    """
    return float(isochoric_energy_derivative([l1, l2, l2], mu)[1, 1])


def check_isochoric_violation(expected: float = 654.3, tol: float = 0.1,
                              samples: int = 200, seed: int = DEFAULT_SEED) -> CheckResult:
    """Uniaxial counterexample plus sampled sign pattern and the isotropic null case."""
    t0 = time.perf_counter()
    value = isochoric_violation_eigenvalue()
    closed = -0.5 * 7500.0 * ((0.9 / 1.2) ** (2.0 / 3.0) - 1.0)
    null = np.abs(isochoric_energy_derivative([1.1, 1.1, 1.1], 7500.0)).max()
    rng = np.random.default_rng(seed)
    l1 = rng.uniform(1.01, 2.0, samples)
    l2 = rng.uniform(0.5, 0.99, samples)
    eig = np.array([isochoric_violation_eigenvalue(a, b) for a, b in zip(l1, l2)])
    sign_ok = bool(np.all(eig > 0.0))
    ok = abs(value - expected) <= tol and value > 0.0 and null <= 1e-9 and sign_ok
    return CheckResult("isochoric_violation", 1 + samples, abs(value - expected), tol, bool(ok),
                       seed, {"eigenvalue": value, "closed_form": closed, "expected": expected,
                              "isotropic_max_abs": float(null), "sampled_all_positive": sign_ok},
                       None if ok else {"l1": 1.2, "l2": 0.9, "mu": 7500.0},
                       time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# boundary derivatives of f_ani
# ---------------------------------------------------------------------------

def check_boundary_derivatives(samples: int = 1000, seed: int = DEFAULT_SEED,
                               tol: float = 1e-12, stress_tol: float = 1e-10) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    C = random_cauchy_green(rng, samples)
    p = MaterialParams.set1()
    I, Z = np.eye(3), np.zeros((3, 3))
    near = (1.0 - 1e-6) * I
    worst0 = worst1 = worst_s = worst_near = 0.0
    worst_sample = None
    for i, c in enumerate(C):
        a = np.abs(dmg.dfani_dC(c, Z, p)).max()
        b = np.abs(dmg.dfani_dC(c, I, p)).max()
        s_nh = neo_hooke_stress(c, p.elastic)
        ref = max(np.abs(s_nh).max(), 1e-300)
        s0 = np.abs(dmg.stress(c, Z, p) - s_nh).max() / ref
        s1 = np.abs(dmg.stress(c, I, p)).max() / ref
        worst_near = max(worst_near, np.abs(dmg.dfani_dC(c, near, p)).max())
        if max(a, b) > max(worst0, worst1):
            worst_sample = {"index": i, "C": c}
        worst0, worst1 = max(worst0, a), max(worst1, b)
        worst_s = max(worst_s, s0, s1)
    worst = max(worst0, worst1)
    # the approach to D = I is continuous: O(1e-6) for a 1e-6 offset
    near_ok = worst_near < 1e-4
    passed = worst < tol and worst_s < stress_tol and near_ok
    return CheckResult("boundary_derivatives", samples, worst, tol, bool(passed), seed,
                       {"max_at_zero": worst0, "max_at_identity": worst1,
                        "max_stress_rel": worst_s, "max_near_identity": worst_near},
                       None if passed else _plain(worst_sample), time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# finite-difference consistency
# ---------------------------------------------------------------------------

def fd_symmetric(fun, T, rel=1e-6):
    """Central-difference derivative of a scalar or tensor function of symmetric ``T``.

    Off-diagonal entries are perturbed pairwise and halved, so the result is
    the symmetric gradient comparable to analytic ``dphi/dT``.
    """
    T = np.asarray(T, dtype=float)
    f0 = np.asarray(fun(T))
    out = np.zeros(f0.shape + (3, 3))
    for i, j in VOIGT_PAIRS:
        h = rel * max(1.0, abs(T[i, j]))
        Tp, Tm = T.copy(), T.copy()
        Tp[i, j] += h
        Tm[i, j] -= h
        if i != j:
            Tp[j, i] += h
            Tm[j, i] -= h
        d = (np.asarray(fun(Tp)) - np.asarray(fun(Tm))) / (2 * h)
        if i == j:
            out[..., i, i] = d
        else:
            out[..., i, j] = out[..., j, i] = 0.5 * d
    return out


def _rel_err(a, b, floor=0.0):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = max(np.abs(a).max(), np.abs(b).max(), floor)
    return float(np.abs(a - b).max() / scale) if scale > 0 else 0.0


def derivative_errors(C, D, p: MaterialParams, rng) -> dict[str, float]:
    """Relative FD errors of every analytic derivative at one state."""
    k = p.elastic
    err = {}
    err["neo_hooke_stress"] = _rel_err(neo_hooke_stress(C, k),
                                       2 * fd_symmetric(lambda c: neo_hooke_energy(c, k), C))
    tan_fd = tensor4_to_mandel(2 * fd_symmetric(lambda c: neo_hooke_stress(c, k), C))
    err["neo_hooke_tangent"] = _rel_err(neo_hooke_tangent(C, k), tan_fd)
    err["stress"] = _rel_err(dmg.stress(C, D, p), 2 * fd_symmetric(lambda c: dmg.psi_e(c, D, p), C))
    err["dfani_dC"] = _rel_err(dmg.dfani_dC(C, D, p), fd_symmetric(lambda c: dmg.f_ani(c, D, p), C))
    err["dfiso_dD"] = _rel_err(dmg.dfiso_dD(D, p), fd_symmetric(lambda d: dmg.f_iso(d, p), D))
    err["dfani_dD"] = _rel_err(dmg.dfani_dD(C, D, p), fd_symmetric(lambda d: dmg.f_ani(C, d, p), D))
    err["Y_e"] = _rel_err(dmg.driving_force_elastic(C, D, p),
                          -fd_symmetric(lambda d: dmg.psi_e(C, d, p), D))
    err["Y_h"] = _rel_err(dmg.driving_force_kinematic(D, p),
                          fd_symmetric(lambda d: dmg.psi_h(d, p), D))
    xi = float(rng.uniform(0.0, 0.2))
    h = 1e-6 * max(1.0, xi)
    err["R_d"] = _rel_err(dmg.hardening_force(xi, p),
                          -(dmg.psi_d(xi + h, p) - dmg.psi_d(xi - h, p)) / (2 * h))
    for kind in mm.ModelKind:
        n = kind.n_dofs
        H = rng.uniform(1e3, 1e4, n)
        dbar = mm.tuple_value(D, kind) + rng.uniform(-0.05, 0.05, n)
        psi = lambda d: 0.5 * np.sum(H * (mm.tuple_value(d, kind) - dbar) ** 2)  # noqa: E731
        err[f"Y_dbar_{kind.name}"] = _rel_err(mm.nonlocal_driving_force(D, dbar, kind, H),
                                              fd_symmetric(psi, D))
        err[f"tuple_derivative_{kind.name}"] = _rel_err(
            mm.tuple_derivative(D, kind), fd_symmetric(lambda d: mm.tuple_value(d, kind), D),
            floor=1.0)
    Y = dmg.driving_force(C, D, np.zeros(2), p, "C") + rng.uniform(-2, 2) * np.eye(3)
    wy = np.linalg.eigvalsh(Y)
    # the positive part has a kink at zero eigenvalues; central differences
    # are only meaningful away from it
    if wy.max() > 0.1 and np.abs(wy).min() > 0.05:
        xi0 = 0.05
        err["flow_direction"] = _rel_err(
            dmg.flow_direction(Y, D, xi0, p),
            fd_symmetric(lambda y: dmg.onset_function(y, D, xi0, p), Y))
    return err


def check_fd_consistency(samples: int = 100, seed: int = DEFAULT_SEED,
                         tol: float = 1e-6) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    C = random_cauchy_green(rng, samples)
    D = random_damage(rng, samples)
    worst_by_op: dict[str, float] = {}
    worst, worst_sample = 0.0, None
    for i in range(samples):
        p = MaterialParams.set1(k_ani=float(rng.uniform()), e_d=float(rng.uniform(1, 3)),
                                f_d=float(rng.uniform(1, 3)))
        for op, e in derivative_errors(C[i], D[i], p, rng).items():
            worst_by_op[op] = max(worst_by_op.get(op, 0.0), e)
            if e > worst:
                worst, worst_sample = e, {"index": i, "op": op, "C": C[i], "D": D[i]}
    return CheckResult("fd_consistency", samples, worst, tol, bool(worst <= tol), seed,
                       {"worst_by_op": worst_by_op}, _plain(worst_sample) if worst > tol else None,
                       time.perf_counter() - t0)


def run_all(seed: int = DEFAULT_SEED, samples: int | None = None) -> VerifyReport:
    """All checks; ``samples`` overrides the per-check default counts."""
    kw = {} if samples is None else {"samples": samples}
    checks = [check_damage_growth(seed=seed, **kw),
              check_isochoric_violation(seed=seed),
              check_boundary_derivatives(seed=seed, **kw),
              check_fd_consistency(seed=seed, **({} if samples is None
                                                 else {"samples": min(samples, 100)}))]
    return VerifyReport(seed, checks)
