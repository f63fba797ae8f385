"""Hyperelastic strain energies of the right Cauchy-Green tensor.

The damage model multiplies an undamaged energy ``psi(C)`` by degradation
functions, so any law exposing energy, second Piola-Kirchhoff stress and
tangent can be plugged in.  Only the compressible Neo-Hookean law is shipped.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
from numba import njit

from .tensor import det3_k, inv3_k, tensor4_to_mandel

MIN_DET_C = 1e-12


class NonPositiveJacobian(ValueError):
    """``det C`` is not positive (inverted or degenerate material element)."""


@dataclass(frozen=True)
class ElasticConstants:
    """Lamé constants in MPa."""

    lam: float
    mu: float

    def __post_init__(self):
        if self.mu <= 0.0 or 3.0 * self.lam + 2.0 * self.mu <= 0.0:
            raise ValueError(f"inadmissible Lamé constants lam={self.lam}, mu={self.mu}")

    @property
    def young(self) -> float:
        return self.mu * (3.0 * self.lam + 2.0 * self.mu) / (self.lam + self.mu)

    @property
    def bulk(self) -> float:
        return self.lam + 2.0 * self.mu / 3.0


class HyperelasticLaw(abc.ABC):
    """Capability: energy, ``S = 2 dpsi/dC`` and ``4 d2psi/dC2`` (Mandel 6x6)."""

    @abc.abstractmethod
    def energy(self, C) -> float: ...

    @abc.abstractmethod
    def stress2pk(self, C) -> np.ndarray: ...

    @abc.abstractmethod
    def tangent(self, C) -> np.ndarray: ...


def _check_det(C):
    d = float(np.linalg.det(C))
    if not d > MIN_DET_C:
        raise NonPositiveJacobian(f"det C = {d:g}")
    return d


class NeoHooke(HyperelasticLaw):
    """Compressible Neo-Hookean energy

    ``psi = mu/2 (tr C - 3 - 2 ln J) + lam/4 (J^2 - 1 - 2 ln J)`` with ``J = sqrt(det C)``.
    """

    def __init__(self, constants: ElasticConstants):
        self.constants = constants

    def energy(self, C) -> float:
        C = np.asarray(C, dtype=float)
        _check_det(C)
        return float(nh_energy_k(C, self.constants.lam, self.constants.mu))

    def stress2pk(self, C) -> np.ndarray:
        C = np.asarray(C, dtype=float)
        _check_det(C)
        return nh_stress_k(C, self.constants.lam, self.constants.mu)

    def tangent(self, C) -> np.ndarray:
        """``dS/dC`` times two, i.e. the material tangent ``dS/dE`` as a Mandel matrix."""
        C = np.asarray(C, dtype=float)
        d = _check_det(C)
        lam, mu = self.constants.lam, self.constants.mu
        ci = np.linalg.inv(C)
        # dCinv_IJ/dC_KL = -1/2 (Ci_IK Ci_JL + Ci_IL Ci_JK)
        dci = -0.5 * (np.einsum("ik,jl->ijkl", ci, ci) + np.einsum("il,jk->ijkl", ci, ci))
        c4 = lam * d * np.einsum("ij,kl->ijkl", ci, ci) + (lam * (d - 1.0) - 2.0 * mu) * dci
        return tensor4_to_mandel(c4)


def neo_hooke_energy(C, k: ElasticConstants) -> float:
    return NeoHooke(k).energy(C)


def neo_hooke_stress(C, k: ElasticConstants) -> np.ndarray:
    return NeoHooke(k).stress2pk(C)


def neo_hooke_tangent(C, k: ElasticConstants) -> np.ndarray:
    return NeoHooke(k).tangent(C)


@njit(cache=True)
def nh_energy_k(C, lam, mu):
    d = det3_k(C)
    ln_j = 0.5 * np.log(d)
    return 0.5 * mu * (C[0, 0] + C[1, 1] + C[2, 2] - 3.0 - 2.0 * ln_j) \
        + 0.25 * lam * (d - 1.0 - 2.0 * ln_j)


@njit(cache=True)
def nh_stress_k(C, lam, mu):
    d = det3_k(C)
    ci = inv3_k(C)
    out = (0.5 * lam * (d - 1.0) - mu) * ci
    for i in range(3):
        out[i, i] += mu
    return out
