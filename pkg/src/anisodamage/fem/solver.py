"""Dirichlet handling, follower pressure and the load-stepping Newton solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import micromorphic as mm
from ..damage import MaterialParams
from ..hyperelastic import NonPositiveJacobian
from .assembly import Assembler, AssemblyResult
from .element import ConstitutiveFailure
from .mesh import Mesh
from .shape import quad4

log = logging.getLogger(__name__)


class SingularSystem(RuntimeError):
    pass


class StepFailed(RuntimeError):
    pass


def linear_solve(A, b, tol: float = 1e-10) -> np.ndarray:
    """Sparse direct solve (SuperLU, unsymmetric) with one refinement pass."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from exc
    return _solve_checked(lu, A, b, tol)


def _solve_checked(lu, A, b, tol):
    x = lu.solve(b)
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return x
    res = b - A @ x
    if not np.linalg.norm(res) <= tol * bn:
        x = x + lu.solve(res)
        res = b - A @ x
    if not np.all(np.isfinite(x)) or not np.linalg.norm(res) <= tol * bn:
        raise SingularSystem(f"relative residual {np.linalg.norm(res) / bn:.3e} after refinement")
    return x


# ---------------------------------------------------------------------------
# degrees of freedom and loading
# ---------------------------------------------------------------------------

@dataclass
class DirichletBC:
    """Prescribed values on global DOFs.

    ``values`` is either an array of end values (scaled linearly with the load
    factor) or a callable ``t -> array``.
    """

    dofs: np.ndarray
    values: np.ndarray | float | Callable[[float], np.ndarray] = 0.0

    def at(self, t: float) -> np.ndarray:
        if callable(self.values):
            return np.broadcast_to(np.asarray(self.values(t), dtype=float), self.dofs.shape)
        return t * np.broadcast_to(np.asarray(self.values, dtype=float), self.dofs.shape)


@dataclass
class PressureLoad:
    """Follower pressure on outward-oriented quadrilateral faces (positive pushes inward)."""

    faces: np.ndarray
    magnitude: float | Callable[[float], float] = 0.0

    def at(self, t: float) -> float:
        return float(self.magnitude(t)) if callable(self.magnitude) else t * self.magnitude


class DofMap:
    """Node-major numbering: node ``a`` owns DOFs ``a (3 + n) ... a (3 + n) + 2 + n``."""

    def __init__(self, n_nodes: int, n_dbar: int):
        self.n_nodes, self.n_dbar = n_nodes, n_dbar
        self.nd = 3 + n_dbar
        self.size = n_nodes * self.nd

    def dof(self, nodes, component: int) -> np.ndarray:
        if not 0 <= component < self.nd:
            raise IndexError(f"component {component} outside 0..{self.nd - 1}")
        return np.asarray(nodes, dtype=np.int64) * self.nd + component

    def u(self, nodes, axis: int) -> np.ndarray:
        return self.dof(nodes, axis)

    def dbar(self, nodes, k: int) -> np.ndarray:
        return self.dof(nodes, 3 + k)

    def partition(self, bcs: list[DirichletBC]):
        """Constrained and free DOF index arrays; every DOF may be prescribed once."""
        if bcs:
            fixed = np.concatenate([np.asarray(bc.dofs, dtype=np.int64) for bc in bcs])
        else:
            fixed = np.zeros(0, dtype=np.int64)
        if len(np.unique(fixed)) != len(fixed):
            raise ValueError("a DOF is prescribed by more than one boundary condition")
        if len(fixed) and (fixed.min() < 0 or fixed.max() >= self.size):
            raise IndexError("prescribed DOF outside the system")
        mask = np.zeros(self.size, dtype=bool)
        mask[fixed] = True
        return fixed, np.flatnonzero(~mask)


@dataclass
class LoadProgram:
    """Load factors ``0 < t_1 < ... <= 1`` traversed over ``total_time`` seconds."""

    load_factors: np.ndarray
    total_time: float = 1.0
    max_cutbacks: int = 8
    max_iterations: int = 25
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10

    def __post_init__(self):
        self.load_factors = np.asarray(self.load_factors, dtype=float)
        if np.any(np.diff(np.concatenate([[0.0], self.load_factors])) < 0.0):
            raise ValueError("load factors must be nondecreasing")
        if not self.total_time > 0.0:
            raise ValueError("total time must be positive")

    @classmethod
    def uniform(cls, n_steps: int, total_time: float = 1.0, **kw) -> "LoadProgram":
        return cls(np.linspace(0.0, 1.0, n_steps + 1)[1:], total_time, **kw)


@dataclass
class StepRecord:
    load_factor: float
    iterations: int
    cutbacks: int
    residuals: list[float]
    converged: bool = True


@dataclass
class SolveReport:
    steps: list[StepRecord] = field(default_factory=list)
    reactions: dict[str, list] = field(default_factory=dict)
    probes: dict[str, list] = field(default_factory=dict)

    def reaction(self, name: str) -> np.ndarray:
        return np.array(self.reactions[name])

    def probe(self, name: str) -> np.ndarray:
        return np.array(self.probes[name])


# ---------------------------------------------------------------------------
# follower pressure
# ---------------------------------------------------------------------------

_FACE_GAUSS = [(s / np.sqrt(3.0), t / np.sqrt(3.0)) for t in (-1, 1) for s in (-1, 1)]


def pressure_forces(x_faces: np.ndarray, p: float) -> np.ndarray:
    """Nodal forces ``(nf, 4, 3)`` of pressure ``p`` acting against the face normals."""
    f = np.zeros_like(x_faces)
    for eta in _FACE_GAUSS:
        N, dN = quad4(eta)
        xs = np.einsum("fai,a->fi", x_faces, dN[:, 0])
        xt = np.einsum("fai,a->fi", x_faces, dN[:, 1])
        nda = np.cross(xs, xt)
        f -= p * N[None, :, None] * nda[:, None, :]
    return f


# ---------------------------------------------------------------------------
# coupled system and Newton solver
# ---------------------------------------------------------------------------

@dataclass
class CoupledSystem:
    mesh: Mesh
    material: MaterialParams
    kind: mm.ModelKind
    bcs: list[DirichletBC]
    program: LoadProgram
    pressures: list[PressureLoad] = field(default_factory=list)
    reaction_sets: dict[str, np.ndarray] = field(default_factory=dict)
    probes: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.kind = mm.ModelKind.parse(self.kind)
        self.dofmap = DofMap(self.mesh.n_nodes, self.kind.n_dofs)


class Solver:
    """Owns the nodal unknowns and Gauss point history of one analysis."""

    def __init__(self, system: CoupledSystem):
        self.system = system
        self.assembler = Assembler(system.mesh, system.kind)
        self.dofmap = system.dofmap
        self.fixed, self.free = self.dofmap.partition(system.bcs)
        self.U = np.zeros(self.dofmap.size)
        self.D, self.xi = self.assembler.new_state()
        self.t = 0.0
        self.last: AssemblyResult | None = None
        self.reaction_vector = np.zeros(self.dofmap.size)
        self.external_work = 0.0
        self._K_prev = None
        self._last_inc = None  # (dD, dgamma, dt) of the last accepted increment
        self.reset_extrema()

    def reset_extrema(self) -> None:
        """Restart the running minima of multiplier and dissipation over accepted increments."""
        self.min_dgamma = 0.0
        self.min_dissipation = 0.0

    # -- loading ----------------------------------------------------------
    def prescribed(self, t: float) -> np.ndarray:
        if not self.system.bcs:
            return np.zeros(0)
        return np.concatenate([bc.at(t) for bc in self.system.bcs])

    def _external(self, U, t, tangent):
        f = np.zeros(self.dofmap.size)
        rows, cols, vals = [], [], []
        nd = self.dofmap.nd
        X = self.system.mesh.nodes
        for load in self.system.pressures:
            p = load.at(t)
            if p == 0.0:
                continue
            faces = load.faces
            dofs = faces[:, :, None] * nd + np.arange(3)
            x = X[faces] + U[dofs]
            fe = pressure_forces(x, p)
            np.add.at(f, dofs.ravel(), fe.ravel())
            if tangent:
                h = 1e-7 * max(1.0, np.abs(x).max())
                for a in range(4):
                    for i in range(3):
                        xp = x.copy()
                        xm = x.copy()
                        xp[:, a, i] += h
                        xm[:, a, i] -= h
                        dfe = (pressure_forces(xp, p) - pressure_forces(xm, p)) / (2 * h)
                        rows.append(dofs.reshape(len(faces), -1))
                        cols.append(np.repeat(dofs[:, a, i][:, None], 12, axis=1))
                        vals.append(dfe.reshape(len(faces), -1))
        Kext = None
        if tangent and rows:
            Kext = sp.csr_matrix((np.concatenate(vals, axis=1).ravel(),
                                  (np.concatenate(rows, axis=1).ravel(),
                                   np.concatenate(cols, axis=1).ravel())),
                                 shape=(self.dofmap.size, self.dofmap.size))
        return f, Kext

    def _evaluate(self, U, t, dt, tangent=True, guess=None):
        res = self.assembler.assemble(U, self.D, self.xi, dt, self.system.material, tangent,
                                      guess)
        if self.system.pressures:
            f, Kext = self._external(U, t, tangent)
            res.residual = res.residual - f
            if Kext is not None:
                res.tangent = (res.tangent - Kext).tocsr()
        return res

    # -- one increment ----------------------------------------------------
    def _increment(self, t0, t1):
        """Newton iteration from the converged state at ``t0`` to ``t1``."""
        prog = self.system.program
        dt = prog.total_time * (t1 - t0)
        U = self.U.copy()
        g1 = self.prescribed(t1)
        dg = g1 - U[self.fixed]
        # reference for the relative tolerance: out-of-balance force the
        # increment induces before the free DOFs follow (linearized)
        r0 = 0.0
        if self._K_prev is not None and len(self.free) and np.any(dg != 0.0):
            K = self._K_prev
            rhs = -(K[self.free][:, self.fixed] @ dg)
            r0 = float(np.abs(rhs).max())
            try:
                U[self.free] += linear_solve(K[self.free][:, self.free], rhs)
            except SingularSystem:
                pass
        U[self.fixed] = g1
        # local iterations start from the last increment, extrapolated, and then
        # from the previous global iterate
        guess = None
        if self._last_inc is not None:
            dD, dgam, dt_prev = self._last_inc
            ratio = dt / dt_prev
            guess = (self.D + ratio * dD, ratio * dgam)
        history = []
        for it in range(prog.max_iterations + 1):
            res = self._evaluate(U, t1, dt, guess=guess)
            guess = (res.D, res.dgamma)
            rf = res.residual[self.free]
            rn = float(np.abs(rf).max()) if len(rf) else 0.0
            history.append(rn)
            if not np.isfinite(rn):
                raise StepFailed("non-finite residual")
            if it == 0:
                r0 = max(r0, rn)
            if rn <= max(prog.rel_tol * r0, prog.abs_tol):
                return U, res, it, history
            if it == prog.max_iterations:
                break
            Kff = res.tangent[self.free][:, self.free]
            U[self.free] += linear_solve(Kff, -rf)
        raise StepFailed(f"no convergence in {prog.max_iterations} iterations "
                         f"(last residual {history[-1]:.3e})")

    def _accept(self, t1, U, res):
        f_old = self.reaction_vector
        du = U - self.U
        self.reaction_vector = res.residual.copy()
        self.reaction_vector[self.free] = 0.0
        # trapezoidal work of the reactions on prescribed DOFs
        self.external_work += 0.5 * float((f_old + self.reaction_vector) @ du)
        self.min_dgamma = min(self.min_dgamma, float(res.dgamma.min()))
        self.min_dissipation = min(self.min_dissipation, float(res.dissipation.min()))
        dt = self.system.program.total_time * (t1 - self.t)
        self._last_inc = (res.D - self.D, res.dgamma, dt)
        self.U, self.D, self.xi, self.t = U, res.D, res.xi, t1
        self.last = res
        self._K_prev = res.tangent

    def newton_solve(self, t1: float) -> StepRecord:
        """Advance from the current load factor to ``t1`` with adaptive cutback."""
        prog = self.system.program
        t_start = self.t
        total = t1 - t_start
        if total <= 0.0:
            res = self._evaluate(self.U, self.t, prog.total_time * 1e-12)
            rn = float(np.abs(res.residual[self.free]).max()) if len(self.free) else 0.0
            return StepRecord(t1, 0, 0, [rn])
        h = total
        level = 0
        max_level = 0
        iterations = 0
        history = []
        while self.t < t1 - 1e-14 * max(1.0, abs(t1)):
            t_next = min(t1, self.t + h)
            try:
                U, res, its, hist = self._increment(self.t, t_next)
            except (StepFailed, SingularSystem, ConstitutiveFailure, NonPositiveJacobian) as exc:
                level += 1
                max_level = max(max_level, level)
                if level > prog.max_cutbacks:
                    raise StepFailed(f"step to load factor {t1:g} failed after "
                                     f"{prog.max_cutbacks} cutbacks: {exc}") from exc
                log.debug("cutback %d at t=%g: %s", level, self.t, exc)
                h *= 0.5
                continue
            iterations += its
            history.extend(hist)
            self._accept(t_next, U, res)
            if level > 0:
                # regrow after a successful substep
                level -= 1
                h *= 2.0
        return StepRecord(t1, iterations, max_level, history)

    # -- outputs ----------------------------------------------------------
    def nodal_reactions(self) -> np.ndarray:
        return self.reaction_vector.reshape(self.dofmap.n_nodes, self.dofmap.nd)[:, :3]

    def set_reaction(self, nodes) -> np.ndarray:
        return self.nodal_reactions()[np.asarray(nodes)].sum(axis=0)

    def displacements(self) -> np.ndarray:
        return self.U.reshape(self.dofmap.n_nodes, self.dofmap.nd)[:, :3]

    def nonlocal_values(self) -> np.ndarray:
        return self.U.reshape(self.dofmap.n_nodes, self.dofmap.nd)[:, 3:]

    def run(self, on_step: Callable[[int, "Solver", StepRecord], None] | None = None
            ) -> SolveReport:
        report = SolveReport()
        names = list(self.system.reaction_sets)
        for name in names:
            report.reactions[name] = []
        for name in self.system.probes:
            report.probes[name] = []
        for k, t1 in enumerate(self.system.program.load_factors):
            rec = self.newton_solve(float(t1))
            report.steps.append(rec)
            for name in names:
                report.reactions[name].append(self.set_reaction(self.system.reaction_sets[name]))
            for name, (node, comp) in self.system.probes.items():
                report.probes[name].append(float(self.U[self.dofmap.dof(node, comp)]))
            if on_step is not None:
                on_step(k, self, rec)
        return report
