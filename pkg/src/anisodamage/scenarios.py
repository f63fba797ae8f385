"""Study presets and the driver that turns a :class:`StudyConfig` into curves.

Single-element studies use a 1 mm cube, parameter set 1 and the local mode
(all nonlocal DOFs pinned to zero with ``H_i = A_i = 0``).  The notched study
uses a plane-strain single-layer mesh, parameter set 2 and the model-specific
gradient parameter.  Every preset applies its displacement program over a
total time of 1 s.
"""
from __future__ import annotations

import copy
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import micromorphic as mm
from .damage import MaterialParams
from .fem.mesh import Mesh, notched_specimen, unit_cube
from .fem.solver import CoupledSystem, DirichletBC, DofMap, LoadProgram, Solver, SolveReport

log = logging.getLogger(__name__)

SINGLE_MODES = ("tension", "uniaxial-strain", "simple-shear", "torsion")
SCENARIOS = tuple(f"single-element-{m}" for m in SINGLE_MODES) + ("notched", "custom")
MESH_LEVELS = ("coarse", "medium", "fine")

# model-specific gradient parameters of the notched study, MPa mm^2
NOTCHED_GRADIENT = {"A": 1000.0, "B": 300.0, "C": 3000.0}


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    """Everything needed to reproduce one run.

    ``mesh`` is ``{"generator": "unit-cube"}``, ``{"generator": "notched",
    "level": ...}`` or ``{"file": path}``.  ``loading`` holds ``u_max`` (mm)
    or ``twist`` (rad), ``steps`` and ``total_time`` (s); custom runs add
    ``fixed``/``pulled`` node-set names and the pulled ``axis``.
    """

    scenario: str
    material: dict = field(default_factory=lambda: {"preset": "set1"})
    model: str = "C"
    active: list[bool] | None = None
    local: bool = False
    mesh: dict = field(default_factory=lambda: {"generator": "unit-cube"})
    loading: dict = field(default_factory=dict)
    output: dict = field(default_factory=lambda: {"fields_every": 0})
    name: str = ""

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        try:
            kind = mm.ModelKind.parse(self.model)
        except KeyError:
            raise ConfigError(f"unknown micromorphic model {self.model!r}") from None
        self.model = kind.name
        if self.active is not None and len(self.active) != kind.n_dofs:
            raise ConfigError(f"mask has {len(self.active)} entries, model {kind.name} "
                              f"has {kind.n_dofs} nonlocal DOFs")
        if not self.name:
            self.name = self.scenario
        try:
            self.material_params()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"material: {exc}") from exc

    @property
    def kind(self) -> mm.ModelKind:
        return mm.ModelKind.parse(self.model)

    def material_params(self) -> MaterialParams:
        spec = dict(self.material)
        preset = str(spec.pop("preset", "set1")).lower().replace(" ", "")
        overrides = dict(spec.pop("overrides", {}) or {})
        overrides.update(spec)
        if preset == "set1":
            base = MaterialParams.set1()
        elif preset == "set2":
            base = MaterialParams.set2()
        elif preset == "explicit":
            return MaterialParams.from_dict(overrides)
        else:
            raise ConfigError(f"unknown material preset {preset!r}")
        merged = base.as_dict()
        merged.update(overrides)
        if self.local:
            merged["H_i"], merged["A_i"] = 0.0, 0.0
        return MaterialParams.from_dict(merged)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "name": self.name, "model": self.model,
                "local": self.local, "active": None if self.active is None else list(self.active),
                "material": copy.deepcopy(self.material), "mesh": copy.deepcopy(self.mesh),
                "loading": copy.deepcopy(self.loading), "output": copy.deepcopy(self.output)}

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        known = {"scenario", "name", "model", "local", "active", "material", "mesh", "loading",
                 "output"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        if "scenario" not in d:
            raise ConfigError("config needs a 'scenario'")
        kw = {k: v for k, v in d.items() if v is not None or k == "active"}
        return cls(**kw)

    def with_material(self, **overrides) -> "StudyConfig":
        new = copy.deepcopy(self)
        new.material = dict(new.material)
        ov = dict(new.material.get("overrides", {}) or {})
        ov.update(overrides)
        new.material["overrides"] = ov
        new.material_params()
        return new


@dataclass
class CurveRecord:
    step: int
    load_factor: float
    time: float
    displacement: float
    force: float
    iterations: int
    cutbacks: int
    normalized: float = float("nan")

    COLUMNS = ("step", "load_factor", "time", "displacement", "force", "normalized",
               "iterations", "cutbacks")

    def row(self) -> list:
        return [getattr(self, c) for c in self.COLUMNS]


@dataclass
class StepDiagnostics:
    """Discrete thermodynamic bookkeeping of one converged step."""

    min_dgamma: float
    min_dissipation: float
    min_D_eig: float
    max_D_eig: float
    min_dxi: float
    damaging_points: int
    stored_energy: float
    external_work: float


@dataclass
class StudyResult:
    config: StudyConfig
    curve: list[CurveRecord]
    report: SolveReport
    diagnostics: list[StepDiagnostics]
    solver: Solver
    wall_time: float

    @property
    def displacement(self) -> np.ndarray:
        return np.array([r.displacement for r in self.curve])

    @property
    def force(self) -> np.ndarray:
        return np.array([r.force for r in self.curve])

    def peak(self) -> float:
        """Largest absolute force (or moment) with its sign."""
        f = self.force
        return float(f[np.argmax(np.abs(f))]) if len(f) else float("nan")

    def dissipated_energy(self) -> float:
        """Area under the force-displacement curve, starting from the origin."""
        u = np.concatenate([[0.0], self.displacement])
        f = np.concatenate([[0.0], self.force])
        return float(np.trapezoid(f, u))


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def preset_single_element(mode: str, k_ani: float = 1.0, steps: int = 100,
                          u_max: float = 0.1, twist: float = 0.2) -> StudyConfig:
    """One-element study; ``mode`` is one of :data:`SINGLE_MODES`."""
    if mode not in SINGLE_MODES:
        raise ConfigError(f"unknown single-element mode {mode!r}")
    loading = {"steps": steps, "total_time": 1.0}
    if mode == "torsion":
        loading["twist"] = twist
    else:
        loading["u_max"] = u_max
    return StudyConfig(scenario=f"single-element-{mode}", model="C", local=True,
                       material={"preset": "set1", "overrides": {"k_ani": float(k_ani)}},
                       mesh={"generator": "unit-cube"}, loading=loading,
                       name=f"{mode}-kani{k_ani:.2f}")


def preset_notched(mesh_level: str = "coarse", kind="C", overrides: dict | None = None,
                   local: bool = False, active: list[bool] | None = None,
                   steps: int = 100, u_max: float = 3.0) -> StudyConfig:
    """Notched plane-strain specimen pulled along x on a generated mesh."""
    kind = mm.ModelKind.parse(kind)
    if mesh_level not in MESH_LEVELS:
        raise ConfigError(f"unknown mesh level {mesh_level!r}")
    ov = {"A_i": NOTCHED_GRADIENT[kind.name]}
    ov.update(overrides or {})
    tag = "local" if local else kind.name
    return StudyConfig(scenario="notched", model=kind.name, local=local, active=active,
                       material={"preset": "set2", "overrides": ov},
                       mesh={"generator": "notched", "level": mesh_level},
                       loading={"u_max": u_max, "steps": steps, "total_time": 1.0},
                       name=f"notched-{tag}-{mesh_level}")


# ---------------------------------------------------------------------------
# system construction
# ---------------------------------------------------------------------------

def build_mesh(cfg: StudyConfig) -> Mesh:
    spec = cfg.mesh
    if "file" in spec:
        from .io import import_mesh
        return import_mesh(spec["file"])
    gen = spec.get("generator")
    if gen == "unit-cube":
        return unit_cube()
    if gen == "notched":
        return notched_specimen(spec.get("level", "coarse"))
    raise ConfigError(f"unknown mesh source {spec!r}")


def _nodal_pins(dm: DofMap, nodes, comps) -> list[DirichletBC]:
    return [DirichletBC(dm.dof(nodes, c)) for c in comps]


def _torsion_values(X, center, angle_max, axis_index):
    rel = X[:, :2] - center

    def values(t):
        a = angle_max * t
        c, s = np.cos(a), np.sin(a)
        rot = np.column_stack([c * rel[:, 0] - s * rel[:, 1], s * rel[:, 0] + c * rel[:, 1]])
        return (rot - rel)[:, axis_index]
    return values


@dataclass
class _Measure:
    kind: str  # "force" or "moment"
    nodes: np.ndarray
    axis: int
    probe: tuple[int, int] | None = None
    twist: float = 0.0
    center: np.ndarray | None = None


def build_system(cfg: StudyConfig, mesh: Mesh | None = None):
    """Return ``(CoupledSystem, measure)`` for a configuration."""
    mesh = mesh if mesh is not None else build_mesh(cfg)
    p = cfg.material_params()
    kind = cfg.kind
    dm = DofMap(mesh.n_nodes, kind.n_dofs)
    L = cfg.loading
    steps = int(L.get("steps", 100))
    program = LoadProgram.uniform(steps, float(L.get("total_time", 1.0)),
                                  **{k: L[k] for k in ("max_cutbacks", "max_iterations")
                                     if k in L})
    allnodes = np.arange(mesh.n_nodes)
    bcs = []
    # nonlocal DOFs: pinned in local mode and for inactive tuple entries
    active = [True] * kind.n_dofs if cfg.active is None else list(cfg.active)
    for k, on in enumerate(active):
        if cfg.local or not on:
            bcs.append(DirichletBC(dm.dbar(allnodes, k)))
    if not cfg.local and cfg.active is not None:
        H = p.penalties(kind)
        A = p.gradient_moduli(kind)
        H[~np.asarray(active)] = 0.0
        A[~np.asarray(active)] = 0.0
        p = p.with_(H_i=tuple(H), A_i=tuple(A))
    sc = cfg.scenario
    if sc.startswith("single-element-"):
        mode = sc[len("single-element-"):]
        bot, top = mesh.node_sets["zmin"], mesh.node_sets["zmax"]
        u_max = float(L.get("u_max", 0.1))
        probe_node = int(top[np.argmax(mesh.nodes[top, 0] + mesh.nodes[top, 1])])
        if mode == "tension":
            corner = bot[np.argmin(np.linalg.norm(mesh.nodes[bot], axis=1))]
            xnb = bot[np.argmin(np.abs(mesh.nodes[bot, 1]) + np.abs(mesh.nodes[bot, 0] - 1))]
            bcs += [DirichletBC(dm.u(bot, 2)), DirichletBC(dm.u([corner], 0)),
                    DirichletBC(dm.u(np.unique([corner, xnb]), 1)),
                    DirichletBC(dm.u(top, 2), u_max)]
            measure = _Measure("force", top, 2, (probe_node, 2))
        elif mode == "uniaxial-strain":
            bcs += [DirichletBC(dm.u(allnodes, 0)), DirichletBC(dm.u(allnodes, 1)),
                    DirichletBC(dm.u(bot, 2)), DirichletBC(dm.u(top, 2), u_max)]
            measure = _Measure("force", top, 2, (probe_node, 2))
        elif mode == "simple-shear":
            bcs += _nodal_pins(dm, bot, (0, 1, 2))
            bcs += [DirichletBC(dm.u(top, 0), u_max), DirichletBC(dm.u(top, 2))]
            measure = _Measure("force", top, 0, (probe_node, 0))
        else:
            twist = float(L.get("twist", 0.2))
            lo, hi = mesh.nodes.min(axis=0), mesh.nodes.max(axis=0)
            center = 0.5 * (lo[:2] + hi[:2])
            X = mesh.nodes[top]
            bcs += _nodal_pins(dm, bot, (0, 1, 2))
            bcs += [DirichletBC(dm.u(top, 0), _torsion_values(X, center, twist, 0)),
                    DirichletBC(dm.u(top, 1), _torsion_values(X, center, twist, 1)),
                    DirichletBC(dm.u(top, 2))]
            measure = _Measure("moment", top, 2, None, twist, center)
    elif sc == "notched":
        left, right = mesh.node_sets["left"], mesh.node_sets["right"]
        u_max = float(L.get("u_max", 1.0))
        bcs += _nodal_pins(dm, left, (0, 1))
        bcs += [DirichletBC(dm.u(right, 0), u_max), DirichletBC(dm.u(right, 1)),
                DirichletBC(dm.u(allnodes, 2))]
        measure = _Measure("force", right, 0, (int(right[0]), 0))
    else:
        fixed = mesh.node_sets[L.get("fixed", "xmin")]
        pulled = mesh.node_sets[L.get("pulled", "xmax")]
        axis = int(L.get("axis", 0))
        bcs += _nodal_pins(dm, fixed, (0, 1, 2))
        bcs += [DirichletBC(dm.u(pulled, axis), float(L.get("u_max", 0.1)))]
        bcs += [DirichletBC(dm.u(pulled, c)) for c in range(3) if c != axis]
        measure = _Measure("force", pulled, axis, (int(pulled[0]), axis))
    system = CoupledSystem(mesh, p, kind, bcs, program,
                           reaction_sets={"loaded": measure.nodes})
    if measure.probe is not None:
        system.probes["loaded"] = measure.probe
    return system, measure


def _measure(solver: Solver, m: _Measure, t: float) -> tuple[float, float]:
    if m.kind == "force":
        node, comp = m.probe
        return float(solver.U[solver.dofmap.dof(node, comp)]), \
            float(solver.set_reaction(m.nodes)[m.axis])
    x = solver.system.mesh.nodes[m.nodes] + solver.displacements()[m.nodes]
    f = solver.nodal_reactions()[m.nodes]
    r = x[:, :2] - m.center
    moment = float(np.sum(r[:, 0] * f[:, 1] - r[:, 1] * f[:, 0]))
    return m.twist * t, moment


def run_study(cfg: StudyConfig, out_dir: str | Path | None = None, mesh: Mesh | None = None,
              normalize_by: float | None = None, progress=None) -> StudyResult:
    """Run a study; with ``out_dir`` write ``run.csv``, the config echo, the solve
    report and VTK snapshots every ``output.fields_every`` steps (0 = last only)."""
    from . import io as aio

    t_wall = time.perf_counter()
    system, measure = build_system(cfg, mesh)
    solver = Solver(system)
    curve: list[CurveRecord] = []
    diags: list[StepDiagnostics] = []
    out = Path(out_dir) if out_dir is not None else None
    every = int(cfg.output.get("fields_every", 0) or 0)
    n_steps = len(system.program.load_factors)
    xi_prev = [solver.xi.copy()]

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        aio.write_config(out / "config-echo.yaml", cfg)

    def on_step(k, s: Solver, rec):
        t = float(system.program.load_factors[k])
        disp, force = _measure(s, measure, t)
        curve.append(CurveRecord(k + 1, t, t * system.program.total_time, disp, force,
                                 rec.iterations, rec.cutbacks))
        eig = np.linalg.eigvalsh(s.D.reshape(-1, 3, 3))
        diags.append(StepDiagnostics(
            min_dgamma=s.min_dgamma, min_dissipation=s.min_dissipation,
            min_D_eig=float(eig.min()), max_D_eig=float(eig.max()),
            min_dxi=float((s.xi - xi_prev[0]).min()),
            damaging_points=int(np.count_nonzero(s.last.dgamma > 0.0)),
            stored_energy=s.last.energy, external_work=s.external_work))
        xi_prev[0] = s.xi.copy()
        s.reset_extrema()
        if out is not None and ((every and (k + 1) % every == 0) or k + 1 == n_steps):
            aio.write_solver_fields(out / f"fields_{k + 1:04d}.vtk", s)
        if progress is not None:
            progress(k, n_steps, curve[-1])

    try:
        report = solver.run(on_step)
    finally:
        ref = normalize_by
        if ref is None and curve:
            f = np.array([c.force for c in curve])
            ref = float(np.abs(f).max()) or 1.0
        for c in curve:
            c.normalized = c.force / ref if ref else float("nan")
        if out is not None:
            aio.write_curve(out / "run.csv", curve)
    result = StudyResult(cfg, curve, report, diags, solver, time.perf_counter() - t_wall)
    if out is not None:
        aio.write_report(out / "solve-report.yaml", result)
    return result
