"""Configuration files, mesh import and result emission.

* configs are YAML mappings mirroring :class:`~anisodamage.scenarios.StudyConfig`;
* meshes are read from the native text format (``.mesh``) or, through meshio,
  from any hexahedral format meshio understands;
* curves are CSV with the columns of :class:`~anisodamage.scenarios.CurveRecord`;
* fields are legacy ASCII VTK unstructured grids.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import yaml

from .fem.mesh import Mesh, read_mesh
from .scenarios import ConfigError, CurveRecord, StudyConfig
from .tensor import COMPONENT_NAMES, VOIGT_PAIRS

VTK_HEXAHEDRON = 12


class IoError(OSError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    mesh = data.get("mesh")
    if isinstance(mesh, dict) and "file" in mesh:
        mesh_path = Path(mesh["file"])
        if not mesh_path.is_absolute():
            mesh["file"] = str((path.parent / mesh_path).resolve())
    try:
        return StudyConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def dump_config(cfg: StudyConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def write_config(path, cfg: StudyConfig) -> None:
    _write_text(path, dump_config(cfg))


def _write_text(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

def import_mesh(path) -> Mesh:
    """Read a hexahedral mesh.

    ``.mesh`` files use the native text format; everything else goes through
    meshio.  Point sets named in the file (meshio ``point_sets``) are kept,
    and the six bounding-box faces are added as ``xmin`` ... ``zmax``.
    """
    path = Path(path)
    if not path.exists():
        raise IoError(f"mesh file {path} does not exist")
    if path.suffix == ".mesh":
        mesh = read_mesh(path)
    else:
        import meshio

        try:
            m = meshio.read(path)
        except Exception as exc:  # meshio raises a zoo of types
            raise IoError(f"cannot read mesh {path}: {exc}") from exc
        hexes = [c.data for c in m.cells if c.type == "hexahedron"]
        if not hexes:
            raise IoError(f"{path} contains no hexahedral cells")
        pts = np.asarray(m.points, dtype=float)
        if pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        sets = {k: np.asarray(v, dtype=np.int64) for k, v in (m.point_sets or {}).items()}
        mesh = Mesh(pts, np.vstack(hexes), sets)
    _add_box_sets(mesh)
    mesh.check()
    return mesh


def _add_box_sets(mesh: Mesh) -> None:
    X = mesh.nodes
    tol = 1e-9 * max(1.0, float(np.ptp(X, axis=0).max()))
    for axis, name in enumerate("xyz"):
        for suffix, value in (("min", X[:, axis].min()), ("max", X[:, axis].max())):
            mesh.node_sets.setdefault(f"{name}{suffix}",
                                      np.flatnonzero(np.abs(X[:, axis] - value) < tol))
    mesh.node_sets.setdefault("all", np.arange(mesh.n_nodes))


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

def write_curve(path, records: list[CurveRecord]) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CurveRecord.COLUMNS)
            for r in records:
                w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r.row()])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_curve(path) -> list[CurveRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append(CurveRecord(int(row["step"]), float(row["load_factor"]), float(row["time"]),
                               float(row["displacement"]), float(row["force"]),
                               int(row["iterations"]), int(row["cutbacks"]),
                               float(row["normalized"])))
    return out


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def solver_fields(solver) -> tuple[dict, dict]:
    """Point data (displacement, nonlocal values) and element-averaged cell data."""
    point = {"displacement": solver.displacements()}
    dbar = solver.nonlocal_values()
    for k in range(dbar.shape[1]):
        point[f"dbar_{k + 1}"] = dbar[:, k]
    Dm = solver.D.mean(axis=1)
    cell = {f"D_{name}": Dm[:, i, j] for name, (i, j) in zip(COMPONENT_NAMES, VOIGT_PAIRS)}
    cell["xi"] = solver.xi.mean(axis=1)
    return point, cell


def write_fields(path, mesh: Mesh, point_data: dict | None = None,
                 cell_data: dict | None = None, title: str = "anisodamage") -> None:
    """Legacy ASCII VTK unstructured grid with hexahedral cells.

    Arrays with three columns are written as vectors, one-dimensional arrays
    as scalars.
    """
    point_data = point_data or {}
    cell_data = cell_data or {}
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    lines += [f"{x:.12g} {y:.12g} {z:.12g}" for x, y, z in mesh.nodes]
    lines.append(f"CELLS {mesh.n_elements} {9 * mesh.n_elements}")
    lines += ["8 " + " ".join(str(int(v)) for v in e) for e in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(VTK_HEXAHEDRON)] * mesh.n_elements
    for header, n, data in (("POINT_DATA", mesh.n_nodes, point_data),
                            ("CELL_DATA", mesh.n_elements, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {n}")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != n:
                raise IoError(f"field {name} has {arr.shape[0]} rows, expected {n}")
            if arr.ndim == 2 and arr.shape[1] == 3:
                lines.append(f"VECTORS {name} double")
                lines += [f"{a:.12g} {b:.12g} {c:.12g}" for a, b, c in arr]
            elif arr.ndim == 1:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += [f"{v:.12g}" for v in arr]
            else:
                raise IoError(f"field {name} must be scalar or 3-vector")
    _write_text(path, "\n".join(lines) + "\n")


def write_solver_fields(path, solver) -> None:
    point, cell = solver_fields(solver)
    write_fields(path, solver.system.mesh, point, cell)


def write_report(path, result) -> None:
    """Solve report (per step iterations, cutbacks, residual histories, diagnostics)."""
    steps = []
    for rec, diag in zip(result.report.steps, result.diagnostics):
        steps.append({"load_factor": float(rec.load_factor), "iterations": int(rec.iterations),
                      "cutbacks": int(rec.cutbacks),
                      "residuals": [float(r) for r in rec.residuals],
                      "min_dissipation": float(diag.min_dissipation),
                      "max_D_eigenvalue": float(diag.max_D_eig),
                      "damaging_points": int(diag.damaging_points)})
    doc = {"name": result.config.name, "wall_time_s": round(float(result.wall_time), 3),
           "peak": float(result.peak()), "steps": steps}
    _write_text(path, yaml.safe_dump(doc, sort_keys=False))
