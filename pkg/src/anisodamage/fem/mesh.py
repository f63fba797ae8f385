"""Hexahedral meshes: containers, structured generators and a plain-text format.

Connectivity follows the VTK hexahedron ordering: nodes 0-3 form the bottom face
counter-clockwise seen from above, nodes 4-7 the top face in the same order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .shape import GAUSS_POINTS, shape_hex8


class MeshGenerationFailed(RuntimeError):
    pass


@dataclass
class Mesh:
    nodes: np.ndarray
    elements: np.ndarray
    node_sets: dict[str, np.ndarray] = field(default_factory=dict)
    element_sets: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 3:
            raise ValueError("nodes must have shape (n, 3)")
        if self.elements.ndim != 2 or self.elements.shape[1] != 8:
            raise ValueError("elements must have shape (m, 8)")
        if self.elements.size and (self.elements.min() < 0
                                   or self.elements.max() >= len(self.nodes)):
            raise ValueError("connectivity references missing nodes")
        self.node_sets = {k: np.asarray(v, dtype=np.int64) for k, v in self.node_sets.items()}
        self.element_sets = {k: np.asarray(v, dtype=np.int64)
                             for k, v in self.element_sets.items()}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def jacobians(self) -> np.ndarray:
        """``det(dX/dxi)`` at the 2x2x2 Gauss points, shape ``(n_elements, 8)``."""
        X = self.nodes[self.elements]
        out = np.empty((self.n_elements, len(GAUSS_POINTS)))
        for g, xi in enumerate(GAUSS_POINTS):
            _, dN = shape_hex8(xi)
            J = np.einsum("eai,aj->eij", X, dN)
            out[:, g] = np.linalg.det(J)
        return out

    def check(self) -> None:
        """Raise :class:`MeshGenerationFailed` unless every Gauss point Jacobian is positive."""
        jac = self.jacobians()
        bad = np.argwhere(jac <= 0.0)
        if len(bad):
            e, g = bad[0]
            raise MeshGenerationFailed(
                f"{len(bad)} non-positive Jacobians, first at element {e}, point {g}")

    def nodes_where(self, mask_fn) -> np.ndarray:
        return np.flatnonzero(mask_fn(self.nodes[:, 0], self.nodes[:, 1], self.nodes[:, 2]))

    def boundary_faces(self) -> np.ndarray:
        """Quadrilateral faces used by exactly one element, outward oriented."""
        local = np.array([[0, 3, 2, 1], [4, 5, 6, 7], [0, 1, 5, 4],
                          [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]])
        faces = self.elements[:, local].reshape(-1, 4)
        key = np.sort(faces, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        return faces[counts[inv.ravel()] == 1]


def box(lx=1.0, ly=1.0, lz=1.0, nx=1, ny=1, nz=1, origin=(0.0, 0.0, 0.0)) -> Mesh:
    """Structured box with named faces ``xmin, xmax, ymin, ymax, zmin, zmax``."""
    xs = np.linspace(0.0, lx, nx + 1) + origin[0]
    ys = np.linspace(0.0, ly, ny + 1) + origin[1]
    zs = np.linspace(0.0, lz, nz + 1) + origin[2]
    Z, Y, X = np.meshgrid(zs, ys, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(i, j, k):
        return (k * (ny + 1) + j) * (nx + 1) + i

    els = []
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                els.append([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k),
                            nid(i, j + 1, k), nid(i, j, k + 1), nid(i + 1, j, k + 1),
                            nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)])
    mesh = Mesh(nodes, np.array(els))
    tol = 1e-9 * max(lx, ly, lz)
    for axis, name in enumerate("xyz"):
        lo, hi = nodes[:, axis].min(), nodes[:, axis].max()
        mesh.node_sets[f"{name}min"] = np.flatnonzero(np.abs(nodes[:, axis] - lo) < tol)
        mesh.node_sets[f"{name}max"] = np.flatnonzero(np.abs(nodes[:, axis] - hi) < tol)
    mesh.node_sets["all"] = np.arange(len(nodes))
    mesh.element_sets["all"] = np.arange(len(els))
    return mesh


def unit_cube() -> Mesh:
    """One element of 1 mm edge length."""
    return box()


def extrude(points2d: np.ndarray, quads: np.ndarray, thickness: float = 1.0) -> Mesh:
    """One hexahedral layer from a counter-clockwise quadrilateral mesh in the xy-plane."""
    n = len(points2d)
    bottom = np.column_stack([points2d, np.zeros(n)])
    top = np.column_stack([points2d, np.full(n, thickness)])
    elements = np.hstack([quads, quads + n])
    return Mesh(np.vstack([bottom, top]), elements)


# ---------------------------------------------------------------------------
# asymmetrically notched specimen
# ---------------------------------------------------------------------------

# (outer column divisions, central column divisions, row divisions, radial divisions);
# the central counts are odd so that each notch axis runs through a column of
# element centres rather than along a mesh line, which would otherwise split a
# crack growing from the notch root over the two elements sharing that line
NOTCHED_LEVELS = {
    "coarse": (6, 7, (4, 6, 4), 4),
    "medium": (7, 11, (6, 9, 6), 6),
    "fine": (8, 17, (8, 11, 8), 8),
}


@dataclass(frozen=True)
class NotchedGeometry:
    length: float = 100.0
    width: float = 36.0
    radius: float = 5.0
    top_notch_x: float = 40.0
    bottom_notch_x: float = 60.0
    thickness: float = 1.0

    def column_edges(self):
        a, b = self.top_notch_x, self.bottom_notch_x
        return np.array([0.0, a - 10.0, 0.5 * (a + b), b + 10.0, self.length])

    def row_edges(self):
        return np.array([0.0, 2.0 * self.radius, self.width - 2.0 * self.radius, self.width])


def _grid_block(x0, x1, y0, y1, nx, ny):
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([X, Y], axis=-1)


def _notch_block(x0, x1, y_edge, y_far, nside, ncenter, nr, center, radius):
    """Block around a semicircular edge notch.

    The outer path runs along the three block edges that are not on the free
    surface, the inner path along the arc; straight radial lines join
    matching points.  ``y_edge`` is the free-surface coordinate.
    """
    path = []
    ys = np.linspace(y_edge, y_far, nside + 1)
    path += [(x0, y) for y in ys]
    xs = np.linspace(x0, x1, ncenter + 1)[1:]
    path += [(x, y_far) for x in xs]
    ys = np.linspace(y_far, y_edge, nside + 1)[1:]
    path += [(x1, y) for y in ys]
    outer = np.array(path)
    d = outer - center
    inner = center + radius * d / np.linalg.norm(d, axis=1)[:, None]
    rho = np.linspace(0.0, 1.0, nr + 1)
    return inner[:, None, :] * (1.0 - rho)[None, :, None] + outer[:, None, :] * rho[None, :, None]


def _quads_from_grid(grid, offset):
    ni, nj = grid.shape[:2]
    idx = offset + np.arange(ni * nj).reshape(ni, nj)
    q = np.stack([idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]], axis=-1)
    return q.reshape(-1, 4)


def notched_quads(level: str = "coarse", geometry: NotchedGeometry | None = None):
    """2D quadrilateral mesh of the notched specimen, returns ``(points, quads)``."""
    if level not in NOTCHED_LEVELS:
        raise MeshGenerationFailed(f"unknown mesh level {level!r}")
    g = geometry or NotchedGeometry()
    n_out, n_mid, rows, n_r = NOTCHED_LEVELS[level]
    cx, cy = g.column_edges(), g.row_edges()
    ncols = (n_out, n_mid, n_mid, n_out)
    grids = []
    for i in range(4):
        for j in range(3):
            if (i, j) == (1, 2):
                grid = _notch_block(cx[1], cx[2], cy[3], cy[2], rows[2], ncols[1], n_r,
                                    np.array([g.top_notch_x, g.width]), g.radius)
            elif (i, j) == (2, 0):
                grid = _notch_block(cx[2], cx[3], cy[0], cy[1], rows[0], ncols[2], n_r,
                                    np.array([g.bottom_notch_x, 0.0]), g.radius)
            else:
                grid = _grid_block(cx[i], cx[i + 1], cy[j], cy[j + 1], ncols[i], rows[j])
            grids.append(grid)
    points, quads, offset = [], [], 0
    for grid in grids:
        points.append(grid.reshape(-1, 2))
        quads.append(_quads_from_grid(grid, offset))
        offset += grid.shape[0] * grid.shape[1]
    points = np.vstack(points)
    quads = np.vstack(quads)
    # merge coincident block-interface nodes
    scale = max(g.length, g.width)
    key = np.round(points / (1e-9 * scale)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    points = points[first]
    quads = inverse.ravel()[quads]
    # orient counter-clockwise
    p = points[quads]
    area = 0.5 * np.sum(p[:, :, 0] * np.roll(p[:, :, 1], -1, axis=1)
                        - np.roll(p[:, :, 0], -1, axis=1) * p[:, :, 1], axis=1)
    quads[area < 0] = quads[area < 0][:, ::-1]
    return points, quads


def notched_specimen(level: str = "coarse", geometry: NotchedGeometry | None = None) -> Mesh:
    """Single-layer hexahedral mesh of the asymmetrically notched specimen.

    Node sets: ``left`` (x = 0), ``right`` (x = length), ``all``.  The x axis is
    the loading direction.
    """
    g = geometry or NotchedGeometry()
    points, quads = notched_quads(level, g)
    mesh = extrude(points, quads, g.thickness)
    tol = 1e-9 * g.length
    x = mesh.nodes[:, 0]
    mesh.node_sets = {"left": np.flatnonzero(np.abs(x) < tol),
                      "right": np.flatnonzero(np.abs(x - g.length) < tol),
                      "all": np.arange(mesh.n_nodes)}
    mesh.element_sets = {"all": np.arange(mesh.n_elements)}
    mesh.check()
    return mesh


# ---------------------------------------------------------------------------
# plain-text format
# ---------------------------------------------------------------------------

def write_mesh(path, mesh: Mesh) -> None:
    """Write the documented plain-text format (see ``docs/formats.md``)."""
    lines = [f"*NODES {mesh.n_nodes}"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.nodes]
    lines.append(f"*HEX8 {mesh.n_elements}")
    lines += [" ".join(str(int(v)) for v in e) for e in mesh.elements]
    for kind, sets in (("NSET", mesh.node_sets), ("ELSET", mesh.element_sets)):
        for name, ids in sets.items():
            lines.append(f"*{kind} {name} {len(ids)}")
            lines += [" ".join(str(int(v)) for v in ids[i:i + 16])
                      for i in range(0, len(ids), 16)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    tokens_by_block = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("*"):
            tokens_by_block.append((line[1:].split(), []))
        elif not tokens_by_block:
            raise ValueError(f"{path}: data before the first block header")
        else:
            tokens_by_block[-1][1].extend(line.split())
    nodes = elements = None
    nsets, esets = {}, {}
    for header, data in tokens_by_block:
        kind = header[0].upper()
        if kind == "NODES":
            nodes = np.array(data, dtype=float).reshape(int(header[1]), 3)
        elif kind == "HEX8":
            elements = np.array(data, dtype=np.int64).reshape(int(header[1]), 8)
        elif kind in ("NSET", "ELSET"):
            ids = np.array(data, dtype=np.int64)
            if len(ids) != int(header[2]):
                raise ValueError(f"{path}: set {header[1]} declares {header[2]} ids, "
                                 f"found {len(ids)}")
            (nsets if kind == "NSET" else esets)[header[1]] = ids
        else:
            raise ValueError(f"{path}: unknown block *{header[0]}")
    if nodes is None or elements is None:
        raise ValueError(f"{path}: missing *NODES or *HEX8 block")
    return Mesh(nodes, elements, nsets, esets)
