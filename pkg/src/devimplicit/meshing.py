"""Marching cubes extraction of the zero iso-surface and mesh IO/statistics.

Cells are classified against the standard 256-case table; one vertex is
created per crossed grid edge (welding is by grid-edge identity, so shared
cell faces stitch exactly and watertightness is a purely combinatorial
property).  Extraction is fully vectorized over the grid.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from ._mc_tables import CORNER_OFFSETS, EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from .errors import CloudParseError, ConfigurationError

_DEGENERATE_AREA = 1e-12
_SNAP_TOL = 1e-9  # edge-relative distance below which a crossing is the node

# (axis, node offset) of each of the 12 cell edges, keyed by the corner pair
_EDGE_AXIS = []
_EDGE_BASE = []
for _a, _b in EDGE_CORNERS:
    oa = np.array(CORNER_OFFSETS[_a])
    ob = np.array(CORNER_OFFSETS[_b])
    axis = int(np.nonzero(oa != ob)[0][0])
    _EDGE_AXIS.append(axis)
    _EDGE_BASE.append(np.minimum(oa, ob))
_EDGE_AXIS = np.array(_EDGE_AXIS)
_EDGE_BASE = np.array(_EDGE_BASE)

# TRI_TABLE padded to a rectangular (256, 15) int array, -1 terminated
_TRI_PAD = np.full((256, 15), -1, dtype=np.int64)
for _case, _tri in enumerate(TRI_TABLE):
    _TRI_PAD[_case, : len(_tri)] = _tri
_EDGE_TABLE = np.asarray(EDGE_TABLE, dtype=np.int64)


@dataclass
class MeshingConfig:
    """Grid resolution (cells per axis) and the axis-aligned extraction box."""

    resolution: int = 128
    bounds: Tuple[Tuple[float, float, float], Tuple[float, float, float]] = (
        (-0.6, -0.6, -0.6),
        (0.6, 0.6, 0.6),
    )

    def validate(self):
        if self.resolution < 8:
            raise ConfigurationError(f"resolution must be >= 8, got {self.resolution}")
        lo, hi = (np.asarray(b, dtype=np.float64) for b in self.bounds)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise ConfigurationError(f"degenerate meshing bounds {self.bounds}")
        return self


@dataclass
class TriangleMesh:
    """Extracted surface: vertex positions (V, 3) and triangle indices (F, 3)."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0


def _grid_values(field: Callable[[np.ndarray], np.ndarray], nodes_axis, lo, step) -> np.ndarray:
    """Evaluate the field on the node lattice, one z-slab at a time."""
    n = nodes_axis
    xs = lo[0] + step[0] * np.arange(n)
    ys = lo[1] + step[1] * np.arange(n)
    zs = lo[2] + step[2] * np.arange(n)
    values = np.empty((n, n, n))
    yy, zz = np.meshgrid(ys, zs, indexing="ij")
    for i, x in enumerate(xs):
        pts = np.stack([np.full(yy.size, x), yy.ravel(), zz.ravel()], axis=1)
        values[i] = np.asarray(field(pts), dtype=np.float64).reshape(n, n)
    return values


def marching_cubes(field: Callable[[np.ndarray], np.ndarray],
                   cfg: MeshingConfig) -> TriangleMesh:
    """Extract the zero level set of ``field`` over the configured grid.

    Parameters
    ----------
    field : callable
        Batched evaluator mapping an (N, 3) array of points to (N,) values;
        negative values are inside.
    cfg : MeshingConfig
        Grid resolution and bounds.

    Returns an empty mesh when the field has no sign change on the grid.
    """
    cfg.validate()
    res = cfg.resolution
    lo = np.asarray(cfg.bounds[0], dtype=np.float64)
    hi = np.asarray(cfg.bounds[1], dtype=np.float64)
    step = (hi - lo) / res
    n = res + 1

    values = _grid_values(field, n, lo, step)
    if not np.all(np.isfinite(values)):
        raise ConfigurationError("field produced non-finite values on the grid")
    inside = values < 0.0

    # per-cell case index from the 8 corners
    case = np.zeros((res, res, res), dtype=np.int64)
    for bit, (dx, dy, dz) in enumerate(CORNER_OFFSETS):
        case |= inside[dx:dx + res, dy:dy + res, dz:dz + res].astype(np.int64) << bit

    active = np.nonzero(_EDGE_TABLE[case] != 0)
    if active[0].size == 0:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    ci, cj, ck = (a.astype(np.int64) for a in active)
    cell_case = case[ci, cj, ck]

    # global edge ids for the 12 edges of every active cell:
    # id = axis * n^3 + linear index of the edge's lower node
    base = np.stack([ci, cj, ck], axis=1)                     # (A, 3)
    node = base[:, None, :] + _EDGE_BASE[None, :, :]          # (A, 12, 3)
    lin = (node[..., 0] * n + node[..., 1]) * n + node[..., 2]
    edge_ids = _EDGE_AXIS[None, :] * (n ** 3) + lin           # (A, 12)

    # triangles as triples of global edge ids
    tri_local = _TRI_PAD[cell_case]                           # (A, 15)
    valid = tri_local >= 0
    rows, cols = np.nonzero(valid)
    tri_edges = edge_ids[rows, tri_local[rows, cols]].reshape(-1, 3)

    # one vertex per distinct crossed edge, interpolated on that edge; a
    # crossing within _SNAP_TOL of a grid node (node value at or near zero)
    # is welded to the node identity instead, so coincident crossings from
    # different edges share one vertex and the collapsed slivers between
    # them drop out combinatorially instead of tearing the surface
    uniq, inverse = np.unique(tri_edges.ravel(), return_inverse=True)
    axis = uniq // (n ** 3)
    rem = uniq % (n ** 3)
    lower = np.stack([rem // (n * n), (rem // n) % n, rem % n], axis=1)
    upper = lower.copy()
    upper[np.arange(len(uniq)), axis] += 1
    v0 = values[lower[:, 0], lower[:, 1], lower[:, 2]]
    v1 = values[upper[:, 0], upper[:, 1], upper[:, 2]]
    t = v0 / (v0 - v1)

    def _lin(nodes):
        return (nodes[:, 0] * n + nodes[:, 1]) * n + nodes[:, 2]

    keys = uniq.copy()
    at_lower = t < _SNAP_TOL
    at_upper = t > 1.0 - _SNAP_TOL
    keys[at_lower] = 3 * n ** 3 + _lin(lower[at_lower])
    keys[at_upper] = 3 * n ** 3 + _lin(upper[at_upper])

    key_uniq, key_inv = np.unique(keys, return_inverse=True)
    p0 = lo + step * lower
    p1 = lo + step * upper
    edge_verts = p0 + t[:, None] * (p1 - p0)
    verts = np.empty((len(key_uniq), 3))
    verts[key_inv] = edge_verts
    node_keyed = key_uniq >= 3 * n ** 3
    if np.any(node_keyed):
        rem2 = key_uniq[node_keyed] - 3 * n ** 3
        nodes = np.stack([rem2 // (n * n), (rem2 // n) % n, rem2 % n], axis=1)
        verts[node_keyed] = lo + step * nodes

    tris = key_inv[inverse].reshape(-1, 3)
    # orient consistently with an outward normal for negative-inside fields
    tris = tris[:, [0, 2, 1]]

    # drop degenerate output (repeated edge vertex or vanishing area)
    distinct = (
        (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    )
    tris = tris[distinct]
    e1 = verts[tris[:, 1]] - verts[tris[:, 0]]
    e2 = verts[tris[:, 2]] - verts[tris[:, 0]]
    area2 = np.linalg.norm(np.cross(e1, e2), axis=1)
    tris = tris[area2 > 2.0 * _DEGENERATE_AREA]

    # compact to referenced vertices only
    used, remap = np.unique(tris.ravel(), return_inverse=True)
    return TriangleMesh(verts[used], remap.reshape(-1, 3))


# ---------------------------------------------------------------------------
# statistics and IO
# ---------------------------------------------------------------------------

def _edge_counts(mesh: TriangleMesh):
    t = mesh.triangles
    edges = np.concatenate([t[:, (0, 1)], t[:, (1, 2)], t[:, (2, 0)]])
    edges = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq, counts


def mesh_stats(mesh: TriangleMesh) -> dict:
    """Combinatorial and metric summary: V, F, E, euler, boundary_edges, total_area."""
    v = len(mesh.vertices)
    f = len(mesh.triangles)
    if f == 0:
        return {"V": v, "F": 0, "E": 0, "euler": v, "boundary_edges": 0, "total_area": 0.0}
    uniq, counts = _edge_counts(mesh)
    e = len(uniq)
    t = mesh.triangles
    e1 = mesh.vertices[t[:, 1]] - mesh.vertices[t[:, 0]]
    e2 = mesh.vertices[t[:, 2]] - mesh.vertices[t[:, 0]]
    area = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1).sum()
    return {
        "V": v,
        "F": f,
        "E": e,
        "euler": v - e + f,
        "boundary_edges": int(np.count_nonzero(counts == 1)),
        "total_area": float(area),
    }


def save_mesh(mesh: TriangleMesh, path):
    """Write OBJ (v/f, 1-based) or ASCII PLY depending on the extension."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        with open(path, "w") as fh:
            for p in mesh.vertices:
                fh.write(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            for t in mesh.triangles:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    elif ext == ".ply":
        with open(path, "w") as fh:
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(mesh.vertices)}\n")
            fh.write("property float x\nproperty float y\nproperty float z\n")
            fh.write(f"element face {len(mesh.triangles)}\n")
            fh.write("property list uchar int vertex_indices\nend_header\n")
            for p in mesh.vertices:
                fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")
            for t in mesh.triangles:
                fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")
    else:
        raise ConfigurationError(f"unsupported mesh format {ext!r}")


def load_mesh(path) -> TriangleMesh:
    """Read a triangle mesh from an OBJ file (v/f records; extra fields ignored)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"mesh file not found: {path}")
    verts, tris = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            cols = line.split()
            if not cols:
                continue
            if cols[0] == "v":
                try:
                    verts.append([float(c) for c in cols[1:4]])
                except ValueError:
                    raise CloudParseError(f"{path}:{lineno}: bad vertex") from None
            elif cols[0] == "f":
                try:
                    idx = [int(c.split("/")[0]) - 1 for c in cols[1:]]
                except ValueError:
                    raise CloudParseError(f"{path}:{lineno}: bad face") from None
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
    )
