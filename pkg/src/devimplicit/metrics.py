"""Evaluation: surface sampling, ICP, Chamfer distance, curvature statistics.

Curvature statistics report magnitudes: median/mean of |K| and the median of
K_min = min(|k1|, |k2|), all computed at non-singular field points.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .curvature import curvature_batch
from .errors import DegenerateInputError, EmptyBatchError, NonManifoldError
from .meshing import TriangleMesh
from .mlp import MlpParams, eval_jet_batch


@dataclass
class RigidTransform:
    """Proper rigid motion q = R p + t."""

    rotation: np.ndarray   # (3, 3), orthonormal, det +1
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


@dataclass
class EvalReport:
    """Metric bundle serialized by the eval command."""

    chamfer_sum_sq: float
    chamfer_mean_sq: float
    median_K: float
    mean_K: float
    median_Kmin: float
    pct_skipped: float
    sample_count: int

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)


def sample_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """Area-weighted uniform random points on the mesh surface."""
    if mesh.is_empty:
        raise EmptyBatchError("cannot sample an empty mesh")
    v = mesh.vertices
    t = mesh.triangles
    e1 = v[t[:, 1]] - v[t[:, 0]]
    e2 = v[t[:, 2]] - v[t[:, 0]]
    areas = 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)
    total = areas.sum()
    if total <= 0:
        raise DegenerateInputError("mesh has zero total area")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(t), size=n, p=areas / total)
    # square-root trick for uniform barycentric coordinates
    r1 = np.sqrt(rng.uniform(size=n))
    r2 = rng.uniform(size=n)
    a = 1.0 - r1
    b = r1 * (1.0 - r2)
    c = r1 * r2
    return (
        a[:, None] * v[t[pick, 0]]
        + b[:, None] * v[t[pick, 1]]
        + c[:, None] * v[t[pick, 2]]
    )


def _kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Closed-form least-squares rigid alignment of paired points."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    h = (src - cs).T @ (dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(r, cd - r @ cs)


def icp_align(src: np.ndarray, dst: np.ndarray, iters: int = 20) -> RigidTransform:
    """Point-to-point ICP aligning ``src`` onto ``dst``.

    Each iteration pairs every source point with its nearest destination
    point and solves the closed-form orthogonal alignment; the mean squared
    residual is non-increasing across iterations.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 3 or len(dst) < 3:
        raise DegenerateInputError("ICP needs at least 3 points on each side")
    if np.linalg.matrix_rank(src - src.mean(axis=0)) < 2:
        raise DegenerateInputError("ICP source points are collinear")
    tree = cKDTree(dst)
    current = src
    transform = RigidTransform.identity()
    prev = np.inf
    for _ in range(iters):
        _, idx = tree.query(current)
        step = _kabsch(current, dst[idx])
        current = step.apply(current)
        transform = RigidTransform(
            step.rotation @ transform.rotation,
            step.rotation @ transform.translation + step.translation,
        )
        resid = float(np.mean(np.sum((current - dst[idx]) ** 2, axis=1)))
        if prev - resid < 1e-15:
            break
        prev = resid
    return transform


def chamfer(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    """Bidirectional squared-distance Chamfer metric between point sets.

    Returns (sum_sq, mean_sq): the symmetric sum of squared nearest-neighbor
    distances and the same total divided by |A| + |B|.  Nearest neighbors via
    a k-d tree; the result is exact.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise EmptyBatchError("chamfer needs two non-empty point sets")
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    total = float(np.sum(d_ab ** 2) + np.sum(d_ba ** 2))
    return total, total / (len(a) + len(b))


def implicit_curvature_stats(params: MlpParams, points: np.ndarray) -> dict:
    """Curvature statistics of the field at the given points.

    Returns median/mean |K|, median K_min, the skipped-sample percentage and
    the evaluated sample count; raises when every point is singular.
    """
    points = np.asarray(points, dtype=np.float64)
    values, grads, hess = eval_jet_batch(params, points)
    fields, valid, _ = curvature_batch(values, grads, hess)
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise EmptyBatchError("all evaluation points are singular field points")
    abs_k = np.abs(fields["K"])
    return {
        "median_K": float(np.median(abs_k)),
        "mean_K": float(np.mean(abs_k)),
        "median_Kmin": float(np.median(fields["kmin"])),
        "pct_skipped": 100.0 * (len(points) - n_valid) / len(points),
        "sample_count": n_valid,
    }


def angle_deficit(mesh: TriangleMesh, area_normalized: bool = False) -> np.ndarray:
    """Discrete Gaussian curvature per vertex.

    Interior vertices get 2*pi minus the incident angle sum, boundary vertices
    pi minus it.  With ``area_normalized`` the deficit is divided by one third
    of the incident triangle area (mixed-area style normalization).
    """
    v = mesh.vertices
    t = mesh.triangles
    if len(t) == 0:
        return np.zeros(len(v))

    edges = np.concatenate([t[:, (0, 1)], t[:, (1, 2)], t[:, (2, 0)]])
    edges_sorted = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges_sorted, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise NonManifoldError([tuple(e) for e in uniq[counts > 2]])
    boundary_vertices = np.unique(uniq[counts == 1])

    angle_sum = np.zeros(len(v))
    area_sum = np.zeros(len(v))
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    tri_area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)
    for corner in range(3):
        a = v[t[:, corner]]
        b = v[t[:, (corner + 1) % 3]]
        c = v[t[:, (corner + 2) % 3]]
        u1 = b - a
        u2 = c - a
        cosang = np.einsum("ij,ij->i", u1, u2) / (
            np.linalg.norm(u1, axis=1) * np.linalg.norm(u2, axis=1)
        )
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(angle_sum, t[:, corner], ang)
        np.add.at(area_sum, t[:, corner], tri_area / 3.0)

    deficit = 2.0 * np.pi - angle_sum
    deficit[boundary_vertices] = np.pi - angle_sum[boundary_vertices]
    if area_normalized:
        with np.errstate(divide="ignore", invalid="ignore"):
            deficit = np.where(area_sum > 0, deficit / area_sum, 0.0)
    return deficit


def export_histogram(values: np.ndarray, bins: int, path, log_scale: bool = False):
    """CSV histogram of ``values``: rows of bin_lo, bin_hi, count.

    ``log_scale`` bins |values| geometrically, which suits curvature
    magnitudes spanning decades.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise EmptyBatchError("histogram of no values")
    if log_scale:
        mags = np.abs(values)
        lo = max(mags[mags > 0].min() if np.any(mags > 0) else 1e-12, 1e-12)
        hi = max(mags.max(), lo * 10)
        edges = np.geomspace(lo, hi, bins + 1)
        counts, edges = np.histogram(mags, bins=edges)
    else:
        counts, edges = np.histogram(values, bins=bins)
    with open(path, "w") as fh:
        fh.write("bin_lo,bin_hi,count\n")
        for i, c in enumerate(counts):
            fh.write(f"{edges[i]:.17g},{edges[i + 1]:.17g},{int(c)}\n")
