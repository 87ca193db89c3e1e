"""Oriented point cloud ingestion, normalization, SDF sample generation, noise."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import CloudParseError, ConfigurationError, DegenerateInputError

_DEFAULT_EPS_RANGE = (0.002, 0.02)


@dataclass
class PointCloud:
    """Oriented points: positions and unit normals, both (N, 3)."""

    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.points) < 1 or len(self.points) != len(self.normals):
            raise DegenerateInputError(
                f"cloud needs matching points/normals, got {len(self.points)}/{len(self.normals)}"
            )

    def __len__(self):
        return len(self.points)

    def renormalized(self) -> "PointCloud":
        norms = np.linalg.norm(self.normals, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise CloudParseError("cloud contains zero-length normals")
        return PointCloud(self.points, self.normals / norms)


@dataclass
class NormalizationTransform:
    """Map into the unit bounding box: q = (p - center) * scale."""

    center: np.ndarray
    scale: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.center

    def to_dict(self) -> dict:
        return {"center": [float(c) for c in self.center], "scale": float(self.scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationTransform":
        return cls(np.asarray(d["center"], dtype=np.float64), float(d["scale"]))


@dataclass
class SdfSampleSet:
    """Training samples: positions (K, 3) and signed-distance targets (K,)."""

    positions: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.positions)


@dataclass
class SamplingConfig:
    """Off-surface sample generation: normal offsets drawn per cloud point.

    ``epsilons`` is an explicit list of signed offsets to draw from; when None,
    offset magnitudes are drawn uniformly from [0.002, 0.02] (normalized
    units) with random sign, bracketing the clamp width used by the data term.
    """

    epsilons: Optional[List[float]] = None
    per_point_offsets: int = 4
    seed: int = 0

    def validate(self):
        if self.per_point_offsets < 0:
            raise ConfigurationError("per_point_offsets must be >= 0")
        if self.epsilons is not None:
            eps = np.asarray(self.epsilons, dtype=np.float64)
            if eps.size == 0 or np.any(eps == 0.0) or np.any(np.abs(eps) > 0.1):
                raise ConfigurationError(
                    "epsilons must be nonzero with |eps| <= 0.1 in normalized units"
                )
        return self


# ---------------------------------------------------------------------------
# loaders / writers
# ---------------------------------------------------------------------------

def _parse_xyz(path: str) -> PointCloud:
    pts, nrm = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            cols = body.split()
            if len(cols) < 6:
                raise CloudParseError(
                    f"{path}:{lineno}: expected 6 columns (x y z nx ny nz), got {len(cols)}"
                )
            try:
                vals = [float(c) for c in cols[:6]]
            except ValueError:
                raise CloudParseError(f"{path}:{lineno}: non-numeric value") from None
            pts.append(vals[:3])
            nrm.append(vals[3:])
    if not pts:
        raise CloudParseError(f"{path}: no points found")
    return PointCloud(np.array(pts), np.array(nrm))


def _parse_obj(path: str) -> PointCloud:
    pts, nrm = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            cols = line.split()
            if not cols or cols[0] not in ("v", "vn"):
                continue
            if len(cols) < 4:
                raise CloudParseError(f"{path}:{lineno}: short {cols[0]} record")
            try:
                vals = [float(c) for c in cols[1:4]]
            except ValueError:
                raise CloudParseError(f"{path}:{lineno}: non-numeric value") from None
            (pts if cols[0] == "v" else nrm).append(vals)
    if not pts:
        raise CloudParseError(f"{path}: no vertices found")
    if len(nrm) != len(pts):
        raise CloudParseError(
            f"{path}: {len(pts)} vertices but {len(nrm)} normals; "
            "oriented normals are required"
        )
    return PointCloud(np.array(pts), np.array(nrm))


def _parse_ply(path: str) -> PointCloud:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError(f"{path}: not a PLY file")
    n_vertices = 0
    props: List[str] = []
    in_vertex_element = False
    body_at = None
    for i, line in enumerate(lines[1:], start=2):
        cols = line.split()
        if not cols:
            continue
        if cols[0] == "format":
            if cols[1] != "ascii":
                raise CloudParseError(f"{path}: only ASCII PLY is supported")
        elif cols[0] == "element":
            in_vertex_element = cols[1] == "vertex"
            if in_vertex_element:
                n_vertices = int(cols[2])
        elif cols[0] == "property" and in_vertex_element:
            props.append(cols[-1])
        elif cols[0] == "end_header":
            body_at = i
            break
    if body_at is None:
        raise CloudParseError(f"{path}: missing end_header")
    needed = ("x", "y", "z", "nx", "ny", "nz")
    if not all(p in props for p in needed[3:]):
        raise CloudParseError(f"{path}: PLY lacks normal properties nx, ny, nz")
    if not all(p in props for p in needed[:3]):
        raise CloudParseError(f"{path}: PLY lacks coordinate properties")
    idx = [props.index(p) for p in needed]
    rows = []
    for lineno in range(body_at, body_at + n_vertices):
        if lineno >= len(lines):
            raise CloudParseError(f"{path}: vertex data ends early at line {lineno + 1}")
        cols = lines[lineno].split()
        try:
            rows.append([float(cols[k]) for k in idx])
        except (ValueError, IndexError):
            raise CloudParseError(f"{path}:{lineno + 1}: bad vertex record") from None
    data = np.array(rows)
    return PointCloud(data[:, :3], data[:, 3:])


def load_cloud(path) -> PointCloud:
    """Read an oriented point cloud from .xyz (6 columns), .obj (v/vn) or ASCII .ply.

    Files without normals are rejected; positions with NaN are rejected.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"point cloud file not found: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".xyz":
        cloud = _parse_xyz(path)
    elif ext == ".obj":
        cloud = _parse_obj(path)
    elif ext == ".ply":
        cloud = _parse_ply(path)
    else:
        raise CloudParseError(f"{path}: unsupported cloud format {ext!r}")
    if not np.all(np.isfinite(cloud.points)) or not np.all(np.isfinite(cloud.normals)):
        raise CloudParseError(f"{path}: non-finite coordinates")
    return cloud.renormalized()


def save_cloud(cloud: PointCloud, path):
    """Write a cloud as .xyz (6 columns) or .obj (v/vn pairs)."""
    path = os.fspath(path)
    ext = os.path.splitext(path)[1].lower()
    with open(path, "w") as fh:
        if ext == ".xyz":
            for p, n in zip(cloud.points, cloud.normals):
                fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g} {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
        elif ext == ".obj":
            for p in cloud.points:
                fh.write(f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
            for n in cloud.normals:
                fh.write(f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}\n")
        else:
            raise CloudParseError(f"{path}: unsupported output format {ext!r}")


# ---------------------------------------------------------------------------
# normalization, sampling, noise
# ---------------------------------------------------------------------------

def normalize_unit_box(cloud: PointCloud) -> Tuple[PointCloud, NormalizationTransform]:
    """Center the cloud and scale so the maximum axis extent is exactly 1."""
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    extent = float(np.max(hi - lo))
    if extent <= 0.0:
        raise DegenerateInputError("cloud has zero extent on every axis")
    t = NormalizationTransform(center=(lo + hi) / 2.0, scale=1.0 / extent)
    return PointCloud(t.apply(cloud.points), cloud.normals.copy()), t


def make_samples(cloud: PointCloud, cfg: SamplingConfig) -> SdfSampleSet:
    """On-surface samples (target 0) plus normal-offset samples (target eps)."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = len(cloud)
    k = cfg.per_point_offsets
    if k == 0:
        return SdfSampleSet(cloud.points.copy(), np.zeros(n))
    if cfg.epsilons is not None:
        eps = rng.choice(np.asarray(cfg.epsilons, dtype=np.float64), size=(n, k))
    else:
        mags = rng.uniform(*_DEFAULT_EPS_RANGE, size=(n, k))
        eps = mags * rng.choice([-1.0, 1.0], size=(n, k))
    offs = cloud.points[:, None, :] + eps[:, :, None] * cloud.normals[:, None, :]
    positions = np.concatenate([cloud.points, offs.reshape(n * k, 3)])
    targets = np.concatenate([np.zeros(n), eps.reshape(n * k)])
    return SdfSampleSet(positions, targets)


def add_noise(cloud: PointCloud, fraction: float, seed: int = 0) -> PointCloud:
    """Offset positions by isotropic Gaussian noise, sigma = fraction * bbox diagonal."""
    if fraction < 0:
        raise ConfigurationError("noise fraction must be >= 0")
    if fraction == 0:
        return PointCloud(cloud.points.copy(), cloud.normals.copy())
    diag = float(np.linalg.norm(cloud.points.max(axis=0) - cloud.points.min(axis=0)))
    rng = np.random.default_rng(seed)
    jitter = rng.normal(scale=fraction * diag, size=cloud.points.shape)
    return PointCloud(cloud.points + jitter, cloud.normals.copy())


def save_samples_csv(samples: SdfSampleSet, path):
    """Dump a sample set as CSV rows x,y,z,s for inspection."""
    with open(path, "w") as fh:
        fh.write("x,y,z,s\n")
        for p, s in zip(samples.positions, samples.targets):
            fh.write(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{s:.17g}\n")
