"""Analytic test shapes: exact SDF fields and oriented cloud samplers.

Used by the experiment commands and the verification suite; every sampler is
deterministic under its seed.
"""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud


def sphere_field(points: np.ndarray, radius: float = 0.4, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64) - np.asarray(center)
    return np.linalg.norm(p, axis=-1) - radius


def sample_sphere(n: int, radius: float = 0.4, seed: int = 0) -> PointCloud:
    """Uniform points on a sphere with outward normals."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return PointCloud(radius * v, v)


def rounded_cube_field(points: np.ndarray, half: float = 0.35,
                       rounding: float = 0.08) -> np.ndarray:
    """SDF of a cube with rounded edges: offset surface of a smaller box."""
    p = np.asarray(points, dtype=np.float64)
    b = half - rounding
    q = np.abs(p) - b
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside - rounding


def sample_rounded_cube(n: int, half: float = 0.35, rounding: float = 0.08,
                        seed: int = 0) -> PointCloud:
    """Area-uniform points on a cube with rounded edges.

    The surface is the set at distance ``rounding`` from the box with half
    extent ``half - rounding``: six flat faces, twelve quarter-cylinder edges
    and eight eighth-sphere corners.  Faces are developable while edges and
    corners carry curvature, which makes the shape a good regularizer target.
    Parts are drawn proportionally to their exact areas.
    """
    rng = np.random.default_rng(seed)
    b = half - rounding
    side = 2.0 * b
    area_faces = 6.0 * side * side
    area_edges = 12.0 * (np.pi / 2.0) * rounding * side
    area_corners = 4.0 * np.pi * rounding * rounding
    total = area_faces + area_edges + area_corners
    n_face = int(round(n * area_faces / total))
    n_edge = int(round(n * area_edges / total))
    n_corner = n - n_face - n_edge

    points = np.empty((n, 3))
    normals = np.empty((n, 3))

    # faces: an axis, a sign, uniform position in the flat patch
    axis = rng.integers(0, 3, n_face)
    sign = rng.choice([-1.0, 1.0], n_face)
    uv = rng.uniform(-b, b, (n_face, 2))
    cols = np.array([[1, 2], [0, 2], [0, 1]])
    normals[:n_face] = 0.0
    rows = np.arange(n_face)
    points[rows, axis] = sign * half
    points[rows[:, None], cols[axis]] = uv
    normals[rows, axis] = sign

    # edges: an axis to run along, a quadrant, an angle in the quarter circle
    ofs = n_face
    eaxis = rng.integers(0, 3, n_edge)
    s1 = rng.choice([-1.0, 1.0], n_edge)
    s2 = rng.choice([-1.0, 1.0], n_edge)
    along = rng.uniform(-b, b, n_edge)
    theta = rng.uniform(0.0, np.pi / 2.0, n_edge)
    o1 = cols[eaxis, 0]
    o2 = cols[eaxis, 1]
    rows = np.arange(n_edge)
    nvec = np.zeros((n_edge, 3))
    nvec[rows, o1] = s1 * np.cos(theta)
    nvec[rows, o2] = s2 * np.sin(theta)
    pt = np.zeros((n_edge, 3))
    pt[rows, eaxis] = along
    pt[rows, o1] = s1 * b
    pt[rows, o2] = s2 * b
    points[ofs:ofs + n_edge] = pt + rounding * nvec
    normals[ofs:ofs + n_edge] = nvec
    ofs += n_edge

    # corners: uniform sphere directions assigned to the matching octant
    v = rng.normal(size=(n_corner, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    octant = np.where(v >= 0, 1.0, -1.0)
    points[ofs:] = octant * b + rounding * v
    normals[ofs:] = v

    return PointCloud(points, normals)


def capsule_field(points: np.ndarray, radius: float = 0.18, half_len: float = 0.3) -> np.ndarray:
    """SDF of a capsule along the z axis: cylinder body with spherical caps."""
    p = np.asarray(points, dtype=np.float64)
    z = np.clip(p[..., 2], -half_len, half_len)
    closest = np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1)
    return np.linalg.norm(p - closest, axis=-1) - radius


def sample_capsule(n: int, radius: float = 0.18, half_len: float = 0.3,
                   seed: int = 0) -> PointCloud:
    """Area-proportional samples on a capsule surface with exact normals."""
    rng = np.random.default_rng(seed)
    area_cyl = 2.0 * np.pi * radius * (2.0 * half_len)
    area_caps = 4.0 * np.pi * radius * radius
    n_cyl = int(round(n * area_cyl / (area_cyl + area_caps)))
    n_caps = n - n_cyl

    theta = rng.uniform(0, 2 * np.pi, n_cyl)
    z = rng.uniform(-half_len, half_len, n_cyl)
    nc = np.stack([np.cos(theta), np.sin(theta), np.zeros(n_cyl)], axis=1)
    pc = np.stack([radius * np.cos(theta), radius * np.sin(theta), z], axis=1)

    v = rng.normal(size=(n_caps, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    centers = np.where(v[:, 2:3] >= 0, half_len, -half_len)
    ps = radius * v + np.concatenate(
        [np.zeros((n_caps, 2)), centers], axis=1
    )
    points = np.concatenate([pc, ps])
    normals = np.concatenate([nc, v])
    return PointCloud(points, normals)
