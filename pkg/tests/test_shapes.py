import numpy as np
import pytest

from devimplicit.shapes import (
    capsule_field,
    rounded_cube_field,
    sample_capsule,
    sample_rounded_cube,
    sample_sphere,
    sphere_field,
)


def fd_grad(field, pts, h=1e-6):
    return np.stack([
        (field(pts + h * np.eye(3)[i]) - field(pts - h * np.eye(3)[i])) / (2 * h)
        for i in range(3)
    ], axis=1)


def test_sphere_samples_on_surface_with_outward_normals():
    cloud = sample_sphere(2000, radius=0.4, seed=1)
    assert np.abs(sphere_field(cloud.points, 0.4)).max() < 1e-12
    dots = np.einsum("ij,ij->i", cloud.points, cloud.normals)
    assert np.all(dots > 0)


@pytest.mark.parametrize("sampler,field", [
    (sample_rounded_cube, rounded_cube_field),
    (sample_capsule, capsule_field),
])
def test_samples_lie_on_zero_level_with_matching_normals(sampler, field):
    cloud = sampler(3000, seed=2)
    assert np.abs(field(cloud.points)).max() < 1e-12
    g = fd_grad(field, cloud.points)
    align = np.einsum("ij,ij->i", g, cloud.normals)
    assert align.min() > 0.999


def test_samplers_deterministic():
    a = sample_rounded_cube(500, seed=7)
    b = sample_rounded_cube(500, seed=7)
    assert np.array_equal(a.points, b.points)


def test_rounded_cube_flat_fraction():
    # flat faces carry about two thirds of the area
    cloud = sample_rounded_cube(20000, seed=3)
    on_face = np.sum(np.abs(np.abs(cloud.points).max(axis=1) - 0.35) < 1e-9)
    assert 0.6 < on_face / 20000 < 0.72


def test_capsule_cylinder_fraction():
    # lateral cylinder area fraction: 2*pi*r*L / (2*pi*r*L + 4*pi*r^2)
    r, hl = 0.18, 0.3
    frac = (2 * hl) / (2 * hl + 2 * r)
    cloud = sample_capsule(20000, seed=4)
    rho = np.hypot(cloud.points[:, 0], cloud.points[:, 1])
    on_cyl = np.sum((np.abs(rho - r) < 1e-9) & (np.abs(cloud.points[:, 2]) <= hl))
    assert abs(on_cyl / 20000 - frac) < 0.02
