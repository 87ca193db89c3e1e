import numpy as np
import pytest

from devimplicit.cloud import (
    NormalizationTransform,
    PointCloud,
    SamplingConfig,
    add_noise,
    load_cloud,
    make_samples,
    normalize_unit_box,
    save_cloud,
    save_samples_csv,
)
from devimplicit.errors import CloudParseError, ConfigurationError, DegenerateInputError


def test_load_single_line_xyz(tmp_path):
    path = tmp_path / "one.xyz"
    path.write_text("0 0 0 0 0 1\n")
    cloud = load_cloud(path)
    assert len(cloud) == 1
    assert np.allclose(cloud.points[0], 0)
    assert np.allclose(cloud.normals[0], [0, 0, 1])


def test_xyz_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.xyz"
    path.write_text("0 0 0 0 0 1\n1 2 3\n")
    with pytest.raises(CloudParseError, match=":2:"):
        load_cloud(path)


def test_xyz_rejects_nan(tmp_path):
    path = tmp_path / "nan.xyz"
    path.write_text("0 0 nan 0 0 1\n")
    with pytest.raises(CloudParseError):
        load_cloud(path)


def test_obj_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1, 1, (20, 3))
    nrm = rng.normal(size=(20, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(pts, nrm)
    path = tmp_path / "c.obj"
    save_cloud(cloud, path)
    back = load_cloud(path)
    assert np.allclose(back.points, pts, atol=0)
    assert np.allclose(back.normals, nrm, atol=1e-15)


def test_obj_missing_normals_rejected(tmp_path):
    path = tmp_path / "nonormals.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(CloudParseError, match="normal"):
        load_cloud(path)


def test_ply_with_normals(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        "end_header\n"
        "0 0 0 1 0 0\n0.5 0.5 0.5 0 1 0\n"
    )
    cloud = load_cloud(path)
    assert len(cloud) == 2
    assert np.allclose(cloud.normals[1], [0, 1, 0])


def test_ply_without_normals_rejected(tmp_path):
    path = tmp_path / "plain.ply"
    path.write_text(
        "ply\nformat ascii 1.0\nelement vertex 1\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n0 0 0\n"
    )
    with pytest.raises(CloudParseError, match="nx"):
        load_cloud(path)


def test_missing_file():
    with pytest.raises(FileNotFoundError, match="nowhere.xyz"):
        load_cloud("nowhere.xyz")


def test_normals_renormalized_on_load(tmp_path):
    path = tmp_path / "long.xyz"
    path.write_text("0 0 0 0 0 5\n")
    cloud = load_cloud(path)
    assert np.linalg.norm(cloud.normals[0]) == pytest.approx(1.0, abs=1e-12)


def test_normalize_cube_corners():
    corners = np.array([[x, y, z] for x in (0, 2) for y in (0, 2) for z in (0, 2)], float)
    cloud = PointCloud(corners, np.tile([0, 0, 1.0], (8, 1)))
    out, t = normalize_unit_box(cloud)
    assert np.allclose(sorted(np.unique(out.points)), [-0.5, 0.5])
    assert t.scale == pytest.approx(0.5)
    assert np.allclose(t.center, [1, 1, 1])
    assert np.allclose(out.normals, cloud.normals)


def test_normalize_already_normalized_is_identity():
    pts = np.array([[-0.5, 0, 0], [0.5, 0.2, -0.3]])
    cloud = PointCloud(pts, np.tile([1.0, 0, 0], (2, 1)))
    out, t = normalize_unit_box(cloud)
    assert t.scale == pytest.approx(1.0)
    assert np.allclose(t.center, [0, 0.1, -0.15])


def test_normalize_roundtrip_identity():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-10, 30, (100, 3))
    cloud = PointCloud(pts, np.tile([0, 0, 1.0], (100, 1)))
    out, t = normalize_unit_box(cloud)
    assert np.abs(t.invert(out.points) - pts).max() < 1e-12
    assert np.max(out.points.max(axis=0) - out.points.min(axis=0)) == pytest.approx(1.0)


def test_normalize_degenerate():
    cloud = PointCloud(np.zeros((5, 3)), np.tile([0, 0, 1.0], (5, 1)))
    with pytest.raises(DegenerateInputError):
        normalize_unit_box(cloud)


def test_make_samples_counts_and_targets():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.5, 0.5, (10, 3))
    nrm = rng.normal(size=(10, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    cloud = PointCloud(pts, nrm)
    cfg = SamplingConfig(epsilons=[0.01, -0.01], per_point_offsets=2, seed=5)
    samples = make_samples(cloud, cfg)
    assert len(samples) == 30
    assert np.count_nonzero(samples.targets == 0) == 10
    assert set(np.round(np.abs(samples.targets[10:]), 12)) == {0.01}


def test_make_samples_offset_formula():
    cloud = PointCloud(np.array([[0.5, 0, 0]]), np.array([[1.0, 0, 0]]))
    cfg = SamplingConfig(epsilons=[0.01], per_point_offsets=1, seed=0)
    samples = make_samples(cloud, cfg)
    assert np.allclose(samples.positions[1], [0.51, 0, 0])
    assert samples.targets[1] == pytest.approx(0.01)


def test_make_samples_deterministic():
    cloud = PointCloud(np.random.default_rng(0).uniform(size=(50, 3)),
                       np.tile([0, 0, 1.0], (50, 1)))
    cfg = SamplingConfig(per_point_offsets=3, seed=11)
    a = make_samples(cloud, cfg)
    b = make_samples(cloud, cfg)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.targets, b.targets)


def test_make_samples_default_range_bound():
    cloud = PointCloud(np.random.default_rng(0).uniform(size=(200, 3)),
                       np.tile([0, 0, 1.0], (200, 1)))
    samples = make_samples(cloud, SamplingConfig(seed=1))
    offs = samples.targets[200:]
    assert np.abs(offs).max() <= 0.02
    assert np.abs(offs).min() >= 0.002


def test_sampling_config_validation():
    with pytest.raises(ConfigurationError):
        SamplingConfig(epsilons=[0.0]).validate()
    with pytest.raises(ConfigurationError):
        SamplingConfig(epsilons=[0.5]).validate()


def test_add_noise_zero_fraction_identity():
    cloud = PointCloud(np.random.default_rng(0).uniform(size=(30, 3)),
                       np.tile([0, 0, 1.0], (30, 1)))
    out = add_noise(cloud, 0.0)
    assert np.array_equal(out.points, cloud.points)


def test_add_noise_displacement_band():
    # chi distribution: mean displacement of an isotropic 3D Gaussian is
    # sigma * 2 sqrt(2/pi) ~= 1.6 sigma, well inside [0.5, 2] * sqrt(3) * sigma
    rng = np.random.default_rng(4)
    pts = rng.uniform(-0.5, 0.5, (10000, 3))
    cloud = PointCloud(pts, np.tile([0, 0, 1.0], (10000, 1)))
    diag = np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))
    sigma = 0.01 * diag
    noisy = add_noise(cloud, 0.01, seed=9)
    mean_disp = np.linalg.norm(noisy.points - pts, axis=1).mean()
    assert 0.5 * sigma * np.sqrt(3) <= mean_disp <= 2 * sigma * np.sqrt(3)
    assert np.array_equal(noisy.normals, cloud.normals)


def test_add_noise_deterministic():
    cloud = PointCloud(np.random.default_rng(0).uniform(size=(20, 3)),
                       np.tile([0, 0, 1.0], (20, 1)))
    a = add_noise(cloud, 0.01, seed=3)
    b = add_noise(cloud, 0.01, seed=3)
    assert np.array_equal(a.points, b.points)


def test_samples_csv(tmp_path):
    cloud = PointCloud(np.array([[0.1, 0.2, 0.3]]), np.array([[0, 0, 1.0]]))
    samples = make_samples(cloud, SamplingConfig(epsilons=[0.01], per_point_offsets=1))
    path = tmp_path / "samples.csv"
    save_samples_csv(samples, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,z,s"
    assert len(lines) == 3
