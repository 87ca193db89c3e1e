import json
import os

import numpy as np
import pytest

from devimplicit.cli import load_config, main, parse_config
from devimplicit.cloud import save_cloud
from devimplicit.errors import ConfigurationError
from devimplicit.meshing import load_mesh, mesh_stats
from devimplicit.mlp import load_checkpoint
from devimplicit.shapes import sample_sphere


@pytest.fixture(scope="module")
def sphere_setup(tmp_path_factory):
    """Tiny sphere fixture: cloud file + config sized for fast CLI runs."""
    root = tmp_path_factory.mktemp("cli")
    cloud_path = root / "sphere.xyz"
    save_cloud(sample_sphere(600, radius=0.4, seed=0), cloud_path)
    cfg = {
        "input": str(cloud_path),
        "output_dir": str(root / "out"),
        "network": {"depth": 3, "width": 24, "activation": "gelu", "seed": 0},
        "sampling": {"per_point_offsets": 2, "seed": 0},
        "training": {
            "batch_size": 1024,
            "max_epochs_fit": 120,
            "max_epochs_finetune": 10,
            "seed": 0,
            "regularizer": {"kind": "hdet", "lambda": 1.0},
        },
        "meshing": {"resolution": 24},
        "evaluation": {"samples": 2000, "curvature_samples": 500, "icp_iters": 10},
    }
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    return root, cfg_path, cfg


def test_parse_config_rejects_unknown_keys():
    with pytest.raises(ConfigurationError, match="unknown top-level"):
        parse_config({"inputs": "x.xyz"})
    with pytest.raises(ConfigurationError, match="network"):
        parse_config({"network": {"depht": 3}})
    with pytest.raises(ConfigurationError, match="regularizer"):
        parse_config({"training": {"regularizer": {"weight": 1}}})


def test_parse_config_defaults():
    cfg = parse_config({})
    assert cfg.network.width == 128
    assert cfg.training.lr_fit == 1e-4
    assert cfg.training.lr_finetune == 1e-5
    assert cfg.training.delta == 0.01
    assert cfg.meshing.resolution == 128
    assert not cfg.lambda_set


def test_missing_config_file_exit_code(capsys):
    assert main(["fit", "no_such_config.json"]) == 2
    assert "no_such_config.json" in capsys.readouterr().err


def test_missing_input_cloud_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({"input": str(tmp_path / "missing.xyz")}))
    assert main(["fit", str(cfg_path)]) == 2
    assert "missing.xyz" in capsys.readouterr().err


def test_invalid_regularizer_kind_fails_before_compute(tmp_path, capsys):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps({
        "training": {"regularizer": {"kind": "banana", "lambda": 1.0}},
    }))
    assert main(["fit", str(cfg_path)]) == 2
    assert "banana" in capsys.readouterr().err


def test_fit_extract_eval_pipeline(sphere_setup, capsys):
    """Contract test: wiring, artifact formats and exit codes of the pipeline.

    The fixture net is deliberately tiny, so surface quality assertions live
    in the acceptance suite where honest-scale training runs.
    """
    root, cfg_path, cfg = sphere_setup
    assert main(["fit", str(cfg_path)]) == 0
    ckpt = capsys.readouterr().out.strip()
    assert os.path.exists(ckpt)
    assert os.path.exists(os.path.join(cfg["output_dir"], "loss_fit.csv"))

    params, meta = load_checkpoint(ckpt)
    assert meta["stage"] == "fit"
    assert "normalization" in meta

    mesh_path = os.path.join(cfg["output_dir"], "sphere_mesh.obj")
    assert main(["extract", str(cfg_path), ckpt, "--out", mesh_path]) == 0
    stats = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert stats["F"] > 0
    mesh = load_mesh(mesh_path)
    assert len(mesh.triangles) == stats["F"]
    # the true surface is found: a band of vertices sits at the sphere radius
    r = np.linalg.norm(mesh.vertices, axis=1)
    assert np.mean(np.abs(r - 0.4) < 0.05) > 0.2

    assert main(["eval", str(cfg_path), ckpt, cfg["input"]]) == 0
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["sample_count"] > 0
    assert np.isfinite(report["chamfer_mean_sq"])
    assert report["chamfer_mean_sq"] >= 0
    assert os.path.exists(os.path.join(cfg["output_dir"], "report.json"))


def test_fit_deterministic_checkpoint_bytes(sphere_setup, tmp_path, capsys):
    root, cfg_path, cfg = sphere_setup
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["fit", str(cfg_path), "--output-dir", str(out_a)]) == 0
    assert main(["fit", str(cfg_path), "--output-dir", str(out_b)]) == 0
    capsys.readouterr()
    a = (out_a / "checkpoint_fit.json").read_bytes()
    b = (out_b / "checkpoint_fit.json").read_bytes()
    assert a == b


def test_finetune_requires_lambda(sphere_setup, tmp_path, capsys):
    root, cfg_path, cfg = sphere_setup
    ckpt = os.path.join(cfg["output_dir"], "checkpoint_fit.json")
    doc = dict(json.loads(cfg_path.read_text()))
    doc["training"] = dict(doc["training"])
    doc["training"]["regularizer"] = {"kind": "hdet"}
    nolam = tmp_path / "nolam.json"
    nolam.write_text(json.dumps(doc))
    assert main(["finetune", str(nolam), ckpt]) == 2
    assert "lambda" in capsys.readouterr().err


def test_finetune_runs_and_stamps_meta(sphere_setup, capsys):
    root, cfg_path, cfg = sphere_setup
    ckpt = os.path.join(cfg["output_dir"], "checkpoint_fit.json")
    assert main(["finetune", str(cfg_path), ckpt, "--lambda", "0.5"]) == 0
    out = capsys.readouterr().out.strip()
    params, meta = load_checkpoint(out)
    assert meta["stage"] == "finetune"
    assert meta["regularizer"]["lambda"] == 0.5


def test_extract_low_resolution_rejected(sphere_setup, capsys):
    root, cfg_path, cfg = sphere_setup
    ckpt = os.path.join(cfg["output_dir"], "checkpoint_fit.json")
    assert main(["extract", str(cfg_path), ckpt, "--resolution", "4"]) == 2
    assert "resolution" in capsys.readouterr().err


def test_sweep_single_lambda_zero(sphere_setup, tmp_path, capsys):
    root, cfg_path, cfg = sphere_setup
    out_dir = tmp_path / "sweep"
    assert main(["sweep", str(cfg_path), "--lambdas", "0",
                 "--output-dir", str(out_dir)]) == 0
    csv_path = capsys.readouterr().out.strip().splitlines()[-1]
    lines = open(csv_path).read().splitlines()
    assert lines[0].startswith("lambda,")
    assert len(lines) == 2
    row = lines[1].split(",")
    assert float(row[0]) == 0.0
    assert row[6] == ""  # no error recorded


def test_sweep_row_count_matches_lambdas(sphere_setup, tmp_path, capsys):
    root, cfg_path, cfg = sphere_setup
    out_dir = tmp_path / "sweep_rows"
    assert main(["sweep", str(cfg_path), "--lambdas", "0,0.5",
                 "--output-dir", str(out_dir)]) == 0
    csv_path = capsys.readouterr().out.strip().splitlines()[-1]
    lines = open(csv_path).read().splitlines()
    assert len(lines) == 3
    assert [r.split(",")[0] for r in lines[1:]] == ["0", "0.5"]


def test_worker_cap_env(monkeypatch):
    from devimplicit.cli import worker_cap
    monkeypatch.setenv("DEVIMPLICIT_THREADS", "3")
    assert worker_cap() == 3
    monkeypatch.setenv("DEVIMPLICIT_THREADS", "0")
    assert worker_cap() == 1
    monkeypatch.setenv("DEVIMPLICIT_THREADS", "zebra")
    with pytest.raises(ConfigurationError):
        worker_cap()
    monkeypatch.delenv("DEVIMPLICIT_THREADS")
    assert worker_cap() >= 1
