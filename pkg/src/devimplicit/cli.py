"""Command line pipeline: fit, finetune, extract, eval, sweep, noise.

One JSON config document drives every stage; command line flags override
config keys.  Unknown keys anywhere in the document are rejected before any
compute starts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cloud import (
    NormalizationTransform,
    PointCloud,
    SamplingConfig,
    add_noise,
    load_cloud,
    make_samples,
    normalize_unit_box,
    save_cloud,
)
from .errors import ConfigurationError, DevImplicitError
from .meshing import MeshingConfig, TriangleMesh, load_mesh, marching_cubes, mesh_stats, save_mesh
from .metrics import EvalReport, chamfer, icp_align, implicit_curvature_stats, sample_surface
from .mlp import MlpParams, NetworkConfig, eval_batch, init_mlp, load_checkpoint, save_checkpoint
from .regularizers import RegularizerConfig
from .training import TrainingConfig, finetune_stage, fit_stage, write_history_csv


def worker_cap() -> int:
    """Worker count limit from DEVIMPLICIT_THREADS (default: CPU count)."""
    raw = os.environ.get("DEVIMPLICIT_THREADS", "")
    if raw.strip():
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigurationError(f"DEVIMPLICIT_THREADS must be an integer, got {raw!r}")
        return max(1, cap)
    return os.cpu_count() or 1


@dataclass
class EvalOptions:
    samples: int = 250_000
    curvature_samples: int = 50_000
    icp_iters: int = 20
    seed: int = 0


@dataclass
class RunConfig:
    """Validated union of all stage configurations plus IO paths."""

    input: Optional[str] = None
    output_dir: str = "out"
    network: NetworkConfig = field(default_factory=NetworkConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    meshing: MeshingConfig = field(default_factory=MeshingConfig)
    evaluation: EvalOptions = field(default_factory=EvalOptions)
    lambda_set: bool = False  # whether the config supplied a regularizer weight


def _take(section: dict, allowed: dict, where: str) -> dict:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown key(s) in {where}: {sorted(unknown)}")
    out = {}
    for key, cast in allowed.items():
        if key in section:
            out[key] = cast(section[key])
    return out


def parse_config(doc: dict) -> RunConfig:
    """Build a validated RunConfig from a JSON document."""
    top_allowed = {"input", "output_dir", "network", "sampling", "training",
                   "meshing", "evaluation"}
    unknown = set(doc) - top_allowed
    if unknown:
        raise ConfigurationError(f"unknown top-level config key(s): {sorted(unknown)}")
    cfg = RunConfig()
    cfg.input = doc.get("input")
    cfg.output_dir = str(doc.get("output_dir", "out"))

    net = _take(doc.get("network", {}), {
        "depth": int, "width": int, "activation": str, "seed": int,
        "sine_omega": float, "groups": int,
    }, "network")
    cfg.network = NetworkConfig(**net).validate()

    samp = _take(doc.get("sampling", {}), {
        "epsilons": lambda v: None if v is None else [float(x) for x in v],
        "per_point_offsets": int, "seed": int,
    }, "sampling")
    cfg.sampling = SamplingConfig(**samp).validate()

    tr_doc = dict(doc.get("training", {}))
    reg_doc = dict(tr_doc.pop("regularizer", {}))
    reg_allowed = {"kind": str, "lambda": float, "r": int}
    reg = _take(reg_doc, reg_allowed, "training.regularizer")
    cfg.lambda_set = "lambda" in reg
    reg_cfg = RegularizerConfig(
        kind=reg.get("kind", "hdet"), lam=reg.get("lambda", 0.0), r=reg.get("r", 2)
    ).validate()
    tr = _take(tr_doc, {
        "lr_fit": float, "lr_finetune": float, "delta": float, "batch_size": int,
        "max_epochs_fit": int, "max_epochs_finetune": int,
        "plateau_rel_tol": float, "plateau_window": int, "seed": int,
    }, "training")
    cfg.training = TrainingConfig(reg=reg_cfg, **tr).validate()

    mesh = _take(doc.get("meshing", {}), {
        "resolution": int,
        "bounds": lambda b: (tuple(map(float, b[0])), tuple(map(float, b[1]))),
    }, "meshing")
    cfg.meshing = MeshingConfig(**mesh).validate()

    ev = _take(doc.get("evaluation", {}), {
        "samples": int, "curvature_samples": int, "icp_iters": int, "seed": int,
    }, "evaluation")
    cfg.evaluation = EvalOptions(**ev)
    return cfg


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(doc)


# ---------------------------------------------------------------------------
# pipeline stages (importable; the CLI wraps these)
# ---------------------------------------------------------------------------

def _load_normalized(cfg: RunConfig, transform: Optional[NormalizationTransform] = None):
    if not cfg.input:
        raise ConfigurationError("no input cloud configured")
    if not os.path.exists(cfg.input):
        raise FileNotFoundError(f"input cloud not found: {cfg.input}")
    cloud = load_cloud(cfg.input)
    if transform is None:
        return normalize_unit_box(cloud)
    return PointCloud(transform.apply(cloud.points), cloud.normals.copy()), transform


def run_fit(cfg: RunConfig, cloud: Optional[PointCloud] = None,
            tag: str = "fit") -> str:
    """Normalize, sample, run the data-fit stage, write checkpoint + loss CSV."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cloud is None:
        norm_cloud, transform = _load_normalized(cfg)
    else:
        norm_cloud, transform = normalize_unit_box(cloud)
    samples = make_samples(norm_cloud, cfg.sampling)
    params = init_mlp(cfg.network)
    params, history = fit_stage(params, samples, cfg.training)
    ckpt = os.path.join(cfg.output_dir, f"checkpoint_{tag}.json")
    save_checkpoint(params, ckpt, meta={
        "stage": "fit", "normalization": transform.to_dict(),
    })
    write_history_csv(history, os.path.join(cfg.output_dir, f"loss_{tag}.csv"))
    return ckpt


def run_finetune(cfg: RunConfig, checkpoint: str, tag: str = "finetune",
                 cloud: Optional[PointCloud] = None) -> str:
    """Fine-tune a fitted checkpoint with the configured regularizer."""
    if not cfg.lambda_set:
        raise ConfigurationError(
            "finetune requires an explicit regularizer weight "
            "(training.regularizer.lambda or --lambda)"
        )
    os.makedirs(cfg.output_dir, exist_ok=True)
    params, meta = load_checkpoint(checkpoint)
    transform = NormalizationTransform.from_dict(meta["normalization"])
    if cloud is None:
        norm_cloud, _ = _load_normalized(cfg, transform)
    else:
        norm_cloud = PointCloud(transform.apply(cloud.points), cloud.normals.copy())
    samples = make_samples(norm_cloud, cfg.sampling)
    params, history = finetune_stage(params, samples, norm_cloud.points, cfg.training)
    ckpt = os.path.join(cfg.output_dir, f"checkpoint_{tag}.json")
    save_checkpoint(params, ckpt, meta={
        "stage": "finetune", "normalization": transform.to_dict(),
        "regularizer": {"kind": cfg.training.reg.kind, "lambda": cfg.training.reg.lam,
                        "r": cfg.training.reg.r},
    })
    write_history_csv(history, os.path.join(cfg.output_dir, f"loss_{tag}.csv"))
    return ckpt


def extract_mesh(checkpoint: str, meshing: MeshingConfig,
                 original_coords: bool = True) -> TriangleMesh:
    """Marching cubes over a checkpointed field (normalized space)."""
    params, meta = load_checkpoint(checkpoint)
    mesh = marching_cubes(lambda pts: eval_batch(params, pts), meshing)
    if original_coords and not mesh.is_empty:
        transform = NormalizationTransform.from_dict(meta["normalization"])
        mesh = TriangleMesh(transform.invert(mesh.vertices), mesh.triangles)
    return mesh


def run_extract(cfg: RunConfig, checkpoint: str, out_path: Optional[str] = None) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    mesh = extract_mesh(checkpoint, cfg.meshing)
    out_path = out_path or os.path.join(cfg.output_dir, "surface.obj")
    save_mesh(mesh, out_path)
    stats = mesh_stats(mesh)
    if mesh.is_empty:
        print("warning: field has no zero crossing inside the meshing bounds",
              file=sys.stderr)
    print(json.dumps(stats, sort_keys=True))
    return out_path


def _ground_truth_points(path: str, n: int, seed: int) -> np.ndarray:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        mesh = load_mesh(path)
        if not mesh.is_empty:
            return sample_surface(mesh, n, seed=seed)
        # vertex-only OBJ falls through to cloud handling
    cloud = load_cloud(path)
    pts = cloud.points
    if len(pts) > n:
        rng = np.random.default_rng(seed)
        pts = pts[rng.choice(len(pts), size=n, replace=False)]
    return pts


def run_eval(cfg: RunConfig, checkpoint: str, gt_path: str,
             out_path: Optional[str] = None) -> EvalReport:
    """Sample both surfaces, ICP-align, compute Chamfer and curvature stats."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    if not os.path.exists(gt_path):
        raise FileNotFoundError(f"ground truth file not found: {gt_path}")
    params, meta = load_checkpoint(checkpoint)
    transform = NormalizationTransform.from_dict(meta["normalization"])
    opts = cfg.evaluation

    mesh_norm = extract_mesh(checkpoint, cfg.meshing, original_coords=False)
    if mesh_norm.is_empty:
        raise DevImplicitError("extracted surface is empty; cannot evaluate")
    recon_norm = sample_surface(mesh_norm, opts.samples, seed=opts.seed)
    recon = transform.invert(recon_norm)
    gt = _ground_truth_points(gt_path, opts.samples, opts.seed)

    aligned = icp_align(recon, gt, iters=opts.icp_iters).apply(recon)
    ch_sum, ch_mean = chamfer(aligned, gt)

    k = min(opts.curvature_samples, len(recon_norm))
    stats = implicit_curvature_stats(params, recon_norm[:k])
    report = EvalReport(
        chamfer_sum_sq=ch_sum,
        chamfer_mean_sq=ch_mean,
        median_K=stats["median_K"],
        mean_K=stats["mean_K"],
        median_Kmin=stats["median_Kmin"],
        pct_skipped=stats["pct_skipped"],
        sample_count=stats["sample_count"],
    )
    report.to_json(out_path or os.path.join(cfg.output_dir, "report.json"))
    return report


def _sweep_one(args):
    # every row, lambda = 0 included, gets the same fine-tuning budget so the
    # comparison isolates the regularizer rather than extra training epochs
    cfg_doc, lam, fit_ckpt, gt_path = args
    cfg = parse_config(cfg_doc)
    cfg.lambda_set = True
    cfg.training.reg.lam = lam
    tag = f"lam{lam:g}"
    cfg_out = cfg.output_dir
    try:
        ckpt = run_finetune(cfg, fit_ckpt, tag=tag)
        report = run_eval(cfg, ckpt, gt_path,
                          out_path=os.path.join(cfg_out, f"report_{tag}.json"))
        return lam, report, None
    except (DevImplicitError, FileNotFoundError) as exc:
        return lam, None, str(exc)


def run_sweep(cfg: RunConfig, cfg_doc: dict, lambdas: List[float],
              parallel: bool = False) -> str:
    """Fit once, then finetune + eval per lambda; returns the CSV path."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    fit_ckpt = run_fit(cfg)
    gt_path = cfg.input
    jobs = [(cfg_doc, lam, fit_ckpt, gt_path) for lam in lambdas]
    if parallel and len(jobs) > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(min(len(jobs), worker_cap())) as pool:
            results = pool.map(_sweep_one, jobs)
    else:
        results = [_sweep_one(j) for j in jobs]
    csv_path = os.path.join(cfg.output_dir, "sweep.csv")
    with open(csv_path, "w") as fh:
        fh.write("lambda,median_K,mean_K,median_Kmin,chamfer_sum_sq,chamfer_mean_sq,error\n")
        for lam, report, err in results:
            if report is None:
                fh.write(f"{lam:g},,,,,,{err}\n")
            else:
                fh.write(
                    f"{lam:g},{report.median_K:.17g},{report.mean_K:.17g},"
                    f"{report.median_Kmin:.17g},{report.chamfer_sum_sq:.17g},"
                    f"{report.chamfer_mean_sq:.17g},\n"
                )
    return csv_path


def run_noise(cfg: RunConfig, fraction: float) -> dict:
    """Perturb the input cloud, re-run fit (and finetune when configured)."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    clean = load_cloud(cfg.input)
    noisy = add_noise(clean, fraction, seed=cfg.sampling.seed)
    noisy_path = os.path.join(cfg.output_dir, "noisy_cloud.xyz")
    save_cloud(noisy, noisy_path)
    ckpt = run_fit(cfg, cloud=noisy, tag="fit_noise")
    artifacts = {"noisy_cloud": noisy_path, "fit_checkpoint": ckpt}
    if cfg.lambda_set and cfg.training.reg.lam > 0:
        ckpt = run_finetune(cfg, ckpt, tag="finetune_noise", cloud=noisy)
        artifacts["finetune_checkpoint"] = ckpt
    report = run_eval(cfg, ckpt, cfg.input,
                      out_path=os.path.join(cfg.output_dir, "report_noise.json"))
    artifacts["chamfer_mean_sq"] = report.chamfer_mean_sq
    return artifacts


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "input", None):
        cfg.input = args.input
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    if getattr(args, "seed", None) is not None:
        cfg.network.seed = args.seed
        cfg.sampling.seed = args.seed
        cfg.training.seed = args.seed
        cfg.evaluation.seed = args.seed
    if getattr(args, "lam", None) is not None:
        cfg.training.reg.lam = args.lam
        cfg.lambda_set = True
    if getattr(args, "reg_kind", None):
        cfg.training.reg.kind = args.reg_kind
        cfg.training.reg.validate()
    if getattr(args, "resolution", None) is not None:
        cfg.meshing.resolution = args.resolution
        cfg.meshing.validate()
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devimplicit",
        description="Fit a neural SDF to an oriented point cloud and fine-tune "
                    "it toward piecewise developability.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("config", help="JSON config document")
        p.add_argument("--input", help="override the input cloud path")
        p.add_argument("--output-dir", dest="output_dir", help="override the output directory")
        p.add_argument("--seed", type=int, help="override every stage seed")

    p = sub.add_parser("fit", help="fit the data term and write a checkpoint")
    common(p)

    p = sub.add_parser("finetune", help="fine-tune a checkpoint with a regularizer")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("--lambda", dest="lam", type=float, help="regularizer weight")
    p.add_argument("--reg-kind", choices=("nn", "logdet", "hdet", "pnn"))

    p = sub.add_parser("extract", help="marching cubes over a checkpoint")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("--resolution", type=int)
    p.add_argument("--out", help="output OBJ path")

    p = sub.add_parser("eval", help="Chamfer + curvature report vs ground truth")
    common(p)
    p.add_argument("checkpoint")
    p.add_argument("ground_truth", help="ground-truth mesh (.obj) or cloud")
    p.add_argument("--out", help="output JSON path")

    p = sub.add_parser("sweep", help="finetune + eval over a list of lambdas")
    common(p)
    p.add_argument("--lambdas", required=True,
                   help="comma separated regularizer weights, e.g. 0,1,10")
    p.add_argument("--reg-kind", choices=("nn", "logdet", "hdet", "pnn"))
    p.add_argument("--parallel", action="store_true",
                   help="run lambdas in isolated worker processes")

    p = sub.add_parser("noise", help="perturb the cloud and re-run the pipeline")
    common(p)
    p.add_argument("--fraction", type=float, default=0.01,
                   help="noise sigma as a fraction of the bbox diagonal")
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--reg-kind", choices=("nn", "logdet", "hdet", "pnn"))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg_doc = json.load(fh)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: {args.config}: invalid JSON ({exc})", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(cfg_doc)
        cfg = _apply_overrides(cfg, args)
        if args.command == "fit":
            ckpt = run_fit(cfg)
            print(ckpt)
        elif args.command == "finetune":
            ckpt = run_finetune(cfg, args.checkpoint)
            print(ckpt)
        elif args.command == "extract":
            run_extract(cfg, args.checkpoint, out_path=args.out)
        elif args.command == "eval":
            report = run_eval(cfg, args.checkpoint, args.ground_truth, out_path=args.out)
            print(json.dumps(report.__dict__, sort_keys=True))
        elif args.command == "sweep":
            lambdas = [float(v) for v in args.lambdas.split(",") if v.strip()]
            if not lambdas:
                raise ConfigurationError("sweep needs at least one lambda")
            if args.reg_kind:
                cfg_doc.setdefault("training", {}).setdefault("regularizer", {})["kind"] = args.reg_kind
            if getattr(args, "seed", None) is not None:
                cfg_doc.setdefault("network", {})["seed"] = args.seed
                cfg_doc.setdefault("sampling", {})["seed"] = args.seed
                cfg_doc.setdefault("training", {})["seed"] = args.seed
            if getattr(args, "input", None):
                cfg_doc["input"] = args.input
            if getattr(args, "output_dir", None):
                cfg_doc["output_dir"] = args.output_dir
            csv_path = run_sweep(cfg, cfg_doc, lambdas, parallel=args.parallel)
            print(csv_path)
        elif args.command == "noise":
            artifacts = run_noise(cfg, args.fraction)
            print(json.dumps(artifacts, sort_keys=True))
    except (DevImplicitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
