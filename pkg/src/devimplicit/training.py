"""Two-stage optimization: clamped-L1 data fit, then developability fine-tuning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .cloud import SdfSampleSet
from .errors import ConfigurationError, EmptyBatchError, TrainingDivergedError
from .jets import (
    GradAccumulator,
    backward_params,
    backward_values,
    forward_jets,
    forward_values,
    hess6_to_full,
)
from .mlp import MlpParams
from .regularizers import RegularizerConfig, reg_loss_with_adjoints


@dataclass
class TrainingConfig:
    """Learning rates, clamp width, schedule lengths and the regularizer."""

    lr_fit: float = 1e-4
    lr_finetune: float = 1e-5
    delta: float = 0.01
    reg: RegularizerConfig = field(default_factory=RegularizerConfig)
    batch_size: int = 4096
    max_epochs_fit: int = 2000
    max_epochs_finetune: int = 1000
    plateau_rel_tol: float = 1e-4
    plateau_window: int = 50
    seed: int = 0

    def validate(self):
        if self.lr_fit <= 0 or self.lr_finetune <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.delta <= 0:
            raise ConfigurationError("clamp width delta must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        self.reg.validate()
        return self


@dataclass
class LossReport:
    """Per-epoch loss summary; total = data + lambda * reg by construction."""

    epoch: int
    data_loss: float
    reg_loss: float
    total: float
    skipped_singular: int = 0


def clamp(s, delta: float):
    """Clip signed distances to [-delta, +delta]."""
    return np.minimum(delta, np.maximum(-delta, s))


def data_loss(params: MlpParams, batch: SdfSampleSet, delta: float) -> float:
    """Mean |f(p) - cl(s, delta)| over the sample batch; only the target is clamped."""
    if len(batch) == 0:
        raise EmptyBatchError("data loss over an empty batch")
    tape = forward_values(
        params.weights, params.biases, params.activation, batch.positions, params.sine_omega
    )
    return float(np.abs(tape.output[:, 0] - clamp(batch.targets, delta)).mean())


def _check_trainable(params: MlpParams):
    if params.groups:
        raise ConfigurationError(
            "training through group normalization is not supported; "
            "the option is evaluation-only"
        )


def _data_batch_grad(params, positions, targets, delta, acc: GradAccumulator) -> float:
    tape = forward_values(
        params.weights, params.biases, params.activation, positions, params.sine_omega
    )
    resid = tape.output[:, 0] - clamp(targets, delta)
    v_bar = (np.sign(resid) / len(positions))[:, None]
    backward_values(tape, v_bar, acc)
    return float(np.abs(resid).mean())


def _reg_batch_grad(params, points, reg: RegularizerConfig, acc: GradAccumulator
                    ) -> Tuple[float, int]:
    tape = forward_jets(
        params.weights, params.biases, params.activation, points, params.sine_omega
    )
    grads = tape.output.grads[:, :, 0]
    hess = hess6_to_full(tape.output.hess[:, :, 0])
    try:
        loss, g_bar, h_bar6, skipped = reg_loss_with_adjoints(reg, grads, hess)
    except EmptyBatchError:
        return 0.0, len(points)
    backward_params(tape, None, g_bar[:, :, None], h_bar6[:, :, None], acc)
    return loss, skipped


def total_loss(params: MlpParams, batch: SdfSampleSet, grads: np.ndarray,
               hess: np.ndarray, cfg: TrainingConfig) -> Tuple[float, LossReport]:
    """Full objective data + lambda * reg for jets already evaluated at cloud points."""
    d = data_loss(params, batch, cfg.delta)
    lam = cfg.reg.lam
    if lam == 0.0:
        report = LossReport(0, d, 0.0, d, 0)
        return report.total, report
    r, _, _, skipped = reg_loss_with_adjoints(cfg.reg, grads, hess)
    report = LossReport(0, d, r, d + lam * r, skipped)
    return report.total, report


def total_loss_and_grads(params: MlpParams, batch: SdfSampleSet, cloud_points: np.ndarray,
                         cfg: TrainingConfig) -> Tuple[LossReport, GradAccumulator]:
    """Objective and exact parameter gradient over full batches (no minibatching)."""
    _check_trainable(params)
    acc = GradAccumulator.zeros_like(params.weights, params.biases)
    d = _data_batch_grad(params, batch.positions, batch.targets, cfg.delta, acc)
    lam = cfg.reg.lam
    r, skipped = 0.0, 0
    if lam != 0.0:
        reg_acc = GradAccumulator.zeros_like(params.weights, params.biases)
        r, skipped = _reg_batch_grad(params, cloud_points, cfg.reg, reg_acc)
        acc.add_scaled(reg_acc, lam)
    return LossReport(0, d, r, d + lam * r, skipped), acc


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moments per parameter tensor plus the step counter."""

    m_w: List[np.ndarray]
    v_w: List[np.ndarray]
    m_b: List[np.ndarray]
    v_b: List[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
        )


_B1, _B2, _EPS = 0.9, 0.999, 1e-8


def adam_step(params: MlpParams, grads: GradAccumulator, state: AdamState,
              lr: float) -> MlpParams:
    """One Adam update (beta1=0.9, beta2=0.999, eps=1e-8) with bias correction."""
    state.t += 1
    c1 = 1.0 - _B1 ** state.t
    c2 = 1.0 - _B2 ** state.t
    for w, g, m, v in zip(params.weights, grads.dw, state.m_w, state.v_w):
        m *= _B1
        m += (1.0 - _B1) * g
        v *= _B2
        v += (1.0 - _B2) * g * g
        w -= lr * (m / c1) / (np.sqrt(v / c2) + _EPS)
    for b, g, m, v in zip(params.biases, grads.db, state.m_b, state.v_b):
        m *= _B1
        m += (1.0 - _B1) * g
        v *= _B2
        v += (1.0 - _B2) * g * g
        b -= lr * (m / c1) / (np.sqrt(v / c2) + _EPS)
    return params


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def _plateaued(values: List[float], window: int, rel_tol: float) -> bool:
    if len(values) <= window:
        return False
    prev_best = min(values[:-window])
    cur_best = min(values)
    return (prev_best - cur_best) < rel_tol * max(abs(prev_best), 1e-30)


def fit_stage(params: MlpParams, samples: SdfSampleSet, cfg: TrainingConfig
              ) -> Tuple[MlpParams, List[LossReport]]:
    """Minibatch Adam on the data term until plateau or the epoch cap.

    Mutates and returns ``params``; the history carries one report per epoch.
    """
    cfg.validate()
    _check_trainable(params)
    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(params)
    acc = GradAccumulator.zeros_like(params.weights, params.biases)
    history: List[LossReport] = []
    n = len(samples)
    for epoch in range(cfg.max_epochs_fit):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            acc.zero()
            loss = _data_batch_grad(
                params, samples.positions[idx], samples.targets[idx], cfg.delta, acc
            )
            adam_step(params, acc, state, cfg.lr_fit)
            epoch_loss += loss * len(idx)
        epoch_loss /= n
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(f"data loss became {epoch_loss} at epoch {epoch}")
        history.append(LossReport(epoch, epoch_loss, 0.0, epoch_loss, 0))
        if _plateaued([h.data_loss for h in history], cfg.plateau_window, cfg.plateau_rel_tol):
            break
    return params, history


def finetune_stage(params: MlpParams, samples: SdfSampleSet, cloud_points: np.ndarray,
                   cfg: TrainingConfig) -> Tuple[MlpParams, List[LossReport]]:
    """Minibatch Adam on data + lambda * reg; regularizer jets at the cloud points.

    Both streams are reshuffled each epoch; the cloud is cycled so every data
    batch is paired with a regularizer batch.
    """
    cfg.validate()
    _check_trainable(params)
    rng = np.random.default_rng(cfg.seed + 1)
    state = AdamState.for_params(params)
    acc = GradAccumulator.zeros_like(params.weights, params.biases)
    reg_acc = GradAccumulator.zeros_like(params.weights, params.biases)
    history: List[LossReport] = []
    lam = cfg.reg.lam
    cloud_points = np.asarray(cloud_points, dtype=np.float64)
    n = len(samples)
    m = len(cloud_points)
    for epoch in range(cfg.max_epochs_finetune):
        order = rng.permutation(n)
        cloud_order = rng.permutation(m)
        epoch_data = 0.0
        epoch_reg = 0.0
        reg_weight_total = 0
        skipped = 0
        cursor = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            acc.zero()
            d = _data_batch_grad(
                params, samples.positions[idx], samples.targets[idx], cfg.delta, acc
            )
            epoch_data += d * len(idx)
            if lam != 0.0:
                take = min(cfg.batch_size, m)
                pick = cloud_order.take(range(cursor, cursor + take), mode="wrap")
                cursor += take
                reg_acc.zero()
                r, sk = _reg_batch_grad(params, cloud_points[pick], cfg.reg, reg_acc)
                acc.add_scaled(reg_acc, lam)
                epoch_reg += r * take
                reg_weight_total += take
                skipped += sk
            adam_step(params, acc, state, cfg.lr_finetune)
        epoch_data /= n
        epoch_reg = epoch_reg / reg_weight_total if reg_weight_total else 0.0
        total = epoch_data + lam * epoch_reg
        if not math.isfinite(total):
            raise TrainingDivergedError(f"total loss became {total} at epoch {epoch}")
        history.append(LossReport(epoch, epoch_data, epoch_reg, total, skipped))
        if _plateaued([h.total for h in history], cfg.plateau_window, cfg.plateau_rel_tol):
            break
    return params, history


def write_history_csv(history: List[LossReport], path):
    """Loss history as CSV: epoch, data, reg, total, skipped_singular."""
    with open(path, "w") as fh:
        fh.write("epoch,data_loss,reg_loss,total,skipped_singular\n")
        for h in history:
            fh.write(f"{h.epoch},{h.data_loss:.17g},{h.reg_loss:.17g},"
                     f"{h.total:.17g},{h.skipped_singular}\n")
