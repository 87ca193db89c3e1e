"""Developability losses on the implicit Hessian and bordered Hessian.

Four flavors, all driving the field Hessian toward rank deficiency on the
surface:

    nn      sum of singular values (nuclear norm)
    pnn     sum of the singular values after dropping the r largest
    logdet  log det(H^T H + I) = sum log(1 + sigma_i^2)
    hdet    |det of the bordered Hessian|, via the cofactor identity

Each loss also exposes its (sub)gradient with respect to the jet slots so the
trainer can push adjoints through the recorded forward pass.  Hessian adjoints
are returned in the 6-component parameterization used by the jet engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .curvature import GRADIENT_FLOOR, adjugate3, bordered_det_batch
from .errors import ConfigurationError, EmptyBatchError
from .jets import Jet2, adjoint_full_to_hess6
from .spectral import spectrum_batch

REGULARIZER_KINDS = ("nn", "logdet", "hdet", "pnn")


@dataclass
class RegularizerConfig:
    """Which developability loss to apply and how strongly."""

    kind: str = "hdet"
    lam: float = 0.0
    r: int = 2

    def validate(self):
        if self.kind not in REGULARIZER_KINDS:
            raise ConfigurationError(
                f"unknown regularizer kind {self.kind!r}; expected one of {REGULARIZER_KINDS}"
            )
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigurationError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.kind == "pnn" and self.r not in (0, 1, 2):
            raise ConfigurationError(f"pnn rank r must be in {{0, 1, 2}}, got {self.r}")
        return self


def _as_batch(j: Jet2) -> Tuple[np.ndarray, np.ndarray]:
    return j.gradient[None, :], j.hessian[None, :, :]


# ---------------------------------------------------------------------------
# batched losses with jet adjoints
# ---------------------------------------------------------------------------

def nn_batch(hess: np.ndarray):
    """Nuclear norm of each Hessian and its subgradient sum_i sign(l_i) v_i v_i^T."""
    sigma, lam, vecs = spectrum_batch(hess)
    loss = sigma.sum(axis=1)
    grad_full = np.einsum("bik,bk,bjk->bij", vecs, np.sign(lam), vecs)
    return loss, grad_full


def pnn_batch(hess: np.ndarray, r: int):
    """Partial-sum nuclear norm: singular values after the r largest."""
    if r not in (0, 1, 2):
        raise ConfigurationError(f"pnn rank r must be in {{0, 1, 2}}, got {r}")
    sigma, lam, vecs = spectrum_batch(hess)
    loss = sigma[:, r:].sum(axis=1)
    weights = np.sign(lam)
    weights[:, :r] = 0.0
    grad_full = np.einsum("bik,bk,bjk->bij", vecs, weights, vecs)
    return loss, grad_full


def logdet_batch(hess: np.ndarray):
    """log det(H^T H + I) = sum_i log(1 + sigma_i^2); gradient V diag(2l/(1+l^2)) V^T."""
    _, lam, vecs = spectrum_batch(hess)
    loss = np.log1p(lam * lam).sum(axis=1)
    grad_full = np.einsum("bik,bk,bjk->bij", vecs, 2.0 * lam / (1.0 + lam * lam), vecs)
    return loss, grad_full


def hdet_batch(grads: np.ndarray, hess: np.ndarray):
    """|bordered determinant| with gradients w.r.t. both jet slots.

    d(bdet)/d(grad) = -2 adj(H) g; d(bdet)/dH follows from the Cayley-Hamilton
    expansion adj(H) = H^2 - tr(H) H + (tr(H)^2 - tr(H^2))/2 I.
    """
    bdet = bordered_det_batch(grads, hess)
    sign = np.sign(bdet)
    adj = adjugate3(hess)
    dgrad = -2.0 * np.einsum("bij,bj->bi", adj, grads)

    hg = np.einsum("bij,bj->bi", hess, grads)
    ghg = np.einsum("bi,bi->b", grads, hg)
    gg = np.einsum("bi,bi->b", grads, grads)
    tr = np.trace(hess, axis1=1, axis2=2)
    outer_gg = grads[:, :, None] * grads[:, None, :]
    eye = np.eye(3)
    dhess = (
        -(hg[:, :, None] * grads[:, None, :] + grads[:, :, None] * hg[:, None, :])
        + ghg[:, None, None] * eye
        + tr[:, None, None] * outer_gg
        - (tr * gg)[:, None, None] * eye
        + gg[:, None, None] * hess
    )
    return np.abs(bdet), sign[:, None] * dgrad, sign[:, None, None] * dhess


# ---------------------------------------------------------------------------
# per-jet public operations
# ---------------------------------------------------------------------------

def loss_nn(j: Jet2) -> float:
    """Nuclear norm of the jet Hessian."""
    _, h = _as_batch(j)
    return float(nn_batch(h)[0][0])


def loss_pnn(j: Jet2, r: int = 2) -> float:
    """Sum of the jet Hessian's singular values after dropping the r largest."""
    _, h = _as_batch(j)
    return float(pnn_batch(h, r)[0][0])


def loss_logdet(j: Jet2) -> float:
    """Log-determinant rank surrogate of the jet Hessian."""
    _, h = _as_batch(j)
    return float(logdet_batch(h)[0][0])


def loss_hdet(j: Jet2) -> float:
    """Absolute bordered-Hessian determinant of the jet."""
    g, h = _as_batch(j)
    return float(hdet_batch(g, h)[0][0])


def reg_loss(cfg: RegularizerConfig, grads: np.ndarray, hess: np.ndarray) -> float:
    """Mean of the configured loss over non-singular samples of a jet batch."""
    loss, _, _, n_skipped = reg_loss_with_adjoints(cfg, grads, hess)
    return loss


def reg_loss_with_adjoints(cfg: RegularizerConfig, grads: np.ndarray, hess: np.ndarray):
    """Mean loss plus adjoints (d loss/d grad (B,3), d loss/d hess6 (B,6)).

    Singular-gradient samples are excluded from the mean and get zero
    adjoints; their count is returned.  Raises when every sample is singular.
    """
    cfg.validate()
    grads = np.asarray(grads, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    b = grads.shape[0]
    if b == 0:
        raise EmptyBatchError("regularizer called on an empty batch")
    gn = np.linalg.norm(grads, axis=1)
    valid = gn > GRADIENT_FLOOR
    n_valid = int(valid.sum())
    n_skipped = b - n_valid
    if n_valid == 0:
        raise EmptyBatchError("all samples in the batch have singular gradients")

    g_bar = np.zeros((b, 3))
    h_bar6 = np.zeros((b, 6))
    hv = hess[valid]
    if cfg.kind == "nn":
        loss, dh = nn_batch(hv)
    elif cfg.kind == "pnn":
        loss, dh = pnn_batch(hv, cfg.r)
    elif cfg.kind == "logdet":
        loss, dh = logdet_batch(hv)
    else:
        loss, dg, dh = hdet_batch(grads[valid], hv)
        g_bar[valid] = dg / n_valid
    h_bar6[valid] = adjoint_full_to_hess6(dh) / n_valid
    return float(loss.mean()), g_bar, h_bar6, n_skipped
