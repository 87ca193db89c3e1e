"""The implicit network f(p; theta): construction, evaluation, persistence."""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .activations import ACTIVATION_KINDS, activation_derivs3
from .errors import ConfigurationError, DimensionError
from .jets import (
    Jet2,
    LayerJets,
    PAIR_I,
    PAIR_J,
    forward_jets,
    forward_values,
    hess6_to_full,
    input_jets,
    jet_activate,
    jet_affine,
)

_GN_EPS = 1e-6
CHECKPOINT_VERSION = 1


@dataclass
class NetworkConfig:
    """Shape and seed of the implicit network.

    ``depth`` counts affine layers; hidden layers all have ``width`` units.
    ``groups`` > 0 enables group normalization of hidden pre-activations
    (experimental, evaluation only).
    """

    depth: int = 4
    width: int = 128
    activation: str = "gelu"
    seed: int = 0
    sine_omega: float = 1.0
    groups: int = 0

    def validate(self):
        if self.depth < 1 or self.width < 1:
            raise ConfigurationError(f"depth and width must be >= 1, got {self.depth}x{self.width}")
        if self.activation not in ACTIVATION_KINDS:
            raise ConfigurationError(
                f"unknown activation {self.activation!r}; expected one of {ACTIVATION_KINDS}"
            )
        if self.groups < 0 or (self.groups and self.width % self.groups):
            raise ConfigurationError(f"groups ({self.groups}) must divide width ({self.width})")
        return self


@dataclass
class MlpParams:
    """Weights and layout of the implicit network."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str
    sine_omega: float = 1.0
    groups: int = 0

    @property
    def layer_dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpParams":
        return MlpParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
            self.sine_omega,
            self.groups,
        )

    def check(self):
        dims = self.layer_dims
        if dims[0] != 3 or dims[-1] != 1:
            raise DimensionError(f"layer dims must run 3 -> ... -> 1, got {dims}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise DimensionError(f"layer {i} shapes inconsistent with dims {dims}")
        return self


def init_mlp(cfg: NetworkConfig) -> MlpParams:
    """Draw parameters with fan-in scaled uniform bounds from the seeded generator."""
    cfg.validate()
    dims = [3] + [cfg.width] * (cfg.depth - 1) + [1]
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases, cfg.activation, cfg.sine_omega, cfg.groups).check()


# ---------------------------------------------------------------------------
# group normalization (experimental; forward evaluation only)
# ---------------------------------------------------------------------------

def _gn_values(z: np.ndarray, groups: int) -> np.ndarray:
    b, m = z.shape
    zg = z.reshape(b, groups, m // groups)
    d = zg - zg.mean(axis=-1, keepdims=True)
    s = np.sqrt((d * d).mean(axis=-1, keepdims=True) + _GN_EPS)
    return (d / s).reshape(b, m)


def _gn_jets(jets: LayerJets, groups: int) -> LayerJets:
    """Exact jets of y = (z - mean)/sqrt(var + eps) within each channel group.

    The output Hessian combines the linear image of the input Hessians with the
    rank-two correction produced by the second derivative of the normalization
    map; both follow from differentiating y_k twice with respect to the inputs.
    """
    b, m = jets.values.shape
    n = m // groups
    z = jets.values.reshape(b, groups, n)
    g = jets.grads.reshape(b, 3, groups, n)
    h = jets.hess.reshape(b, 6, groups, n)

    mu = z.mean(axis=-1, keepdims=True)
    d = z - mu                                   # (B, G, n)
    var = (d * d).mean(axis=-1, keepdims=True)
    s = np.sqrt(var + _GN_EPS)                   # (B, G, 1)
    inv_s = 1.0 / s
    inv_ns3 = 1.0 / (n * s ** 3)

    gbar = g.mean(axis=-1, keepdims=True)        # (B, 3, G, 1)
    gd = (g * d[:, None]).sum(axis=-1, keepdims=True)   # (B, 3, G, 1)
    hbar = h.mean(axis=-1, keepdims=True)
    hd = (h * d[:, None]).sum(axis=-1, keepdims=True)

    y = d * inv_s
    gy = (g - gbar) * inv_s[:, None] - d[:, None] * gd * inv_ns3[:, None]

    # rank-two correction from the second derivative of the normalization
    gc = g - gbar                                # (B, 3, G, n)
    sym_gc_gd = gc[:, PAIR_I] * gd[:, PAIR_J] + gc[:, PAIR_J] * gd[:, PAIR_I]
    c6 = (g[:, PAIR_I] * g[:, PAIR_J]).sum(axis=-1, keepdims=True) \
        - n * gbar[:, PAIR_I] * gbar[:, PAIR_J]  # (B, 6, G, 1)
    gd_outer = gd[:, PAIR_I] * gd[:, PAIR_J]
    q = (
        -sym_gc_gd * inv_ns3[:, None]
        - d[:, None] * c6 * inv_ns3[:, None]
        + 3.0 * d[:, None] * gd_outer * (inv_ns3 * inv_ns3 * s)[:, None]
    )
    hy = (h - hbar) * inv_s[:, None] - d[:, None] * hd * inv_ns3[:, None] + q

    return LayerJets(
        y.reshape(b, m), gy.reshape(b, 3, m), hy.reshape(b, 6, m)
    )


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_batch(params: MlpParams, points: np.ndarray) -> np.ndarray:
    """Evaluate the field at a (B, 3) batch; returns (B,) values."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionError(f"expected (B, 3) points, got {pts.shape}")
    if params.groups == 0:
        return forward_values(
            params.weights, params.biases, params.activation, pts, params.sine_omega
        ).output[:, 0]
    x = pts
    last = len(params.weights) - 1
    for li, (w, bias) in enumerate(zip(params.weights, params.biases)):
        x = x @ w.T + bias
        if li < last:
            x = _gn_values(x, params.groups)
            x = activation_derivs3(params.activation, x, params.sine_omega)[0]
    return x[:, 0]


def eval_sdf(params: MlpParams, p) -> float:
    """Evaluate the field at a single point."""
    return float(eval_batch(params, np.asarray(p, dtype=np.float64).reshape(1, 3))[0])


def eval_jet_batch(params: MlpParams, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Values, gradients and full Hessians at a point batch.

    Returns (values (B,), gradients (B, 3), hessians (B, 3, 3)).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DimensionError(f"expected (B, 3) points, got {pts.shape}")
    if params.groups == 0:
        out = forward_jets(
            params.weights, params.biases, params.activation, pts, params.sine_omega
        ).output
    else:
        jets = input_jets(pts)
        last = len(params.weights) - 1
        for li, (w, bias) in enumerate(zip(params.weights, params.biases)):
            jets = jet_affine(w, bias, jets)
            if li < last:
                jets = _gn_jets(jets, params.groups)
                jets = jet_activate(params.activation, jets, params.sine_omega)
        out = jets
    return (
        out.values[:, 0],
        out.grads[:, :, 0],
        hess6_to_full(out.hess[:, :, 0]),
    )


def eval_jet(params: MlpParams, p) -> Jet2:
    """Value, gradient and Hessian of the field at one point."""
    v, g, h = eval_jet_batch(params, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return Jet2(float(v[0]), g[0], h[0])


# ---------------------------------------------------------------------------
# checkpoints: versioned JSON container, bit-exact float64 round trip
# ---------------------------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.float64).reshape(d["shape"]).copy()


def save_checkpoint(params: MlpParams, path, meta: Optional[dict] = None):
    """Write the network to ``path`` as a versioned JSON container."""
    doc = {
        "format": "devimplicit-checkpoint",
        "version": CHECKPOINT_VERSION,
        "layer_dims": params.layer_dims,
        "activation": params.activation,
        "sine_omega": params.sine_omega,
        "groups": params.groups,
        "weights": [_encode(w) for w in params.weights],
        "biases": [_encode(b) for b in params.biases],
        "meta": meta or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_checkpoint(path) -> Tuple[MlpParams, dict]:
    """Read a checkpoint; returns (params, meta)."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "devimplicit-checkpoint":
        raise ConfigurationError(f"{path} is not a devimplicit checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {doc.get('version')}")
    params = MlpParams(
        [_decode(w) for w in doc["weights"]],
        [_decode(b) for b in doc["biases"]],
        doc["activation"],
        float(doc.get("sine_omega", 1.0)),
        int(doc.get("groups", 0)),
    ).check()
    return params, doc.get("meta", {})
