"""Propagation of (value, gradient, Hessian) triples through network layers.

A batch of jets is held as three arrays:

    values   (B, m)        field value per unit
    grads    (B, 3, m)     d(value)/d(input point)
    hess     (B, 6, m)     d2(value)/d(input point)2, symmetric storage

The six Hessian components are ordered xx, yy, zz, xy, xz, yz and store the
matrix entries themselves.  Adjoint arrays use the same parameterization, so
an off-diagonal adjoint component is dL/d(entry) summed over both mirrored
positions.  Keeping primal and adjoint in the same parameterization makes
every linear step self-adjoint componentwise and avoids factor-2 bookkeeping.

The forward pass records enough state for an exact reverse traversal that
yields parameter gradients of any loss reading (value, gradient, hessian) at
the output, including the third-order terms produced by the activation chain
rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .activations import activation_derivs3
from .errors import DimensionError, StateError

# symmetric component (i, j) index pairs for the 6-vector layout
PAIR_I = np.array([0, 1, 2, 0, 0, 1])
PAIR_J = np.array([0, 1, 2, 1, 2, 2])
_OFFDIAG = slice(3, 6)


def hess6_to_full(h6: np.ndarray) -> np.ndarray:
    """Expand (..., 6) symmetric storage into full (..., 3, 3) matrices."""
    h6 = np.asarray(h6)
    out = np.empty(h6.shape[:-1] + (3, 3), dtype=h6.dtype)
    out[..., PAIR_I, PAIR_J] = h6
    out[..., PAIR_J, PAIR_I] = h6
    return out


def full_to_hess6(h: np.ndarray) -> np.ndarray:
    """Collapse full symmetric (..., 3, 3) matrices into (..., 6) storage."""
    h = np.asarray(h)
    return 0.5 * (h[..., PAIR_I, PAIR_J] + h[..., PAIR_J, PAIR_I])


def adjoint_full_to_hess6(f: np.ndarray) -> np.ndarray:
    """Convert a full-matrix adjoint into the 6-component parameterization.

    For a symmetric full-matrix adjoint F, the 6-vector adjoint carries
    F_ii on the diagonal and F_ij + F_ji = 2 F_ij off the diagonal.
    """
    f = np.asarray(f)
    return f[..., PAIR_I, PAIR_J] + np.where(
        PAIR_I == PAIR_J, 0.0, f[..., PAIR_J, PAIR_I]
    )


@dataclass
class Jet2:
    """Field value with its spatial gradient and symmetric Hessian at one point."""

    value: float
    gradient: np.ndarray  # (3,)
    hessian: np.ndarray   # (3, 3) symmetric

    def __post_init__(self):
        self.gradient = np.asarray(self.gradient, dtype=np.float64).reshape(3)
        h = np.asarray(self.hessian, dtype=np.float64).reshape(3, 3)
        self.hessian = 0.5 * (h + h.T)


@dataclass
class LayerJets:
    """Batched jets for every unit of one layer."""

    values: np.ndarray  # (B, m)
    grads: np.ndarray   # (B, 3, m)
    hess: np.ndarray    # (B, 6, m)

    @property
    def batch(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def check(self):
        b, m = self.values.shape
        if self.grads.shape != (b, 3, m) or self.hess.shape != (b, 6, m):
            raise DimensionError(
                f"jet arrays disagree: values {self.values.shape}, "
                f"grads {self.grads.shape}, hess {self.hess.shape}"
            )
        return self


def input_jets(points: np.ndarray) -> LayerJets:
    """Seed jets for raw coordinates: value p, gradient rows of I, zero Hessian."""
    p = np.asarray(points, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise DimensionError(f"expected points of shape (B, 3), got {p.shape}")
    b = p.shape[0]
    grads = np.broadcast_to(np.eye(3), (b, 3, 3)).copy()
    return LayerJets(p.copy(), grads, np.zeros((b, 6, 3)))


def _stack_matmul(a: np.ndarray, w_t: np.ndarray) -> np.ndarray:
    """(B, C, m_in) @ (m_in, m_out) as one BLAS call."""
    b, c, m = a.shape
    return (a.reshape(b * c, m) @ w_t).reshape(b, c, w_t.shape[1])


def jet_affine(w: np.ndarray, b: np.ndarray, jets: LayerJets) -> LayerJets:
    """Push jets through z = W v + b; gradients and Hessians map linearly."""
    w = np.asarray(w, dtype=np.float64)
    bias = np.asarray(b, dtype=np.float64)
    if w.ndim != 2 or bias.shape != (w.shape[0],):
        raise DimensionError(f"bad affine shapes: W {w.shape}, b {bias.shape}")
    if jets.width != w.shape[1]:
        raise DimensionError(
            f"affine expects input width {w.shape[1]}, got jets of width {jets.width}"
        )
    wt = np.ascontiguousarray(w.T)
    return LayerJets(
        jets.values @ wt + bias,
        _stack_matmul(jets.grads, wt),
        _stack_matmul(jets.hess, wt),
    )


def _hess6_matvec(h6: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Apply a 6-parameterized adjoint to a gradient stack: returns 2*F@g.

    ``h6`` is an adjoint in 6-component convention (off-diagonals doubled),
    ``g`` has shape (B, 3, m).  Result r_i = 2*F_ii*g_i + sum_{j!=i} 2*F_ij*g_j
    expressed directly on the 6 components.
    """
    r = np.empty_like(g)
    r[:, 0] = 2.0 * h6[:, 0] * g[:, 0] + h6[:, 3] * g[:, 1] + h6[:, 4] * g[:, 2]
    r[:, 1] = 2.0 * h6[:, 1] * g[:, 1] + h6[:, 3] * g[:, 0] + h6[:, 5] * g[:, 2]
    r[:, 2] = 2.0 * h6[:, 2] * g[:, 2] + h6[:, 4] * g[:, 0] + h6[:, 5] * g[:, 1]
    return r


def jet_activate(kind: str, jets: LayerJets, omega: float = 1.0) -> LayerJets:
    """Apply the second-order chain rule of an elementwise activation.

    v' = s(v),  g' = s'(v) g,  H' = s''(v) g g^T + s'(v) H.
    """
    v, d1, d2, _ = activation_derivs3(kind, jets.values, omega)
    gg6 = jets.grads[:, PAIR_I, :] * jets.grads[:, PAIR_J, :]
    return LayerJets(
        v,
        d1[:, None, :] * jets.grads,
        d2[:, None, :] * gg6 + d1[:, None, :] * jets.hess,
    )


@dataclass
class GradAccumulator:
    """One gradient buffer per parameter tensor, shapes mirroring the network."""

    dw: List[np.ndarray]
    db: List[np.ndarray]

    @classmethod
    def zeros_like(cls, weights, biases) -> "GradAccumulator":
        return cls([np.zeros_like(w) for w in weights], [np.zeros_like(b) for b in biases])

    def zero(self):
        for a in self.dw:
            a.fill(0.0)
        for a in self.db:
            a.fill(0.0)

    def add_scaled(self, other: "GradAccumulator", scale: float = 1.0):
        for a, o in zip(self.dw, other.dw):
            a += scale * o
        for a, o in zip(self.db, other.db):
            a += scale * o

    def ravel(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.dw + self.db])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.dw + self.db)


@dataclass
class _ActRecord:
    """Pre-activation state a hidden layer needs for its reverse step."""

    grads: np.ndarray
    hess: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray


@dataclass
class JetTape:
    """Recorded forward pass: inputs to each affine layer and activation state."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str
    omega: float
    layer_inputs: List[LayerJets] = field(default_factory=list)
    preacts: List[Optional[_ActRecord]] = field(default_factory=list)
    output: Optional[LayerJets] = None
    _consumed: bool = False


def forward_jets(weights, biases, activation: str, points: np.ndarray,
                 omega: float = 1.0) -> JetTape:
    """Run the jet pipeline over a point batch, recording state for backward.

    The activation is applied after every affine layer except the last.
    """
    tape = JetTape(list(weights), list(biases), activation, omega)
    jets = input_jets(points)
    n_layers = len(tape.weights)
    for li in range(n_layers):
        tape.layer_inputs.append(jets)
        jets = jet_affine(tape.weights[li], tape.biases[li], jets)
        if li < n_layers - 1:
            v, d1, d2, d3 = activation_derivs3(activation, jets.values, omega)
            tape.preacts.append(_ActRecord(jets.grads, jets.hess, d1, d2, d3))
            gg6 = jets.grads[:, PAIR_I, :] * jets.grads[:, PAIR_J, :]
            jets = LayerJets(
                v,
                d1[:, None, :] * jets.grads,
                d2[:, None, :] * gg6 + d1[:, None, :] * jets.hess,
            )
        else:
            tape.preacts.append(None)
    tape.output = jets
    return tape


def _contract_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sum_c a[:, c, :] * b[:, c, :] without an einsum dispatch."""
    return (a * b).sum(axis=1)


def backward_params(tape: JetTape, v_bar: np.ndarray, g_bar: Optional[np.ndarray],
                    h6_bar: Optional[np.ndarray], acc: GradAccumulator) -> GradAccumulator:
    """Accumulate dL/d(theta) for a loss with the given output adjoints.

    ``v_bar`` is (B, m_out); ``g_bar`` (B, 3, m_out) and ``h6_bar`` (B, 6, m_out)
    may be None when the loss ignores those output slots.  The traversal
    includes the third-order activation terms, so losses on the spatial
    Hessian receive exact parameter gradients.
    """
    if tape.output is None:
        raise StateError("backward_params called before a completed forward pass")
    if tape._consumed:
        raise StateError("tape already consumed by a previous backward pass")
    tape._consumed = True

    out = tape.output
    b, m_out = out.values.shape
    vb = np.zeros((b, m_out)) if v_bar is None else np.asarray(v_bar, dtype=np.float64)
    gb = np.zeros((b, 3, m_out)) if g_bar is None else np.asarray(g_bar, dtype=np.float64)
    hb = np.zeros((b, 6, m_out)) if h6_bar is None else np.asarray(h6_bar, dtype=np.float64)
    if vb.shape != (b, m_out) or gb.shape != (b, 3, m_out) or hb.shape != (b, 6, m_out):
        raise DimensionError("output adjoint shapes disagree with the forward pass")

    for li in range(len(tape.weights) - 1, -1, -1):
        pre = tape.preacts[li]
        if pre is not None:
            gg6 = pre.grads[:, PAIR_I, :] * pre.grads[:, PAIR_J, :]
            # scalar slot: value chain + gradient chain + both Hessian chains
            zb = (
                vb * pre.d1
                + pre.d2 * (_contract_channels(gb, pre.grads) + _contract_channels(hb, pre.hess))
                + pre.d3 * _contract_channels(hb, gg6)
            )
            # gradient slot: linear term + rank-one term of the output Hessian
            gb = pre.d1[:, None, :] * gb + pre.d2[:, None, :] * _hess6_matvec(hb, pre.grads)
            hb = pre.d1[:, None, :] * hb
            vb = zb
        inp = tape.layer_inputs[li]
        m_o = vb.shape[1]
        acc.dw[li] += (
            vb.T @ inp.values
            + gb.reshape(b * 3, m_o).T @ inp.grads.reshape(b * 3, -1)
            + hb.reshape(b * 6, m_o).T @ inp.hess.reshape(b * 6, -1)
        )
        acc.db[li] += vb.sum(axis=0)
        if li > 0:
            w = tape.weights[li]
            vb = vb @ w
            gb = _stack_matmul(gb, w)
            hb = _stack_matmul(hb, w)
    return acc


# ---------------------------------------------------------------------------
# value-only pipeline (data term): plain MLP forward/backward
# ---------------------------------------------------------------------------

@dataclass
class ValueTape:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str
    omega: float
    layer_inputs: List[np.ndarray] = field(default_factory=list)
    act_d1: List[Optional[np.ndarray]] = field(default_factory=list)
    output: Optional[np.ndarray] = None
    _consumed: bool = False


def forward_values(weights, biases, activation: str, points: np.ndarray,
                   omega: float = 1.0) -> ValueTape:
    """Forward pass carrying only values; records state for backprop."""
    tape = ValueTape(list(weights), list(biases), activation, omega)
    x = np.asarray(points, dtype=np.float64)
    n_layers = len(tape.weights)
    for li in range(n_layers):
        tape.layer_inputs.append(x)
        x = x @ tape.weights[li].T + tape.biases[li]
        if li < n_layers - 1:
            x, d1, _, _ = activation_derivs3(activation, x, omega)
            tape.act_d1.append(d1)
        else:
            tape.act_d1.append(None)
    tape.output = x
    return tape


def backward_values(tape: ValueTape, v_bar: np.ndarray, acc: GradAccumulator) -> GradAccumulator:
    """Accumulate dL/d(theta) for a loss reading only output values."""
    if tape.output is None:
        raise StateError("backward_values called before a completed forward pass")
    if tape._consumed:
        raise StateError("tape already consumed by a previous backward pass")
    tape._consumed = True
    vb = np.asarray(v_bar, dtype=np.float64)
    for li in range(len(tape.weights) - 1, -1, -1):
        d1 = tape.act_d1[li]
        if d1 is not None:
            vb = vb * d1
        acc.dw[li] += vb.T @ tape.layer_inputs[li]
        acc.db[li] += vb.sum(axis=0)
        if li > 0:
            vb = vb @ tape.weights[li]
    return acc
