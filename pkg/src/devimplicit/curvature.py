"""Implicit curvature of a field from its jet: Gaussian, mean, principal.

All quantities follow the bordered-Hessian route: the Gaussian curvature is
the negated determinant of the 4x4 matrix [[H, grad^T], [grad, 0]] divided by
|grad|^4, with the determinant computed through 3x3 cofactors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import SingularPointError
from .jets import Jet2

# gradient norms at or below this are treated as singular points of the field
GRADIENT_FLOOR = 1e-6


@dataclass
class CurvatureSample:
    """Curvature quantities at one point.

    ``kmin`` is min(|k1|, |k2|); ``clamped`` records whether the principal
    discriminant was negative by round-off and squashed to zero.
    """

    K: float
    M: float
    k1: float
    k2: float
    kmin: float
    clamped: bool = False


def adjugate3(h: np.ndarray) -> np.ndarray:
    """Adjugate (equals the cofactor matrix for symmetric input) of (..., 3, 3)."""
    h = np.asarray(h, dtype=np.float64)
    tr = np.trace(h, axis1=-2, axis2=-1)[..., None, None]
    h2 = h @ h
    tr2 = np.trace(h2, axis1=-2, axis2=-1)[..., None, None]
    eye = np.eye(3)
    return h2 - tr * h + 0.5 * (tr * tr - tr2) * eye


def bordered_matrix(j: Jet2) -> np.ndarray:
    """The 4x4 bordered Hessian [[H, grad^T], [grad, 0]]."""
    m = np.zeros((4, 4))
    m[:3, :3] = j.hessian
    m[:3, 3] = j.gradient
    m[3, :3] = j.gradient
    return m


def bordered_det_batch(grads: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """-grad . Cof(H) . grad for batched (B, 3) gradients and (B, 3, 3) Hessians."""
    cof = adjugate3(hess)
    return -np.einsum("...i,...ij,...j->...", grads, cof, grads)


def bordered_det(j: Jet2) -> float:
    """Determinant of the bordered Hessian via the cofactor identity."""
    return float(bordered_det_batch(j.gradient[None], j.hessian[None])[0])


def _require_gradient(j: Jet2) -> float:
    gn = float(np.linalg.norm(j.gradient))
    if gn <= GRADIENT_FLOOR:
        raise SingularPointError(
            f"gradient norm {gn:.3e} is at or below the floor {GRADIENT_FLOOR:.0e}"
        )
    return gn


def gauss_K(j: Jet2) -> float:
    """Gaussian curvature K = -det(bordered H) / |grad|^4."""
    gn = _require_gradient(j)
    return -bordered_det(j) / gn ** 4


def mean_M(j: Jet2) -> float:
    """Mean curvature M = (grad.H.grad - |grad|^2 tr H) / (2 |grad|^3)."""
    gn = _require_gradient(j)
    ghg = float(j.gradient @ j.hessian @ j.gradient)
    return (ghg - gn * gn * np.trace(j.hessian)) / (2.0 * gn ** 3)


def principal(j: Jet2) -> CurvatureSample:
    """Principal curvatures k1, k2 = M +- sqrt(M^2 - K) and their |.| minimum."""
    k = gauss_K(j)
    m = mean_M(j)
    disc = m * m - k
    clamped = disc < 0.0
    root = np.sqrt(max(disc, 0.0))
    k1 = m + root
    k2 = m - root
    return CurvatureSample(k, m, k1, k2, min(abs(k1), abs(k2)), bool(clamped))


def curvature_batch(values: np.ndarray, grads: np.ndarray, hess: np.ndarray
                    ) -> Tuple[dict, np.ndarray, int]:
    """Curvature arrays over a jet batch, masking singular-gradient samples.

    Returns (fields, valid_mask, clamped_count) where ``fields`` maps
    'K', 'M', 'k1', 'k2', 'kmin' to arrays over the valid samples only.
    """
    gn = np.linalg.norm(grads, axis=1)
    valid = gn > GRADIENT_FLOOR
    g = grads[valid]
    h = hess[valid]
    n = gn[valid]
    bdet = bordered_det_batch(g, h)
    k = -bdet / n ** 4
    ghg = np.einsum("bi,bij,bj->b", g, h, g)
    m = (ghg - n * n * np.trace(h, axis1=1, axis2=2)) / (2.0 * n ** 3)
    disc = m * m - k
    clamped_count = int(np.count_nonzero(disc < 0.0))
    root = np.sqrt(np.maximum(disc, 0.0))
    k1 = m + root
    k2 = m - root
    fields = {
        "K": k,
        "M": m,
        "k1": k1,
        "k2": k2,
        "kmin": np.minimum(np.abs(k1), np.abs(k2)),
    }
    return fields, valid, clamped_count
