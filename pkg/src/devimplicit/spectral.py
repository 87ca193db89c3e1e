"""Closed-form eigendecomposition of symmetric 3x3 matrices, batched.

Eigenvalues come from the trigonometric solution of the characteristic
polynomial; eigenvectors from cross products of the rows of (A - lambda I).
Matrices where that construction is ill-conditioned (degenerate or clustered
spectra) are reworked with cyclic Jacobi sweeps, which handle repeated
eigenvalues gracefully.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RECON_TOL = 1e-11
_ORTHO_TOL = 1e-9


@dataclass
class SingularSpectrum:
    """Singular values of a symmetric matrix with signs and eigenbasis.

    ``sigma`` is descending; ``eigvals[i]`` is the signed eigenvalue with
    ``abs(eigvals[i]) == sigma[i]``; ``vectors[:, i]`` the matching unit
    eigenvector.
    """

    sigma: np.ndarray    # (3,) descending, >= 0
    eigvals: np.ndarray  # (3,) signed, ordered like sigma
    vectors: np.ndarray  # (3, 3) orthonormal columns


def _eig3_trig(h: np.ndarray):
    """Trigonometric eigenvalues for a (B, 3, 3) symmetric batch, descending."""
    q = np.trace(h, axis1=1, axis2=2) / 3.0
    off = h[:, 0, 1] ** 2 + h[:, 0, 2] ** 2 + h[:, 1, 2] ** 2
    dd = h[:, (0, 1, 2), (0, 1, 2)] - q[:, None]
    p2 = (dd * dd).sum(axis=1) + 2.0 * off
    p = np.sqrt(np.maximum(p2 / 6.0, 0.0))
    lam = np.empty((h.shape[0], 3))
    scalar = p <= 0.0
    safe_p = np.where(scalar, 1.0, p)
    b = (h - q[:, None, None] * np.eye(3)) / safe_p[:, None, None]
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    lam[:, 0] = q + 2.0 * p * np.cos(phi)
    lam[:, 2] = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    lam[:, 1] = 3.0 * q - lam[:, 0] - lam[:, 2]
    lam[scalar] = q[scalar, None]
    return lam


def _vectors_from_crosses(h: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Null vectors of (A - lambda I) via the largest pairwise row cross."""
    bsz = h.shape[0]
    vecs = np.empty((bsz, 3, 3))
    for i in range(3):
        m = h - lam[:, i, None, None] * np.eye(3)
        cands = np.stack(
            [
                np.cross(m[:, 0], m[:, 1]),
                np.cross(m[:, 0], m[:, 2]),
                np.cross(m[:, 1], m[:, 2]),
            ],
            axis=1,
        )
        norms = np.linalg.norm(cands, axis=2)
        pick = cands[np.arange(bsz), norms.argmax(axis=1)]
        vecs[:, :, i] = pick / np.maximum(np.linalg.norm(pick, axis=1, keepdims=True), 1e-300)
    # re-orthogonalize the middle vector; degenerate cases go to Jacobi anyway
    v2 = np.cross(vecs[:, :, 2], vecs[:, :, 0])
    n2 = np.linalg.norm(v2, axis=1, keepdims=True)
    good = n2[:, 0] > 1e-12
    vecs[good, :, 1] = v2[good] / n2[good]
    return vecs


def _jacobi_batch(h: np.ndarray, sweeps: int = 16):
    """Cyclic Jacobi diagonalization of a (B, 3, 3) symmetric batch."""
    a = h.copy()
    bsz = a.shape[0]
    v = np.broadcast_to(np.eye(3), (bsz, 3, 3)).copy()
    for _ in range(sweeps):
        off = a[:, 0, 1] ** 2 + a[:, 0, 2] ** 2 + a[:, 1, 2] ** 2
        if np.all(off < 1e-30):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[:, p, q]
            mask = np.abs(apq) > 1e-300
            theta = np.zeros(bsz)
            diff = a[:, q, q] - a[:, p, p]
            theta[mask] = 0.5 * np.arctan2(2.0 * apq[mask], diff[mask])
            c = np.cos(theta)
            s = np.sin(theta)
            rot = np.zeros((bsz, 3, 3))
            rot[:, 0, 0] = rot[:, 1, 1] = rot[:, 2, 2] = 1.0
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            a = np.einsum("bji,bjk,bkl->bil", rot, a, rot)
            v = v @ rot
    lam = a[:, (0, 1, 2), (0, 1, 2)]
    order = np.argsort(-lam, axis=1)
    lam = np.take_along_axis(lam, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return lam, v


def eigh3_batch(h: np.ndarray):
    """Eigendecomposition of a (B, 3, 3) symmetric batch.

    Returns (lam, vecs) with eigenvalues descending and eigenvectors in
    matching columns.  Closed form first; matrices failing the reconstruction
    or orthonormality check are redone with Jacobi sweeps.
    """
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 2
    if single:
        h = h[None]
    lam = _eig3_trig(h)
    vecs = _vectors_from_crosses(h, lam)

    recon = np.einsum("bik,bk,bjk->bij", vecs, lam, vecs)
    scale = np.maximum(np.abs(h).max(axis=(1, 2)), 1.0)
    bad_recon = np.abs(recon - h).max(axis=(1, 2)) > _RECON_TOL * scale
    gram = np.einsum("bki,bkj->bij", vecs, vecs)
    bad_ortho = np.abs(gram - np.eye(3)).max(axis=(1, 2)) > _ORTHO_TOL
    redo = bad_recon | bad_ortho
    if np.any(redo):
        lam_j, vecs_j = _jacobi_batch(h[redo])
        lam[redo] = lam_j
        vecs[redo] = vecs_j
    if single:
        return lam[0], vecs[0]
    return lam, vecs


def spectrum(h: np.ndarray) -> SingularSpectrum:
    """Singular spectrum of one symmetric 3x3 matrix, descending by magnitude."""
    lam, vecs = eigh3_batch(np.asarray(h, dtype=np.float64))
    order = np.argsort(-np.abs(lam))
    lam = lam[order]
    vecs = vecs[:, order]
    return SingularSpectrum(np.abs(lam), lam, vecs)


def spectrum_batch(h: np.ndarray):
    """Batched spectrum: returns (sigma, eigvals, vectors) ordered by magnitude."""
    lam, vecs = eigh3_batch(h)
    order = np.argsort(-np.abs(lam), axis=1)
    lam = np.take_along_axis(lam, order, axis=1)
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    return np.abs(lam), lam, vecs
