"""Reconstruction metrics.

NMSE is computed wherever the tensors live (the transform is unitary, so the
angular-delay and spatial-frequency values agree); cosine similarity indexes
per-subcarrier vectors, so callers hand it spatial-frequency matrices.
"""

import numpy as np

NMSE_FLOOR_DB = -300.0  # sentinel for exact reconstruction; log10(0) otherwise


def _as_batch(x):
    arr = np.asarray(x)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected matrix or batch of matrices, got shape {arr.shape}")
    return arr


def nmse_ratios(truth, recon):
    """Per-sample ||H - H_hat||_F^2 / ||H||_F^2."""
    t = _as_batch(truth)
    r = _as_batch(recon)
    if t.shape != r.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {r.shape}")
    num = np.sum(np.abs(t - r) ** 2, axis=(1, 2))
    den = np.sum(np.abs(t) ** 2, axis=(1, 2))
    if np.any(den == 0):
        raise ValueError("zero-norm truth sample")
    return num / den


def nmse_db(truth, recon):
    """10 log10 of the sample-mean normalized squared error, floored at
    NMSE_FLOOR_DB for exact reconstruction."""
    mean_ratio = float(np.mean(nmse_ratios(truth, recon)))
    if mean_ratio == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(mean_ratio), NMSE_FLOOR_DB)


def rho_per_sample(truth, recon):
    """Per-sample mean over subcarriers of |h_hat^H h| / (||h_hat|| ||h||);
    a zero-norm row on either side contributes 0 for that subcarrier."""
    t = _as_batch(truth)
    r = _as_batch(recon)
    if t.shape != r.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {r.shape}")
    inner = np.abs(np.sum(np.conj(r) * t, axis=2))
    norms = np.linalg.norm(t, axis=2) * np.linalg.norm(r, axis=2)
    terms = np.divide(inner, norms, out=np.zeros_like(inner), where=norms > 0)
    # Cauchy-Schwarz puts each term in [0,1]; clip float dust
    return np.clip(terms, 0.0, 1.0).mean(axis=1)


def cosine_similarity(truth, recon):
    """Sample-mean rho in [0,1]."""
    return float(np.mean(rho_per_sample(truth, recon)))
