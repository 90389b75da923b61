"""Angular-delay domain transform, per-sample normalization, and rate math.

The spatial-frequency matrix (rows = subcarriers, columns = antennas) maps to
the angular-delay domain through unitary DFTs: left IDFT over the subcarrier
axis, right DFT over the antenna axis. Both are norm-preserving, so metrics
computed in either domain agree.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


def angular_delay_forward(matrix):
    """H = F_d^H @ H_tilde @ F_a on the trailing two axes (unitary DFTs)."""
    x = np.asarray(matrix, dtype=np.complex128)
    return np.fft.fft(np.fft.ifft(x, axis=-2, norm="ortho"), axis=-1, norm="ortho")


def angular_delay_inverse(matrix):
    x = np.asarray(matrix, dtype=np.complex128)
    return np.fft.fft(np.fft.ifft(x, axis=-1, norm="ortho"), axis=-2, norm="ortho")


@dataclass(frozen=True)
class AngularDelayMatrix:
    """Complex M x N matrix in the angular-delay domain."""

    matrix: np.ndarray
    domain: str = "angular-delay"

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("angular-delay matrix must be 2-D")


@dataclass(frozen=True)
class NormalizationMeta:
    """Per-sample min-max extremes for the real and imaginary parts."""

    min_re: float
    max_re: float
    min_im: float
    max_im: float

    def __post_init__(self):
        if self.max_re < self.min_re or self.max_im < self.min_im:
            raise ValueError("normalization meta requires max >= min per part")
        for v in (self.min_re, self.max_re, self.min_im, self.max_im):
            if not np.isfinite(v):
                raise ValueError("normalization meta must be finite")

    def float32_bounds(self):
        """The bounds as a message receiver sees them: the wire stores them
        as float32, so any consumer past the serialization boundary must
        denormalize with these, not the full-precision originals."""
        return NormalizationMeta(*(
            float(np.float32(v))
            for v in (self.min_re, self.max_re, self.min_im, self.max_im)
        ))


@dataclass(frozen=True)
class AngularDelayTensor:
    """Real N x M x 2 tensor in [0,1] (channel 0 = real part, 1 = imaginary),
    antenna axis first, plus the meta needed to invert the scaling."""

    tensor: np.ndarray
    meta: NormalizationMeta

    def __post_init__(self):
        if self.tensor.ndim != 3 or self.tensor.shape[2] != 2:
            raise ValueError("tensor must have shape (N, M, 2)")


def to_angular_delay(realization):
    """Accepts a ChannelRealization or a bare M x N complex array."""
    mat = realization.matrix if hasattr(realization, "matrix") else realization
    return AngularDelayMatrix(matrix=angular_delay_forward(mat))


def from_angular_delay(angular):
    """Inverse transform; returns the spatial-frequency matrix (M x N)."""
    mat = angular.matrix if hasattr(angular, "matrix") else angular
    return angular_delay_inverse(mat)


def _scale_part(part):
    """Min-max scale one real part to [0,1]; returns (scaled, lo, hi).

    The halved form (x/2 - lo/2) / (hi/2 - lo/2) equals (x - lo)/(hi - lo)
    but cannot overflow even when hi and lo sit at opposite float extremes.
    """
    lo = float(np.min(part))
    hi = float(np.max(part))
    if hi == lo:
        return np.full(part.shape, 0.5, dtype=np.float64), lo, hi
    span_half = hi / 2.0 - lo / 2.0
    scaled = (part / 2.0 - lo / 2.0) / span_half
    return np.clip(scaled, 0.0, 1.0), lo, hi


def normalize(angular):
    """Transpose to antenna-major (N x M), scale real and imaginary parts
    independently to [0,1], and record the extremes."""
    mat = angular.matrix if hasattr(angular, "matrix") else np.asarray(angular)
    if not np.all(np.isfinite(mat)):
        raise ValueError("cannot normalize non-finite input")
    spatial = mat.T  # N x M, antenna axis first
    re, lo_re, hi_re = _scale_part(np.real(spatial).astype(np.float64))
    im, lo_im, hi_im = _scale_part(np.imag(spatial).astype(np.float64))
    tensor = np.stack([re, im], axis=-1)
    meta = NormalizationMeta(min_re=lo_re, max_re=hi_re, min_im=lo_im, max_im=hi_im)
    return AngularDelayTensor(tensor=tensor, meta=meta)


def _unscale_part(scaled, lo, hi):
    if hi == lo:
        return np.full(scaled.shape, lo, dtype=np.float64)
    # convex-combination form stays finite for extreme lo/hi
    return lo * (1.0 - scaled) + hi * scaled


def denormalize(tensor_obj, meta=None):
    """Invert normalize: rescale both parts, recombine, transpose to M x N."""
    if meta is None:
        meta = tensor_obj.meta
    if meta is None:
        raise ValueError("denormalize requires normalization meta")
    t = tensor_obj.tensor if hasattr(tensor_obj, "tensor") else np.asarray(tensor_obj)
    re = _unscale_part(t[..., 0], meta.min_re, meta.max_re)
    im = _unscale_part(t[..., 1], meta.min_im, meta.max_im)
    return AngularDelayMatrix(matrix=(re + 1j * im).T)


def codeword_scalar_count(cfg, c_t):
    """K_code = (N/8)(M/8) C_t: scalars in the transmitted codeword."""
    if c_t < 1:
        raise ValueError(f"c_t must be >= 1, got {c_t}")
    return (cfg.num_antennas // 8) * (cfg.num_subcarriers // 8) * c_t


def compression_ratio(cfg, c_t, c_b=None):
    """beta = K_code / (2 N M), exact rational; equals C_t/128 whenever N and
    M are divisible by 8 (always true by config invariant)."""
    if c_b is not None and not (1 <= c_t <= c_b):
        raise ValueError(f"c_t must be in [1, {c_b}], got {c_t}")
    k_code = codeword_scalar_count(cfg, c_t)
    return Fraction(k_code, 2 * cfg.num_antennas * cfg.num_subcarriers)
