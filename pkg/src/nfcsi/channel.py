"""Wideband near-field channel generation for an extremely large ULA.

Spherical-wavefront model: each scatterer at (distance r, angle theta) sees a
per-antenna propagation distance r^(n) = sqrt(r^2 + dn^2 d^2 - 2 r dn d sin(theta)),
and the array response is evaluated at each subcarrier's own wavelength, so a
single path's energy drifts across angular bins with frequency (beam split).

Conventions:
  - antennas n = 0..N-1 on a half-wavelength ULA, offsets dn = n - (N-1)/2
  - subcarriers m = 0..M-1 at f_m = f_c + ((2m - M) / (2M)) * B
  - channel matrix row m holds h_m^H (conjugated channel vector)
"""

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .seeds import mix_seeds, rng_from

C_LIGHT = 299_792_458.0  # m/s

DATASET_MAGIC = b"NFC1"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sIIIQddQ")  # magic, version, N, M, count, f_c, B, seed


@dataclass(frozen=True)
class SystemConfig:
    """Physical system description; the single source of physical truth.

    Defaults are the desk-scale configuration. The distance range deliberately
    straddles the desk-scale Fraunhofer distance (about 1.44 m for N=32) so
    samples cover both near- and far-field geometry.
    """

    num_antennas: int = 32
    num_subcarriers: int = 32
    carrier_freq_hz: float = 100e9
    bandwidth_hz: float = 10e9
    num_paths: int = 3
    distance_range: tuple = (0.5, 3.0)
    angle_range: tuple = (-np.pi / 3, np.pi / 3)
    master_seed: int = 2024

    def __post_init__(self):
        n, m = self.num_antennas, self.num_subcarriers
        if n < 8 or n % 8 != 0:
            raise ValueError(f"num_antennas must be >= 8 and divisible by 8, got {n}")
        if m < 8 or m % 8 != 0:
            raise ValueError(f"num_subcarriers must be >= 8 and divisible by 8, got {m}")
        if not (0.0 < self.bandwidth_hz < 2.0 * self.carrier_freq_hz):
            raise ValueError("bandwidth must satisfy 0 < B < 2*f_c (all f_m positive)")
        r_min, r_max = self.distance_range
        if not (0.0 < r_min <= r_max):
            raise ValueError(f"invalid distance_range {self.distance_range}")
        a_min, a_max = self.angle_range
        half_pi = np.pi / 2
        if not (-half_pi < a_min <= a_max < half_pi):
            raise ValueError(f"angle_range must lie inside (-pi/2, pi/2), got {self.angle_range}")
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if not (0 <= self.master_seed < (1 << 64)):
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    @property
    def carrier_wavelength(self):
        return C_LIGHT / self.carrier_freq_hz

    @property
    def antenna_spacing(self):
        # half-wavelength ULA
        return self.carrier_wavelength / 2.0

    @property
    def aperture(self):
        return (self.num_antennas - 1) * self.antenna_spacing

    @property
    def fraunhofer_distance(self):
        return 2.0 * self.aperture**2 / self.carrier_wavelength


def config_digest(cfg):
    """Short stable hash of the physical fields, stored with each realization."""
    text = "|".join(
        repr(v)
        for v in (
            cfg.num_antennas, cfg.num_subcarriers, cfg.carrier_freq_hz,
            cfg.bandwidth_hz, cfg.num_paths, tuple(cfg.distance_range),
            tuple(cfg.angle_range), cfg.master_seed,
        )
    )
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class PathSet:
    """Scatterer parameters for one channel drop: complex gains, angles (rad),
    distances (m), one entry per path."""

    gains: np.ndarray
    angles: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if not (len(self.gains) == len(self.angles) == len(self.distances)):
            raise ValueError("path arrays must have equal length")
        if not np.all(np.isfinite(self.gains)):
            raise ValueError("path gains must be finite")


@dataclass(frozen=True)
class ChannelRealization:
    """One spatial-frequency CSI matrix (M x N, row m = h_m^H)."""

    matrix: np.ndarray
    config_digest: str
    seed: int

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise ValueError("channel matrix must be 2-D (subcarriers x antennas)")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("channel matrix entries must be finite")


def subcarrier_frequency(cfg, m):
    """Frequency of subcarrier m: f_c + ((2m - M) / (2M)) * B."""
    big_m = cfg.num_subcarriers
    if not 0 <= m <= big_m - 1:
        raise IndexError(f"subcarrier index {m} out of range [0, {big_m - 1}]")
    return cfg.carrier_freq_hz + ((2 * m - big_m) / (2 * big_m)) * cfg.bandwidth_hz


def all_subcarrier_frequencies(cfg):
    m = np.arange(cfg.num_subcarriers)
    big_m = cfg.num_subcarriers
    return cfg.carrier_freq_hz + ((2 * m - big_m) / (2 * big_m)) * cfg.bandwidth_hz


def antenna_offset(num_antennas, n):
    """Signed element offset dn = n - (N-1)/2, antisymmetric about the center."""
    if not 0 <= n <= num_antennas - 1:
        raise IndexError(f"antenna index {n} out of range [0, {num_antennas - 1}]")
    return n - (num_antennas - 1) / 2.0


def antenna_offsets(num_antennas):
    return np.arange(num_antennas) - (num_antennas - 1) / 2.0


def scatter_distance(r, theta, delta_n, d):
    """Distance from a scatterer at (r, theta) to the antenna at offset delta_n.

    Law of cosines: sqrt(r^2 + dn^2 d^2 - 2 r dn d sin(theta)). Equivalent to
    the planar geometry with the scatterer at (r cos(theta), r sin(theta)) and
    the antenna at (0, dn * d).
    """
    if np.any(np.asarray(r) <= 0):
        raise ValueError("scatterer distance r must be positive")
    radicand = r * r + (delta_n * d) ** 2 - 2.0 * r * delta_n * d * np.sin(theta)
    if np.any(radicand < 0):
        raise ValueError("negative radicand in scatter_distance")
    return np.sqrt(radicand)


def _path_delay_excess(r, theta, delta_n, d):
    """r^(n) - r evaluated without catastrophic cancellation.

    r^(n) - r = (dn^2 d^2 - 2 r dn d sin(theta)) / (r^(n) + r); the direct
    sqrt difference loses all precision once r >> aperture (far field).
    """
    r_n = scatter_distance(r, theta, delta_n, d)
    num = (delta_n * d) ** 2 - 2.0 * r * delta_n * d * np.sin(theta)
    return num / (r_n + r)


def array_response(cfg, theta, r, f_m):
    """Spherical-wave steering vector at carrier f_m; unit l2 norm.

    Entry n: (1/sqrt(N)) * exp(j * phi_n), phi_n = -(2 pi / lambda_m)(r^(n) - r).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    if f_m <= 0:
        raise ValueError("f_m must be positive")
    n = cfg.num_antennas
    delta = antenna_offsets(n)
    excess = _path_delay_excess(r, theta, delta, cfg.antenna_spacing)
    lam = C_LIGHT / f_m
    phase = -(2.0 * np.pi / lam) * excess
    return np.exp(1j * phase) / np.sqrt(n)


def planar_response_phase(cfg, theta, f_m):
    """Far-field (planar wavefront) per-element phase 2 pi / lambda_m * dn d sin."""
    delta = antenna_offsets(cfg.num_antennas)
    lam = C_LIGHT / f_m
    return (2.0 * np.pi / lam) * delta * cfg.antenna_spacing * np.sin(theta)


def far_field_phase_error(cfg, theta, r, f_m):
    """Max per-element phase gap between the spherical response and the planar
    model, wrapped to (-pi, pi]. Used by the far-field consistency checks."""
    a = array_response(cfg, theta, r, f_m)
    spherical = np.angle(a * np.sqrt(cfg.num_antennas))
    planar = planar_response_phase(cfg, theta, f_m)
    gap = np.angle(np.exp(1j * (spherical - planar)))
    return float(np.max(np.abs(gap)))


def sample_paths(cfg, sample_seed):
    """Draw one PathSet: angles and distances uniform over the configured
    ranges, gains circularly-symmetric complex Gaussian with unit variance.
    Fully determined by (cfg, sample_seed)."""
    rng = rng_from(sample_seed)
    ell = cfg.num_paths
    angles = rng.uniform(cfg.angle_range[0], cfg.angle_range[1], size=ell)
    distances = rng.uniform(cfg.distance_range[0], cfg.distance_range[1], size=ell)
    gains = (rng.standard_normal(ell) + 1j * rng.standard_normal(ell)) / np.sqrt(2.0)
    return PathSet(gains=gains, angles=angles, distances=distances)


def channel_vector(cfg, paths, m):
    """Channel vector for subcarrier m:
    h_m = sqrt(N/L) * sum_l g_l * exp(-j 2 pi r_l / lambda_m) * a(theta_l, r_l, f_m).

    Gains are frequency-flat across subcarriers; the frequency dependence
    (and hence beam split) lives entirely in the array response and the global
    path phase.
    """
    f_m = subcarrier_frequency(cfg, m)
    n, ell = cfg.num_antennas, cfg.num_paths
    lam = C_LIGHT / f_m
    h = np.zeros(n, dtype=np.complex128)
    for g, theta, r in zip(paths.gains, paths.angles, paths.distances):
        h += g * np.exp(-2j * np.pi * r / lam) * array_response(cfg, theta, r, f_m)
    return np.sqrt(n / ell) * h


def generate_channel(cfg, sample_seed):
    """One spatial-frequency realization: rows are h_m^H for m = 0..M-1."""
    paths = sample_paths(cfg, sample_seed)
    n, big_m, ell = cfg.num_antennas, cfg.num_subcarriers, cfg.num_paths
    freqs = all_subcarrier_frequencies(cfg)  # [M]
    delta = antenna_offsets(n)
    d = cfg.antenna_spacing

    h = np.zeros((big_m, n), dtype=np.complex128)
    for g, theta, r in zip(paths.gains, paths.angles, paths.distances):
        excess = _path_delay_excess(r, theta, delta, d)  # [N], frequency-free
        # per-element spherical phase and per-path global phase, all M at once
        elem = np.exp(-2j * np.pi * np.outer(freqs, excess) / C_LIGHT)  # [M, N]
        glob = np.exp(-2j * np.pi * r * freqs / C_LIGHT)  # [M]
        h += g * glob[:, None] * elem
    h *= np.sqrt(n / ell) / np.sqrt(n)  # steering 1/sqrt(N) folded in here
    matrix = np.conj(h)  # row m holds h_m^H
    return ChannelRealization(matrix=matrix, config_digest=config_digest(cfg), seed=sample_seed)


def sample_seed_for(cfg, index):
    """Per-sample seed: mix(master_seed, index); any sample regenerates alone."""
    return mix_seeds(cfg.master_seed, index)


def generate_dataset(cfg, count, out_path):
    """Write `count` realizations to the binary dataset format.

    Layout (little-endian): magic 'NFC1', u32 version, u32 N, u32 M, u64 count,
    f64 carrier_freq_hz, f64 bandwidth_hz, u64 master_seed, then count records
    of M*N complex64 values (interleaved re/im f32), row-major (row = m).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    header = _HEADER.pack(
        DATASET_MAGIC, DATASET_VERSION, cfg.num_antennas, cfg.num_subcarriers,
        count, cfg.carrier_freq_hz, cfg.bandwidth_hz, cfg.master_seed,
    )
    with open(out_path, "wb") as f:
        f.write(header)
        for i in range(count):
            h = generate_channel(cfg, sample_seed_for(cfg, i))
            f.write(np.ascontiguousarray(h.matrix.astype("<c8")).tobytes())
    return out_path


@dataclass(frozen=True)
class DatasetFile:
    """Parsed dataset: header fields plus a read-only (count, M, N) view."""

    num_antennas: int
    num_subcarriers: int
    count: int
    carrier_freq_hz: float
    bandwidth_hz: float
    master_seed: int
    samples: np.ndarray = field(repr=False)


def read_dataset(path):
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError(f"dataset file too short: {path}")
    magic, version, n, big_m, count, f_c, bw, seed = _HEADER.unpack(raw)
    if magic != DATASET_MAGIC:
        raise ValueError(f"bad dataset magic {magic!r}")
    if version != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    samples = np.memmap(path, dtype="<c8", mode="r", offset=_HEADER.size,
                        shape=(count, big_m, n))
    return DatasetFile(
        num_antennas=n, num_subcarriers=big_m, count=count,
        carrier_freq_hz=f_c, bandwidth_hz=bw, master_seed=seed, samples=samples,
    )


def angular_peak_bin(h_vector):
    """Index of the strongest angular bin (DFT across antennas) of one channel
    vector; the beam-split probe compares this across subcarriers."""
    spectrum = np.fft.fft(h_vector)
    return int(np.argmax(np.abs(spectrum)))


def beam_split_fires(cfg, n_trials, seed):
    """True if, for any of n_trials random single-path drops with
    |sin(angle)| > 0.5, the angular peak bin at the lowest subcarrier differs
    from the peak bin at the highest subcarrier."""
    rng = rng_from(seed)
    sin_hi = np.sin(max(abs(cfg.angle_range[0]), abs(cfg.angle_range[1])))
    if sin_hi <= 0.5:
        raise ValueError("angle range too narrow to place |sin(angle)| > 0.5 paths")
    single = SystemConfig(
        num_antennas=cfg.num_antennas, num_subcarriers=cfg.num_subcarriers,
        carrier_freq_hz=cfg.carrier_freq_hz, bandwidth_hz=cfg.bandwidth_hz,
        num_paths=1, distance_range=cfg.distance_range, angle_range=cfg.angle_range,
        master_seed=cfg.master_seed,
    )
    for _ in range(n_trials):
        s = rng.uniform(0.5, sin_hi) * rng.choice([-1.0, 1.0])
        theta = float(np.arcsin(s))
        r = float(rng.uniform(*cfg.distance_range))
        paths = PathSet(gains=np.array([1.0 + 0j]), angles=np.array([theta]),
                        distances=np.array([r]))
        h_first = channel_vector(single, paths, 0)
        h_last = channel_vector(single, paths, single.num_subcarriers - 1)
        if angular_peak_bin(h_first) != angular_peak_bin(h_last):
            return True
    return False
