"""Reconstruction metrics, sweep harnesses, and complexity accounting.

NMSE is computed in the complex angular-delay domain where the network's
tensors live; the unitary transform makes it equal to the spatial-frequency
value. Cosine similarity is computed on spatial-frequency subcarrier rows
because that is where beamforming gain lives, so reconstructions are
inverse-transformed first.
"""

import statistics
import sys
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import torch

from .blocks import FixedRateCodec
from .channel import generate_channel, sample_seed_for
from .metrics import (
    NMSE_FLOOR_DB,
    cosine_similarity,
    nmse_db,
    nmse_ratios,
    rho_per_sample,
)
from .params import ParameterStore
from .rate_adapter import AdaptiveCodec
from .training import prepare_dataset, split_dataset, train_adaptive, train_fixed_rate
from .transform import angular_delay_inverse, compression_ratio, denormalize

__all__ = [
    "MetricReport", "SweepPoint", "SweepResult", "nmse_db", "cosine_similarity",
    "evaluate_model", "cr_sweep", "bandwidth_sweep", "count_parameters",
    "analytic_parameter_count", "measure_inference", "write_sweep",
    "restore_adaptive", "restore_fixed",
]

SWEEP_COLUMNS = ("model", "axis_name", "axis_value", "c_t", "beta",
                 "nmse_db", "rho", "n_samples")


@dataclass(frozen=True)
class MetricReport:
    nmse_db: float
    rho: float
    per_sample_nmse_db: np.ndarray = field(repr=False)
    per_sample_rho: np.ndarray = field(repr=False)
    n_samples: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho {self.rho} outside [0, 1]")
        if not np.isfinite(self.nmse_db):
            raise ValueError("nmse_db must be finite (floored, never -inf)")


@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    c_t: int
    beta: Fraction
    nmse_db: float
    rho: float
    n_samples: int


@dataclass(frozen=True)
class SweepResult:
    model: str
    axis_name: str
    points: tuple

    def __post_init__(self):
        values = [p.axis_value for p in self.points]
        diffs = np.diff(values)
        if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("axis values must be strictly monotone")


def restore_adaptive(netcfg, camcfg, store):
    model = AdaptiveCodec(netcfg, camcfg)
    store.load_into_module(model)
    return model


def restore_fixed(netcfg, c_t, store):
    model = FixedRateCodec(netcfg, c_t)
    store.load_into_module(model)
    return model


def _reconstruct(model, prepared, indices, c_t, batch_size):
    """Run the full decode pipeline, returning (n, M, N) complex angular
    reconstructions. Objects exposing `reconstruct(x, c_t, metas, truth)`
    replace the decode path wholesale; that hook exists so the metric
    harness can be self-tested against known-perfect and known-zero
    reconstructions."""
    out = []
    with torch.no_grad():
        for start in range(0, len(indices), batch_size):
            idx = indices[start : start + batch_size]
            x = prepared.tensors[idx]
            metas = [prepared.metas[i] for i in idx]
            truth = prepared.angular[idx]
            if hasattr(model, "reconstruct"):
                recon = np.asarray(model.reconstruct(x, c_t, metas, truth))
                out.extend(recon[i] for i in range(recon.shape[0]))
                continue
            if isinstance(model, AdaptiveCodec):
                recon, _ = model(x, c_t, metas=metas, through_wire=True)
                # past the wire only float32 bounds exist
                metas = [m.float32_bounds() for m in metas]
            else:
                recon = model(x)
            arr = recon.cpu().numpy().astype(np.float64)
            for i in range(arr.shape[0]):
                out.append(denormalize(arr[i].transpose(1, 2, 0), meta=metas[i]).matrix)
    return np.stack(out)


def _report(truth_angular, recon_angular):
    ratios = nmse_ratios(truth_angular, recon_angular)
    with np.errstate(divide="ignore"):
        per_nmse = np.maximum(10.0 * np.log10(ratios), NMSE_FLOOR_DB)
    spatial_truth = angular_delay_inverse(truth_angular)
    spatial_recon = angular_delay_inverse(recon_angular)
    per_rho = rho_per_sample(spatial_truth, spatial_recon)
    return MetricReport(
        nmse_db=nmse_db(truth_angular, recon_angular),
        rho=float(np.mean(per_rho)),
        per_sample_nmse_db=per_nmse,
        per_sample_rho=per_rho,
        n_samples=truth_angular.shape[0],
    )


def evaluate_model(model, prepared, indices, c_t_list, batch_size=32):
    """MetricReport per target rate over one sample index set."""
    indices = np.asarray(indices)
    reports = {}
    for c_t in c_t_list:
        recon = _reconstruct(model, prepared, indices, c_t, batch_size)
        reports[c_t] = _report(prepared.angular[indices], recon)
    return reports


def cr_sweep(adaptive_model, fixed_models, prepared, indices, c_t_list,
             sys_cfg, batch_size=32):
    """One SweepResult for the adaptive model across all rates, one for the
    per-rate fixed family. fixed_models maps c_t -> model."""
    rates = sorted(c_t_list, reverse=True)  # axis strictly decreasing in beta
    for c_t in rates:
        if c_t not in fixed_models:
            raise ValueError(f"no fixed-rate model for c_t={c_t}")

    adaptive_reports = evaluate_model(adaptive_model, prepared, indices,
                                      rates, batch_size)
    results = []
    for name, report_for in (
        ("adaptive", lambda c_t: adaptive_reports[c_t]),
        ("fixed", lambda c_t: evaluate_model(fixed_models[c_t], prepared,
                                             indices, [c_t], batch_size)[c_t]),
    ):
        points = []
        for c_t in rates:
            beta = compression_ratio(sys_cfg, c_t)
            rep = report_for(c_t)
            points.append(SweepPoint(
                axis_value=float(beta), c_t=c_t, beta=beta,
                nmse_db=rep.nmse_db, rho=rep.rho, n_samples=rep.n_samples,
            ))
        results.append(SweepResult(model=name, axis_name="beta",
                                   points=tuple(points)))
    return results


def _generate_prepared(sys_cfg, count):
    samples = np.stack([
        generate_channel(sys_cfg, sample_seed_for(sys_cfg, i)).matrix
        for i in range(count)
    ])
    return prepare_dataset(samples)


def bandwidth_sweep(sys_cfg, netcfg, traincfg, bandwidths, c_t,
                    camcfg=None, batch_size=32):
    """Generate, train, and evaluate once per bandwidth at a single rate.

    With camcfg given the proposed rate-adaptive model is trained per
    bandwidth (and evaluated at c_t); otherwise a fixed-rate model at c_t.
    Path geometry is seed-paired across bandwidths, so the axis isolates
    the frequency effect."""
    count = traincfg.train_size + traincfg.val_size + traincfg.test_size
    points = []
    for b_hz in sorted(bandwidths):
        cfg_b = replace(sys_cfg, bandwidth_hz=float(b_hz))
        prepared = _generate_prepared(cfg_b, count)
        if camcfg is not None:
            result = train_adaptive(prepared, netcfg, camcfg, traincfg)
            model = restore_adaptive(netcfg, camcfg, result.store)
        else:
            result = train_fixed_rate(prepared, netcfg, traincfg, c_t)
            model = restore_fixed(netcfg, c_t, result.store)
        _, _, test_idx = split_dataset(count, traincfg)
        rep = evaluate_model(model, prepared, test_idx, [c_t], batch_size)[c_t]
        points.append(SweepPoint(
            axis_value=float(b_hz), c_t=c_t,
            beta=compression_ratio(cfg_b, c_t),
            nmse_db=rep.nmse_db, rho=rep.rho, n_samples=rep.n_samples,
        ))
    name = "adaptive" if camcfg is not None else f"fixed-{c_t}"
    return SweepResult(model=name, axis_name="bandwidth_hz",
                       points=tuple(points))


def write_sweep(results, path):
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SWEEP_COLUMNS)
        for result in results:
            for p in result.points:
                writer.writerow([
                    result.model, result.axis_name, f"{p.axis_value:.10g}",
                    p.c_t, str(p.beta), f"{p.nmse_db:.10g}", f"{p.rho:.10g}",
                    p.n_samples,
                ])
    return path


# --- complexity accounting ------------------------------------------------

def count_parameters(store):
    if isinstance(store, ParameterStore):
        return store.scalar_count()
    return sum(p.numel() for p in store.parameters())


def conv_param_count(kernel, c_in, c_out):
    return kernel * kernel * c_in * c_out + c_out


def light_res_block_param_count(channels, expansion):
    c, t = channels, expansion
    return 2 * t * c * c + 11 * t * c + 11 * c


def encoder_param_count(netcfg):
    c1, c2, c3, c4 = netcfg.stage_channels
    t = netcfg.block_expansion
    total = conv_param_count(3, 2, c1) + light_res_block_param_count(c1, t)
    for c_in, c_out in ((c1, c2), (c2, c3), (c3, c4)):
        total += conv_param_count(3, c_in, c_out)
        total += light_res_block_param_count(c_out, t)
    return total


def decoder_param_count(netcfg, in_channels):
    c1, c2, c3, c4 = netcfg.stage_channels
    t = netcfg.block_expansion
    total = conv_param_count(1, in_channels, c4)
    for c_in, c_out in ((c4, c3), (c3, c2), (c2, c1)):
        # transposed conv carries the same weight/bias count as the forward one
        total += conv_param_count(3, c_in, c_out)
        total += light_res_block_param_count(c_out, t)
    return total + conv_param_count(3, c1, 2)


def fixed_head_param_count(netcfg, c_t):
    return conv_param_count(3, netcfg.stage_channels[-1], c_t)


def rate_adapter_param_count(netcfg, camcfg):
    c4 = netcfg.stage_channels[-1]
    cb, k, h = camcfg.cb, camcfg.latent_dim, camcfg.adapt_hidden
    total = conv_param_count(3, c4, cb)
    total += conv_param_count(1, cb, k) + 2 * conv_param_count(1, k, k)
    total += conv_param_count(1, k, cb)
    mlp = (h + h) + (h * h + h) + (h * k + k)
    return total + 3 * mlp


def analytic_parameter_count(netcfg, camcfg=None, c_t=None):
    """Closed-form scalar count for a whole codec; must equal the census of
    the instantiated module exactly."""
    if (camcfg is None) == (c_t is None):
        raise ValueError("pass exactly one of camcfg (adaptive) or c_t (fixed)")
    if camcfg is not None:
        return (encoder_param_count(netcfg)
                + rate_adapter_param_count(netcfg, camcfg)
                + decoder_param_count(netcfg, camcfg.cb))
    return (encoder_param_count(netcfg)
            + fixed_head_param_count(netcfg, c_t)
            + decoder_param_count(netcfg, c_t))


# --- latency --------------------------------------------------------------

@dataclass(frozen=True)
class InferenceReport:
    median_ms: float
    repetitions: int
    hardware: str


def hardware_descriptor():
    return f"{sys.platform}-cpu-threads{torch.get_num_threads()}"


def measure_inference(model, sample, repetitions, c_t=None, timer=None):
    """Median wall-clock milliseconds of a full encode+decode pass. One
    warm-up pass runs first and is not counted."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    clock = timer if timer is not None else time.perf_counter

    def run():
        with torch.no_grad():
            if isinstance(model, AdaptiveCodec):
                model(sample, c_t, through_wire=True)
            else:
                model(sample)

    run()  # warm-up, excluded
    durations = []
    for _ in range(repetitions):
        t0 = clock()
        run()
        durations.append((clock() - t0) * 1e3)
    return InferenceReport(
        median_ms=float(statistics.median(durations)),
        repetitions=repetitions,
        hardware=hardware_descriptor(),
    )
