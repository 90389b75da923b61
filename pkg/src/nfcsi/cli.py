"""Command-line surface: flat config files, subcommands, on-disk artifacts.

Every run is driven by one config file; the resolved configuration is echoed
to stdout so logs double as provenance records. All artifact formats are
little-endian and platform-independent.
"""

import argparse
import os
import struct
import sys
from dataclasses import dataclass

import numpy as np
import torch

from .blocks import NetworkConfig
from .channel import (
    SystemConfig,
    array_response,
    far_field_phase_error,
    generate_dataset,
    read_dataset,
)
from .evaluation import (
    SweepPoint,
    SweepResult,
    analytic_parameter_count,
    bandwidth_sweep,
    cr_sweep,
    evaluate_model,
    rate_adapter_param_count,
    restore_adaptive,
    restore_fixed,
    write_sweep,
)
from .metrics import NMSE_FLOOR_DB, cosine_similarity, nmse_db
from .params import load_checkpoint, save_checkpoint
from .rate_adapter import (
    CamConfig,
    pack_message,
    parse_message,
    select_channels,
    serialize_message,
    unpack_message,
)
from .seeds import rng_from
from .training import (
    TrainConfig,
    prepare_dataset,
    split_dataset,
    train_adaptive,
    train_fixed_rate,
    write_history,
)
from .transform import (
    NormalizationMeta,
    angular_delay_forward,
    angular_delay_inverse,
    compression_ratio,
    denormalize,
)


class ConfigError(ValueError):
    pass


def _parse_int(text):
    return int(text, 10)


def _parse_float(text):
    return float(text)


def _parse_str(text):
    return text


def _parse_int_tuple(text):
    parts = [p.strip() for p in text.split(",")]
    if not parts or any(not p for p in parts):
        raise ValueError("empty element")
    return tuple(int(p, 10) for p in parts)


_PARSERS = {
    "int": _parse_int,
    "float": _parse_float,
    "str": _parse_str,
    "int_tuple": _parse_int_tuple,
}

# key -> (type name, default); order is the echo order
_SCHEMA = (
    ("num_antennas", "int", 32),
    ("num_subcarriers", "int", 32),
    ("carrier_freq_hz", "float", 100e9),
    ("bandwidth_hz", "float", 10e9),
    ("num_paths", "int", 3),
    ("distance_min_m", "float", 0.5),
    ("distance_max_m", "float", 3.0),
    ("angle_min_rad", "float", -np.pi / 3),
    ("angle_max_rad", "float", np.pi / 3),
    ("master_seed", "int", 2024),
    ("stage_channels", "int_tuple", (8, 8, 16, 32)),
    ("block_expansion", "int", 4),
    ("bottleneck_channels", "int", 32),
    ("latent_dim", "int", 64),
    ("adapt_hidden", "int", 16),
    ("cr_training_set", "int_tuple", (32, 16, 8, 4, 2)),
    ("learning_rate", "float", 3e-4),
    ("epochs", "int", 50),
    ("batch_size", "int", 32),
    ("train_seed", "int", 2024),
    ("train_size", "int", 1600),
    ("val_size", "int", 200),
    ("test_size", "int", 200),
    ("data_path", "str", "dataset.nfc"),
    ("output_dir", "str", "."),
)


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)

    def system_config(self):
        v = self.values
        return SystemConfig(
            num_antennas=v["num_antennas"],
            num_subcarriers=v["num_subcarriers"],
            carrier_freq_hz=v["carrier_freq_hz"],
            bandwidth_hz=v["bandwidth_hz"],
            num_paths=v["num_paths"],
            distance_range=(v["distance_min_m"], v["distance_max_m"]),
            angle_range=(v["angle_min_rad"], v["angle_max_rad"]),
            master_seed=v["master_seed"],
        )

    def network_config(self):
        v = self.values
        return NetworkConfig(
            stage_channels=v["stage_channels"],
            cb=v["bottleneck_channels"],
            block_expansion=v["block_expansion"],
        )

    def cam_config(self):
        v = self.values
        return CamConfig(
            cb=v["bottleneck_channels"],
            latent_dim=v["latent_dim"],
            adapt_hidden=v["adapt_hidden"],
            supported_ct=tuple(sorted(v["cr_training_set"], reverse=True)),
        )

    def train_config(self):
        v = self.values
        return TrainConfig(
            learning_rate=v["learning_rate"],
            epochs=v["epochs"],
            batch_size=v["batch_size"],
            cr_training_set=v["cr_training_set"],
            seed=v["train_seed"],
            train_size=v["train_size"],
            val_size=v["val_size"],
            test_size=v["test_size"],
        )

    def sample_count(self):
        v = self.values
        return v["train_size"] + v["val_size"] + v["test_size"]


def _format_value(type_name, value):
    if type_name == "int_tuple":
        return ",".join(str(v) for v in value)
    if type_name == "float":
        return repr(value)
    return str(value)


def echo_config(cfg, stream=None):
    out = stream if stream is not None else sys.stdout
    print("# resolved configuration", file=out)
    for key, type_name, _ in _SCHEMA:
        print(f"{key} = {_format_value(type_name, cfg.values[key])}", file=out)


def parse_config(path, echo=True):
    """Flat `key = value` file with `#` comments; absent keys take the
    desk-scale defaults. Duplicate, unknown, and ill-typed keys are errors."""
    schema = {key: (type_name, default) for key, type_name, default in _SCHEMA}
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in schema:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            type_name = schema[key][0]
            try:
                values[key] = _PARSERS[type_name](value)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: key {key!r} expects {type_name}, "
                    f"got {value!r}"
                )
    for key, (_, default) in schema.items():
        values.setdefault(key, default)
    cfg = RunConfig(values=values)
    try:
        cfg.system_config()
        cfg.network_config()
        cfg.cam_config()
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid configuration: {exc}")
    if echo:
        echo_config(cfg)
    return cfg


# --- artifact paths ---------------------------------------------------------

def _ensure_output_dir(cfg):
    # called before any long work so an unusable output_dir fails fast
    os.makedirs(cfg.output_dir, exist_ok=True)


def _checkpoint_path(cfg, model):
    return os.path.join(cfg.output_dir, f"{model}.nfck")


def _history_path(cfg, model):
    return os.path.join(cfg.output_dir, f"history-{model}.csv")


def _load_prepared(cfg):
    """Read the dataset, verify it matches the config, and bake it."""
    ds = read_dataset(cfg.data_path)
    sys_cfg = cfg.system_config()
    checks = (
        ("num_antennas", ds.num_antennas, sys_cfg.num_antennas),
        ("num_subcarriers", ds.num_subcarriers, sys_cfg.num_subcarriers),
        ("carrier_freq_hz", ds.carrier_freq_hz, sys_cfg.carrier_freq_hz),
        ("bandwidth_hz", ds.bandwidth_hz, sys_cfg.bandwidth_hz),
        ("master_seed", ds.master_seed, sys_cfg.master_seed),
    )
    for name, got, want in checks:
        if got != want:
            raise ValueError(
                f"dataset {cfg.data_path} has {name}={got}, config says {want}")
    needed = cfg.sample_count()
    if ds.count < needed:
        raise ValueError(f"dataset has {ds.count} samples, config needs {needed}")
    return prepare_dataset(ds.samples[:needed])


# --- subcommands ------------------------------------------------------------

def _cmd_gen_data(args):
    cfg = parse_config(args.config)
    count = cfg.sample_count()
    path = generate_dataset(cfg.system_config(), count, cfg.data_path)
    print(f"wrote {count} samples to {path}")
    return 0


def _cmd_train(args):
    cfg = parse_config(args.config)
    prepared = _load_prepared(cfg)
    netcfg = cfg.network_config()
    traincfg = cfg.train_config()
    if args.adaptive:
        model_name = "adaptive"
        result = train_adaptive(prepared, netcfg, cfg.cam_config(), traincfg)
    else:
        c_t = args.fixed_rate
        model_name = f"fixed-{c_t}"
        result = train_fixed_rate(prepared, netcfg, traincfg, c_t)
    ckpt = save_checkpoint(result.store, _checkpoint_path(cfg, model_name))
    history = write_history(result.history, _history_path(cfg, model_name))
    print(f"model {model_name}: best epoch {result.best_epoch}, "
          f"mean val nmse {result.best_val_nmse_db:.4f} dB")
    print(f"checkpoint: {ckpt}")
    print(f"history: {history}")
    return 0


def _restore(cfg, model_name):
    store = load_checkpoint(_checkpoint_path(cfg, model_name))
    netcfg = cfg.network_config()
    if model_name == "adaptive":
        return restore_adaptive(netcfg, cfg.cam_config(), store)
    c_t = int(model_name.split("-", 1)[1], 10)
    return restore_fixed(netcfg, c_t, store)


def _eval_points(cfg, model, rates, indices, prepared):
    sys_cfg = cfg.system_config()
    reports = evaluate_model(model, prepared, indices, rates,
                             cfg.batch_size)
    points = []
    for c_t in sorted(rates, reverse=True):
        rep = reports[c_t]
        points.append(SweepPoint(
            axis_value=float(compression_ratio(sys_cfg, c_t)), c_t=c_t,
            beta=compression_ratio(sys_cfg, c_t), nmse_db=rep.nmse_db,
            rho=rep.rho, n_samples=rep.n_samples,
        ))
    return points


def _cmd_eval(args):
    cfg = parse_config(args.config)
    prepared = _load_prepared(cfg)
    _, _, test_idx = split_dataset(prepared.tensors.shape[0], cfg.train_config())
    if args.fixed_rate is not None:
        model_name = f"fixed-{args.fixed_rate}"
        rates = [args.fixed_rate]
    else:
        model_name = "adaptive"
        rates = list(cfg.cr_training_set)
    if args.rates:
        rates = list(_parse_int_tuple(args.rates))
    model = _restore(cfg, model_name)
    points = _eval_points(cfg, model, rates, test_idx, prepared)
    result = SweepResult(model=model_name, axis_name="beta",
                         points=tuple(points))
    out = os.path.join(cfg.output_dir, f"eval-{model_name}.csv")
    write_sweep([result], out)
    for p in points:
        print(f"{model_name} c_t={p.c_t} beta={p.beta} "
              f"nmse={p.nmse_db:.4f} dB rho={p.rho:.6f}")
    print(f"report: {out}")
    return 0


def _cmd_sweep_cr(args):
    cfg = parse_config(args.config)
    prepared = _load_prepared(cfg)
    _, _, test_idx = split_dataset(prepared.tensors.shape[0], cfg.train_config())
    rates = sorted(cfg.cr_training_set, reverse=True)
    adaptive = _restore(cfg, "adaptive")
    fixed = {c_t: _restore(cfg, f"fixed-{c_t}") for c_t in rates}
    results = cr_sweep(adaptive, fixed, prepared, test_idx, rates,
                       cfg.system_config(), cfg.batch_size)
    out = os.path.join(cfg.output_dir, "sweep-cr.csv")
    write_sweep(results, out)
    for result in results:
        for p in result.points:
            print(f"{result.model} beta={p.beta} nmse={p.nmse_db:.4f} dB "
                  f"rho={p.rho:.6f}")
    print(f"report: {out}")
    return 0


def _cmd_sweep_bw(args):
    cfg = parse_config(args.config)
    bandwidths = [float(b) for b in args.bandwidths.split(",") if b.strip()]
    if not bandwidths:
        raise ValueError("no bandwidths given")
    camcfg = cfg.cam_config() if args.adaptive else None
    result = bandwidth_sweep(
        cfg.system_config(), cfg.network_config(), cfg.train_config(),
        bandwidths, args.c_t, camcfg=camcfg, batch_size=cfg.batch_size,
    )
    out = os.path.join(cfg.output_dir, "sweep-bw.csv")
    write_sweep([result], out)
    for p in result.points:
        print(f"{result.model} bandwidth={p.axis_value:.6g} Hz "
              f"nmse={p.nmse_db:.4f} dB rho={p.rho:.6f}")
    print(f"report: {out}")
    return 0


def _cmd_compress(args):
    cfg = parse_config(args.config)
    ds = read_dataset(cfg.data_path)
    if not 0 <= args.index < ds.count:
        raise ValueError(f"sample index {args.index} outside [0, {ds.count})")
    prepared = prepare_dataset(ds.samples[args.index : args.index + 1])
    model = _restore(cfg, "adaptive")
    with torch.no_grad():
        latent = model.encoder(prepared.tensors)
        z_out, mask = model.adapter(latent, args.c_t)
    msg = pack_message(z_out[0].numpy(), mask[0].numpy().astype(bool),
                       args.c_t, prepared.metas[0])
    blob = serialize_message(msg)
    with open(args.out, "wb") as f:
        f.write(blob)
    print(f"wrote message: {args.out} ({len(blob)} bytes, "
          f"{msg.codeword.size} codeword scalars, {msg.cb} mask bits)")
    return 0


def _cmd_decompress(args):
    cfg = parse_config(args.config)
    with open(args.message, "rb") as f:
        msg = parse_message(f.read())
    model = _restore(cfg, "adaptive")
    z = torch.from_numpy(unpack_message(msg)[None])
    with torch.no_grad():
        recon = model.decoder(z)
    arr = recon[0].numpy().astype(np.float64).transpose(1, 2, 0)
    angular = denormalize(arr, meta=msg.meta).matrix
    spatial = angular_delay_inverse(angular)
    np.save(args.out, spatial)
    print(f"wrote reconstruction: {args.out}")
    if args.index is not None:
        ds = read_dataset(cfg.data_path)
        truth = np.asarray(ds.samples[args.index], dtype=np.complex128)
        val = nmse_db(angular_delay_forward(truth)[None], angular[None])
        print(f"nmse vs sample {args.index}: {val:.17g} dB")
    return 0


def _cmd_info(args):
    cfg = parse_config(args.config)
    sys_cfg = cfg.system_config()
    netcfg = cfg.network_config()
    camcfg = cfg.cam_config()
    rates = sorted(cfg.cr_training_set, reverse=True)
    print(f"carrier wavelength: {sys_cfg.carrier_wavelength:.6g} m")
    print(f"antenna spacing: {sys_cfg.antenna_spacing:.6g} m")
    print(f"array aperture: {sys_cfg.aperture:.6g} m")
    print(f"fraunhofer distance: {sys_cfg.fraunhofer_distance:.6g} m")
    adaptive_total = analytic_parameter_count(netcfg, camcfg=camcfg)
    print(f"adaptive model parameters: {adaptive_total}")
    print(f"rate adapter parameters: {rate_adapter_param_count(netcfg, camcfg)}")
    for c_t in rates:
        fixed_total = analytic_parameter_count(netcfg, c_t=c_t)
        print(f"fixed-rate model parameters (c_t={c_t}): {fixed_total} "
              f"(adaptive delta {adaptive_total - fixed_total})")
    for c_t in rates:
        print(f"c_t={c_t}: beta={compression_ratio(sys_cfg, c_t)}")
    n_cr = len(rates)
    print(f"models needed for {n_cr} rates: adaptive 1, fixed-rate {n_cr}")
    return 0


# --- selftest ---------------------------------------------------------------

def _check_dft_round_trip():
    rng = rng_from(1)
    x = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    back = angular_delay_inverse(angular_delay_forward(x))
    rel = np.linalg.norm(back - x) / np.linalg.norm(x)
    assert rel < 1e-10, f"round-trip relative error {rel}"
    fa = np.linalg.norm(angular_delay_forward(x))
    assert abs(fa - np.linalg.norm(x)) < 1e-12, "norm not preserved"


def _check_steering_norm():
    cfg = SystemConfig()
    rng = rng_from(2)
    for _ in range(100):
        theta = rng.uniform(-np.pi / 3, np.pi / 3)
        r = rng.uniform(0.5, 3.0)
        a = array_response(cfg, theta, r, cfg.carrier_freq_hz)
        assert abs(np.linalg.norm(a) - 1.0) < 1e-12, "steering norm off"


def _check_far_field_limit():
    cfg = SystemConfig()
    r = 1e4 * cfg.fraunhofer_distance
    err = far_field_phase_error(cfg, 0.3, r, cfg.carrier_freq_hz)
    assert err < 1e-3, f"far-field phase error {err} at r={r}"


def _check_gradients():
    from .blocks import LightResBlock
    from .params import init_parameters

    torch.manual_seed(0)
    block = LightResBlock(2, expansion=1).double()
    init_parameters(block, 3)
    with torch.no_grad():
        for p in block.parameters():
            p.add_(torch.rand_like(p) * 0.1 + 0.05)
    x = torch.rand(1, 2, 4, 4, dtype=torch.float64)
    probe = torch.randn(1, 2, 4, 4, dtype=torch.float64)

    def loss():
        return (block(x) * probe).sum()

    loss().backward()
    h = 1e-6
    for name, p in block.named_parameters():
        flat = p.detach().reshape(-1)
        grad = p.grad.reshape(-1)
        for k in range(0, flat.numel(), max(1, flat.numel() // 4)):
            with torch.no_grad():
                orig = flat[k].item()
                flat[k] = orig + h
                up = loss().item()
                flat[k] = orig - h
                down = loss().item()
                flat[k] = orig
            fd = (up - down) / (2 * h)
            denom = abs(fd) + abs(grad[k].item())
            rel = abs(fd - grad[k].item()) / denom if denom else 0.0
            assert rel < 1e-4, f"gradient mismatch at {name}[{k}]: {rel}"


def _check_mask_popcount():
    rng = rng_from(4)
    alpha = torch.from_numpy(rng.random((3, 32, 4, 4), dtype=np.float64))
    for c_t in (32, 16, 8, 4, 2):
        mask = select_channels(alpha, c_t)
        counts = mask.sum(dim=1)
        assert torch.all(counts == c_t), f"popcount off for c_t={c_t}"


def _check_message_round_trip():
    rng = rng_from(5)
    mask = np.zeros(32, dtype=bool)
    mask[rng.choice(32, size=8, replace=False)] = True
    codeword = rng.standard_normal((8, 4, 4)).astype(np.float32)
    z = np.zeros((32, 4, 4), dtype=np.float32)
    z[np.flatnonzero(mask)] = codeword
    meta = NormalizationMeta(-1.0, 2.0, -0.5, 0.5)
    msg = pack_message(z, mask, 8, meta)
    blob = serialize_message(msg)
    again = serialize_message(parse_message(blob))
    assert blob == again, "message round trip not byte-identical"


def _check_metric_oracles():
    h = np.array([[1.0 + 0j]])
    assert abs(nmse_db(h, np.array([[0.9 + 0j]])) - (-20.0)) < 1e-9
    assert nmse_db(h, h) == NMSE_FLOOR_DB
    rng = rng_from(6)
    x = rng.standard_normal((4, 8)) + 1j * rng.standard_normal((4, 8))
    assert abs(cosine_similarity(x, (1.5 - 0.5j) * x) - 1.0) < 1e-12


_SELFTEST_CHECKS = (
    ("dft_round_trip", _check_dft_round_trip),
    ("steering_norm", _check_steering_norm),
    ("far_field_limit", _check_far_field_limit),
    ("gradient_check", _check_gradients),
    ("mask_popcount", _check_mask_popcount),
    ("message_round_trip", _check_message_round_trip),
    ("metric_oracles", _check_metric_oracles),
)


def _cmd_selftest(args):
    failures = 0
    for name, check in _SELFTEST_CHECKS:
        try:
            check()
        except AssertionError as exc:
            print(f"selftest: {name} FAILED: {exc}")
            failures += 1
            continue
        print(f"selftest: {name} ok")
    if failures:
        raise RuntimeError(f"{failures} selftest check(s) failed")
    return 0


# --- dispatch ---------------------------------------------------------------

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="nfcsi", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a channel dataset")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--config", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--adaptive", action="store_true")
    group.add_argument("--fixed-rate", type=int, metavar="C_T")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--fixed-rate", type=int, metavar="C_T")
    p.add_argument("--rates", help="comma-separated c_t values")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-cr", help="rate sweep over trained models")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_sweep_cr)

    p = sub.add_parser("sweep-bw", help="bandwidth sweep (retrains per point)")
    p.add_argument("--config", required=True)
    p.add_argument("--bandwidths", required=True,
                   help="comma-separated bandwidths in Hz")
    p.add_argument("--c-t", type=int, default=8, dest="c_t")
    p.add_argument("--adaptive", action="store_true")
    p.set_defaults(func=_cmd_sweep_bw)

    p = sub.add_parser("compress", help="compress one sample to a message file")
    p.add_argument("--config", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--c-t", type=int, required=True, dest="c_t")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("decompress", help="reconstruct a channel from a message")
    p.add_argument("--config", required=True)
    p.add_argument("--message", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--index", type=int,
                   help="dataset sample to report reconstruction NMSE against")
    p.set_defaults(func=_cmd_decompress)

    p = sub.add_parser("info", help="derived quantities and parameter counts")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_info)

    p = sub.add_parser("selftest", help="run the built-in invariant checks")
    p.set_defaults(func=_cmd_selftest)

    return parser


def cli_dispatch(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help paths
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return int(args.func(args) or 0)
    except (ValueError, OSError, RuntimeError, struct.error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
