"""Loss, optimizer, and the multi-rate training loop.

The adaptive loop draws one target rate per batch from the training rate set,
runs the full pipeline including the real message serialization, and keeps the
parameters with the best mean validation NMSE across the rate set. Everything
is driven by one seeded generator, so a config fully determines the run.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
import torch

from .blocks import FixedRateCodec
from .metrics import nmse_db
from .params import ParameterStore, init_parameters
from .rate_adapter import AdaptiveCodec
from .seeds import purpose_seed, rng_from
from .transform import angular_delay_forward, denormalize, normalize

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HISTORY_COLUMNS = ("epoch", "split", "c_t", "loss", "nmse_db")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 50
    batch_size: int = 32
    cr_training_set: tuple = (32, 16, 8, 4, 2)
    seed: int = 2024
    train_size: int = 1600
    val_size: int = 200
    test_size: int = 200

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.cr_training_set or any(c < 1 for c in self.cr_training_set):
            raise ValueError("cr_training_set must be non-empty positive integers")
        if min(self.train_size, self.val_size, self.test_size) < 0:
            raise ValueError("split sizes must be non-negative")


class TrainingDiverged(RuntimeError):
    pass


def mse_loss(truth, recon):
    """Mean over the batch of the summed squared error per sample."""
    if truth.shape != recon.shape:
        raise ValueError(f"shape mismatch {tuple(truth.shape)} vs {tuple(recon.shape)}")
    diff = recon - truth
    return (diff * diff).reshape(diff.shape[0], -1).sum(dim=1).mean()


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, named_params):
        pairs = list(named_params)
        self.m = {name: torch.zeros_like(p) for name, p in pairs}
        self.v = {name: torch.zeros_like(p) for name, p in pairs}
        self.step_count = 0


def _fresh_adam(module):
    return AdamState(list(module.named_parameters()))


def optimizer_step(named_params, state, lr):
    """Bias-corrected adaptive-moment update. Raises on non-finite gradients,
    naming the offending parameter."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    with torch.no_grad():
        for name, p in named_params:
            g = p.grad
            if g is None:
                continue
            if not torch.all(torch.isfinite(g)):
                raise ValueError(f"non-finite gradient for parameter {name!r}")
            m = state.m[name]
            v = state.v[name]
            m.mul_(ADAM_BETA1).add_(g, alpha=1.0 - ADAM_BETA1)
            v.mul_(ADAM_BETA2).addcmul_(g, g, value=1.0 - ADAM_BETA2)
            denom = (v / bc2).sqrt_().add_(ADAM_EPS)
            p.addcdiv_(m, denom * bc1, value=-lr)
    return state


def split_dataset(count, cfg):
    """Contiguous index ranges (generation already randomizes content)."""
    total = cfg.train_size + cfg.val_size + cfg.test_size
    if total > count:
        raise ValueError(f"splits need {total} samples, dataset has {count}")
    train = np.arange(0, cfg.train_size)
    val = np.arange(cfg.train_size, cfg.train_size + cfg.val_size)
    test = np.arange(cfg.train_size + cfg.val_size, total)
    return train, val, test


@dataclass
class PreparedData:
    """Dataset baked for training: normalized network tensors, per-sample
    normalization meta, and float64 angular-delay truth for metrics."""

    tensors: torch.Tensor  # (count, 2, N, M) float32
    metas: list
    angular: np.ndarray  # (count, M, N) complex128


def prepare_dataset(samples):
    """samples: (count, M, N) complex array (memmap fine)."""
    count = samples.shape[0]
    tensors = []
    metas = []
    angular = np.empty((count,) + samples.shape[1:], dtype=np.complex128)
    for i in range(count):
        h = angular_delay_forward(np.asarray(samples[i], dtype=np.complex128))
        angular[i] = h
        t = normalize(h)
        tensors.append(torch.from_numpy(
            np.ascontiguousarray(t.tensor.transpose(2, 0, 1), dtype=np.float32)))
        metas.append(t.meta)
    return PreparedData(tensors=torch.stack(tensors), metas=metas, angular=angular)


def draw_rate(rng, cr_set):
    return cr_set[int(rng.integers(len(cr_set)))]


def _recon_to_angular(recon, metas_batch):
    """(B, 2, N, M) network output -> list of complex angular matrices."""
    arr = recon.detach().cpu().numpy().astype(np.float64)
    out = []
    for i in range(arr.shape[0]):
        tensor_nm2 = arr[i].transpose(1, 2, 0)
        out.append(denormalize(tensor_nm2, meta=metas_batch[i]).matrix)
    return out


def _forward(model, x, c_t, metas):
    if isinstance(model, AdaptiveCodec):
        recon, _ = model(x, c_t, metas=metas, through_wire=True)
        return recon
    return model(x)


def _validate(model, prepared, indices, cr_set, batch_size):
    """Per-rate (loss, nmse_db) on a sample index set."""
    results = {}
    wire = isinstance(model, AdaptiveCodec)
    with torch.no_grad():
        for c_t in cr_set:
            losses = []
            recon_angular = []
            for start in range(0, len(indices), batch_size):
                idx = indices[start : start + batch_size]
                x = prepared.tensors[idx]
                metas = [prepared.metas[i] for i in idx]
                recon = _forward(model, x, c_t, metas)
                per_sample = ((recon - x) ** 2).reshape(len(idx), -1).sum(dim=1)
                losses.append(per_sample.cpu().numpy())
                if wire:  # receiver-side view: float32 bounds only
                    metas = [m.float32_bounds() for m in metas]
                recon_angular.extend(_recon_to_angular(recon, metas))
            loss = float(np.mean(np.concatenate(losses)))
            truth = prepared.angular[indices]
            results[c_t] = (loss, nmse_db(truth, np.stack(recon_angular)))
    return results


def _history_val_rows(epoch, stats):
    return [
        {"epoch": epoch, "split": "val", "c_t": c_t,
         "loss": loss, "nmse_db": nmse}
        for c_t, (loss, nmse) in sorted(stats.items(), reverse=True)
    ]


@dataclass
class TrainResult:
    store: ParameterStore
    history: list = field(repr=False)
    best_epoch: int = 0
    best_val_nmse_db: float = float("nan")


def _train_loop(model, prepared, traincfg, cr_set, adaptive):
    """Shared loop body. cr_set carries one element for fixed-rate models."""
    init_parameters(model, purpose_seed(traincfg.seed, "init"))
    if traincfg.epochs == 0:
        return TrainResult(store=ParameterStore.from_module(model), history=[])

    torch.set_num_threads(1)  # keeps runs bitwise reproducible on one platform
    rng = rng_from(purpose_seed(traincfg.seed, "train"))
    train_idx, val_idx, _ = split_dataset(prepared.tensors.shape[0], traincfg)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("training requires non-empty train and val splits")

    history = []
    stats = _validate(model, prepared, val_idx, cr_set, traincfg.batch_size)
    history.extend(_history_val_rows(0, stats))
    best_nmse = float(np.mean([v[1] for v in stats.values()]))
    best_store = ParameterStore.from_module(model)
    best_epoch = 0

    adam = _fresh_adam(model)
    named = list(model.named_parameters())
    for epoch in range(1, traincfg.epochs + 1):
        perm = train_idx[rng.permutation(len(train_idx))]
        per_rate_losses = {c_t: [] for c_t in cr_set}
        for start in range(0, len(perm), traincfg.batch_size):
            idx = perm[start : start + traincfg.batch_size]
            c_t = draw_rate(rng, cr_set) if adaptive else cr_set[0]
            x = prepared.tensors[idx]
            metas = [prepared.metas[i] for i in idx]
            # a blown-up run can surface as a non-finite loss, a non-finite
            # gradient, or a refused non-finite codeword on the wire path;
            # all of them abort the same way
            try:
                recon = _forward(model, x, c_t, metas)
                loss = mse_loss(x, recon)
                if not torch.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss {loss.item()} at epoch {epoch}, "
                        f"batch starting {start}, c_t={c_t}"
                    )
                model.zero_grad(set_to_none=True)
                loss.backward()
                optimizer_step(named, adam, traincfg.learning_rate)
            except ValueError as exc:
                raise TrainingDiverged(
                    f"{exc} at epoch {epoch}, batch starting {start}, c_t={c_t}"
                ) from exc
            per_rate_losses[c_t].append(loss.item())

        for c_t in sorted(cr_set, reverse=True):
            if per_rate_losses[c_t]:
                history.append({
                    "epoch": epoch, "split": "train", "c_t": c_t,
                    "loss": float(np.mean(per_rate_losses[c_t])), "nmse_db": "",
                })
        stats = _validate(model, prepared, val_idx, cr_set, traincfg.batch_size)
        history.extend(_history_val_rows(epoch, stats))
        mean_nmse = float(np.mean([v[1] for v in stats.values()]))
        if mean_nmse < best_nmse:
            best_nmse = mean_nmse
            best_store = ParameterStore.from_module(model)
            best_epoch = epoch

    return TrainResult(store=best_store, history=history,
                       best_epoch=best_epoch, best_val_nmse_db=best_nmse)


def train_adaptive(samples, netcfg, camcfg, traincfg):
    for c_t in traincfg.cr_training_set:
        if not 1 <= c_t <= camcfg.cb:
            raise ValueError(f"training c_t {c_t} outside [1, {camcfg.cb}]")
    prepared = samples if isinstance(samples, PreparedData) else prepare_dataset(samples)
    model = AdaptiveCodec(netcfg, camcfg)
    return _train_loop(model, prepared, traincfg,
                       tuple(traincfg.cr_training_set), adaptive=True)


def train_fixed_rate(samples, netcfg, traincfg, c_t):
    prepared = samples if isinstance(samples, PreparedData) else prepare_dataset(samples)
    model = FixedRateCodec(netcfg, c_t)
    return _train_loop(model, prepared, traincfg, (c_t,), adaptive=False)


def write_history(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            loss = row["loss"]
            nmse = row["nmse_db"]
            writer.writerow([
                row["epoch"], row["split"], row["c_t"],
                f"{loss:.10g}" if loss != "" else "",
                f"{nmse:.10g}" if nmse != "" else "",
            ])
    return path
