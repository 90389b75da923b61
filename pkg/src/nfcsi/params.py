"""Parameter storage, deterministic initialization, and checkpoint files.

A ParameterStore is an ordered name -> float32 array map mirroring a model's
named parameters. The checkpoint format is self-describing and little-endian
everywhere so files move across platforms byte-for-byte.
"""

import struct
import zlib

import numpy as np
import torch

from .seeds import rng_from

CHECKPOINT_MAGIC = b"NFCK"
CHECKPOINT_VERSION = 1


class ParameterStore:
    """Ordered mapping of parameter name to float32 ndarray."""

    def __init__(self):
        self._arrays = {}

    def add(self, name, array):
        if name in self._arrays:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(array, dtype=np.float32)
        self._arrays[name] = arr

    def names(self):
        return list(self._arrays.keys())

    def items(self):
        return self._arrays.items()

    def __getitem__(self, name):
        return self._arrays[name]

    def __contains__(self, name):
        return name in self._arrays

    def __len__(self):
        return len(self._arrays)

    @staticmethod
    def role(name):
        return "bias" if name.rsplit(".", 1)[-1] == "bias" else "weight"

    def scalar_count(self):
        return sum(a.size for a in self._arrays.values())

    @classmethod
    def from_module(cls, module):
        store = cls()
        for name, p in module.named_parameters():
            store.add(name, p.detach().cpu().numpy())
        return store

    def load_into_module(self, module):
        """Copy arrays into a model, verifying the schemas line up.

        Raises on the first mismatch, naming the offending array, so a
        checkpoint trained under one config cannot silently load under another.
        """
        module_params = dict(module.named_parameters())
        for name, p in module_params.items():
            if name not in self._arrays:
                raise ValueError(f"checkpoint missing parameter {name!r}")
            arr = self._arrays[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise ValueError(
                    f"shape mismatch for {name!r}: checkpoint has {tuple(arr.shape)}, "
                    f"model expects {tuple(p.shape)}"
                )
        for name in self._arrays:
            if name not in module_params:
                raise ValueError(f"checkpoint has unexpected parameter {name!r}")
        with torch.no_grad():
            for name, p in module_params.items():
                p.copy_(torch.from_numpy(self._arrays[name]).to(p.dtype))


def init_parameters(module, seed):
    """Deterministic init: weights uniform on +-sqrt(6/fan_in) with
    fan_in = prod(shape[1:]) (input channels times receptive field for
    convolutions of either direction, in_features for linear maps); biases
    zero. The sqrt(6) gain keeps activation variance flat through ReLU
    layers; without it the forward signal of these normalization-free
    networks decays to zero within a few stages and training stalls.
    Draw order follows the module's parameter registration order."""
    rng = rng_from(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if ParameterStore.role(name) == "bias":
                p.zero_()
                continue
            if p.dim() < 2:
                raise ValueError(f"weight {name!r} has rank {p.dim()}, expected >= 2")
            fan_in = int(np.prod(p.shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            values = rng.uniform(-bound, bound, size=tuple(p.shape))
            p.copy_(torch.from_numpy(values).to(p.dtype))
    return ParameterStore.from_module(module)


def save_checkpoint(store_or_module, path):
    """Write the checkpoint: magic, u32 version, u32 entry count, then per
    entry u16 name length + UTF-8 name, u8 rank, u32 dims, f32 data; a CRC-32
    of everything preceding closes the file."""
    store = store_or_module
    if not isinstance(store, ParameterStore):
        store = ParameterStore.from_module(store_or_module)
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(store))]
    for name, arr in store.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"parameter name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise ValueError(f"parameter rank too large: {name!r}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.astype("<f4").tobytes())
    body = b"".join(chunks)
    with open(path, "wb") as f:
        f.write(body)
        f.write(struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))
    return path


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 12:
        raise ValueError(f"checkpoint file truncated: {path}")
    body, crc_bytes = blob[:-4], blob[-4:]
    (expected_crc,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != expected_crc:
        raise ValueError(f"checkpoint CRC mismatch: {path}")
    if body[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic in {path}")
    version, count = struct.unpack_from("<II", body, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    store = ParameterStore()
    offset = 12
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, offset)
        offset += 2
        name = body[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", body, offset)
        offset += 1
        dims = struct.unpack_from(f"<{rank}I", body, offset)
        offset += 4 * rank
        n_values = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(body, dtype="<f4", count=n_values, offset=offset)
        offset += 4 * n_values
        store.add(name, arr.reshape(dims).copy())  # frombuffer views are read-only
    if offset != len(body):
        raise ValueError(f"trailing bytes in checkpoint {path}")
    return store
