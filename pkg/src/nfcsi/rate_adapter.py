"""Rate adaptation: conditioned feature importance, channel selection, masking,
and the feedback-message wire format.

One shared model serves every supported rate. The target channel count C_t
enters through three small MLPs whose sigmoid outputs modulate the importance
path; the C_t highest-scoring feature channels survive, the rest are zeroed,
and only the survivors travel in the message together with a C_b-bit mask and
the four normalization scalars.
"""

import struct
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .blocks import Decoder, Encoder
from .transform import NormalizationMeta

MESSAGE_MAGIC = b"NFCF"
MESSAGE_VERSION = 1


@dataclass(frozen=True)
class CamConfig:
    """Rate-adapter hyperparameters: internal depth C_b, importance-path
    latent width K, adaptation-MLP hidden width, and the supported C_t set."""

    cb: int = 32
    latent_dim: int = 64
    adapt_hidden: int = 16
    supported_ct: tuple = (32, 16, 8, 4, 2)

    def __post_init__(self):
        if self.cb < 1 or self.latent_dim < 1 or self.adapt_hidden < 1:
            raise ValueError("cb, latent_dim, adapt_hidden must be >= 1")
        if not self.supported_ct:
            raise ValueError("supported_ct must be non-empty")
        for c_t in self.supported_ct:
            if not 1 <= c_t <= self.cb:
                raise ValueError(f"supported c_t {c_t} outside [1, {self.cb}]")


class AdaptationModule(nn.Module):
    """Maps the normalized rate scalar C_t/C_b to a modulation vector in
    (0,1)^out_dim: Linear -> ReLU -> Linear -> ReLU -> Linear -> Sigmoid."""

    def __init__(self, out_dim, hidden=16):
        super().__init__()
        self.fc1 = nn.Linear(1, hidden)
        self.fc2 = nn.Linear(hidden, hidden)
        self.fc3 = nn.Linear(hidden, out_dim)

    def forward(self, c_t_norm):
        y = F.relu(self.fc1(c_t_norm))
        y = F.relu(self.fc2(y))
        return torch.sigmoid(self.fc3(y))


def select_channels(alpha, c_t):
    """Mask of the C_t channels with the highest spatial-mean importance.

    alpha: (batch, C_b, h, w). Ties break toward the lower channel index
    (stable descending sort), so selection is reproducible across platforms.
    Returns a float {0,1} tensor of shape (batch, C_b), detached.
    """
    cb = alpha.shape[1]
    if not 1 <= c_t <= cb:
        raise ValueError(f"c_t must be in [1, {cb}], got {c_t}")
    scores = alpha.detach().mean(dim=(2, 3))
    order = torch.argsort(scores, dim=1, descending=True, stable=True)
    mask = torch.zeros_like(scores)
    mask.scatter_(1, order[:, :c_t], 1.0)
    return mask


def modulate(z_conv, alpha):
    if z_conv.shape != alpha.shape:
        raise ValueError(f"shape mismatch {tuple(z_conv.shape)} vs {tuple(alpha.shape)}")
    return z_conv * alpha


def apply_mask(z, mask):
    if z.shape[:2] != mask.shape:
        raise ValueError(f"mask shape {tuple(mask.shape)} does not match {tuple(z.shape[:2])}")
    return z * mask[:, :, None, None]


class RateAdapter(nn.Module):
    """Entry conv to depth C_b, importance path of four shared 1x1 maps with
    three rate-conditioned modulations, then top-C_t selection and masking.

    The mask is a constant during backpropagation (hard selection is not
    differentiable); gradients still shape the importance scores through the
    modulation product on the surviving channels.
    """

    def __init__(self, netcfg, camcfg):
        super().__init__()
        c4 = netcfg.stage_channels[3]
        cb, k, hidden = camcfg.cb, camcfg.latent_dim, camcfg.adapt_hidden
        self.cb = cb
        self.entry = nn.Conv2d(c4, cb, 3, padding=1)
        self.fc1 = nn.Conv2d(cb, k, 1)
        self.fc2 = nn.Conv2d(k, k, 1)
        self.fc3 = nn.Conv2d(k, k, 1)
        self.fc4 = nn.Conv2d(k, cb, 1)
        self.adapt1 = AdaptationModule(k, hidden)
        self.adapt2 = AdaptationModule(k, hidden)
        self.adapt3 = AdaptationModule(k, hidden)

    def importance(self, z_conv, c_t):
        """Spatially-shared importance map alpha in (0,1)^(B, C_b, h, w)."""
        c_norm = torch.full((1, 1), c_t / self.cb, dtype=z_conv.dtype,
                            device=z_conv.device)
        m1 = self.adapt1(c_norm).reshape(1, -1, 1, 1)
        m2 = self.adapt2(c_norm).reshape(1, -1, 1, 1)
        m3 = self.adapt3(c_norm).reshape(1, -1, 1, 1)
        v = self.fc1(z_conv) * m1
        v = self.fc2(v) * m2
        v = self.fc3(v) * m3
        return torch.sigmoid(self.fc4(v))

    def forward(self, latent, c_t):
        z_conv = self.entry(latent)
        alpha = self.importance(z_conv, c_t)
        z_mod = modulate(z_conv, alpha)
        mask = select_channels(alpha, c_t)
        return apply_mask(z_mod, mask), mask


@dataclass(frozen=True)
class FeedbackMessage:
    """Everything the decoder side receives for one sample: the target rate,
    the channel mask, the surviving codeword channels (ascending original
    index), and the normalization extremes."""

    c_t: int
    cb: int
    height: int
    width: int
    mask: np.ndarray  # (cb,) bool
    meta: NormalizationMeta
    codeword: np.ndarray  # (c_t, height, width) float32

    def __post_init__(self):
        if self.mask.shape != (self.cb,):
            raise ValueError("mask length must equal cb")
        if int(self.mask.sum()) != self.c_t:
            raise ValueError(
                f"mask popcount {int(self.mask.sum())} != c_t {self.c_t}")
        if self.codeword.shape != (self.c_t, self.height, self.width):
            raise ValueError(f"codeword shape {self.codeword.shape} inconsistent")
        if not np.all(np.isfinite(self.codeword)):
            raise ValueError("codeword values must be finite")


def pack_message(z_sample, mask_bits, c_t, meta):
    """Extract the selected channels of one masked feature map (C_b, h, w)
    into a message; channels keep ascending original-index order."""
    z = np.asarray(z_sample, dtype=np.float32)
    bits = np.asarray(mask_bits, dtype=bool)
    selected = np.flatnonzero(bits)
    if len(selected) != c_t:
        raise ValueError(f"mask popcount {len(selected)} != c_t {c_t}")
    codeword = np.ascontiguousarray(z[selected])
    return FeedbackMessage(
        c_t=c_t, cb=z.shape[0], height=z.shape[1], width=z.shape[2],
        mask=bits, meta=meta, codeword=codeword,
    )


def unpack_message(msg):
    """Zero-padded feature map (C_b, h, w) with selected channels restored to
    their original indices; ready for the decoder."""
    out = np.zeros((msg.cb, msg.height, msg.width), dtype=np.float32)
    out[np.flatnonzero(msg.mask)] = msg.codeword
    return out


def serialize_message(msg):
    header = struct.pack(
        "<4sIHHHH", MESSAGE_MAGIC, MESSAGE_VERSION,
        msg.c_t, msg.cb, msg.height, msg.width,
    )
    mask_bytes = np.packbits(msg.mask, bitorder="little").tobytes()
    meta = struct.pack("<4f", msg.meta.min_re, msg.meta.max_re,
                       msg.meta.min_im, msg.meta.max_im)
    return header + mask_bytes + meta + msg.codeword.astype("<f4").tobytes()


def parse_message(blob):
    head = struct.Struct("<4sIHHHH")
    if len(blob) < head.size:
        raise ValueError("message too short")
    magic, version, c_t, cb, h, w = head.unpack_from(blob, 0)
    if magic != MESSAGE_MAGIC:
        raise ValueError(f"bad message magic {magic!r}")
    if version != MESSAGE_VERSION:
        raise ValueError(f"unsupported message version {version}")
    offset = head.size
    n_mask_bytes = (cb + 7) // 8
    mask = np.unpackbits(
        np.frombuffer(blob, dtype=np.uint8, count=n_mask_bytes, offset=offset),
        count=cb, bitorder="little",
    ).astype(bool)
    offset += n_mask_bytes
    meta_vals = struct.unpack_from("<4f", blob, offset)
    offset += 16
    expected = c_t * h * w
    codeword = np.frombuffer(blob, dtype="<f4", count=expected, offset=offset)
    offset += 4 * expected
    if offset != len(blob):
        raise ValueError("trailing bytes in message")
    meta = NormalizationMeta(*(float(v) for v in meta_vals))
    return FeedbackMessage(c_t=c_t, cb=cb, height=h, width=w, mask=mask,
                           meta=meta, codeword=codeword.reshape(c_t, h, w))


def message_bit_cost(msg):
    """Rate accounting: codeword scalars, mask bits, meta scalars."""
    return {
        "codeword_scalars": int(msg.codeword.size),
        "mask_bits": int(msg.cb),
        "meta_scalars": 4,
    }


class SerializedBottleneck(torch.autograd.Function):
    """Routes the masked feature map through the real wire format during
    training: each sample is packed to bytes, parsed back, and zero-padded.
    float32 values survive the trip losslessly, so the forward map equals
    masking, and the backward pass is the same masking projection."""

    @staticmethod
    def forward(ctx, z_out, mask, c_t, metas):
        outs = np.empty(z_out.shape, dtype=np.float32)
        z_np = z_out.detach().cpu().numpy()
        mask_np = mask.detach().cpu().numpy().astype(bool)
        for i in range(z_np.shape[0]):
            msg = pack_message(z_np[i], mask_np[i], c_t, metas[i])
            outs[i] = unpack_message(parse_message(serialize_message(msg)))
        ctx.save_for_backward(mask)
        return torch.from_numpy(outs).to(dtype=z_out.dtype, device=z_out.device)

    @staticmethod
    def backward(ctx, grad_out):
        (mask,) = ctx.saved_tensors
        return grad_out * mask[:, :, None, None], None, None, None


_PLACEHOLDER_META = NormalizationMeta(0.0, 1.0, 0.0, 1.0)


class AdaptiveCodec(nn.Module):
    """Shared-parameter autoencoder serving every supported rate: encoder,
    rate adapter, decoder over the zero-padded C_b-channel map."""

    def __init__(self, netcfg, camcfg):
        super().__init__()
        self.camcfg = camcfg
        self.encoder = Encoder(netcfg)
        self.adapter = RateAdapter(netcfg, camcfg)
        self.decoder = Decoder(netcfg, in_channels=camcfg.cb)

    def forward(self, x, c_t, metas=None, through_wire=True):
        latent = self.encoder(x)
        z_out, mask = self.adapter(latent, c_t)
        if through_wire:
            if metas is None:
                metas = [_PLACEHOLDER_META] * x.shape[0]
            z_dec = SerializedBottleneck.apply(z_out, mask, c_t, metas)
        else:
            z_dec = z_out
        return self.decoder(z_dec), mask
