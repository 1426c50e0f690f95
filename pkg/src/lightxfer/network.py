"""The lighting transfer network.

Four sub-networks:

* ``E``: a U-Net mapping the source image to a diffuse map D (3 channels,
  sigmoid) and a reflection strength R (1 channel, sigmoid).
* ``Er``: an encoder over ``concat(S', D, R)`` producing the feature pyramid F_r.
* ``Ds``: a decoder on F_r predicting the shading residual S'_r (or, in
  ``DIRECT`` mode, the smooth shading S* itself).
* ``Da``: a decoder on F_r predicting the packed residual alpha.

The default composition is ``I_t = (D + R + alpha) * (S' + S'_r)``; the other
formulations and shading modes exist for ablations.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Formulation(str, enum.Enum):
    DS = "ds"
    DRS = "drs"
    DRS_PLUS_ALPHA = "drs+a"
    FULL = "full"


class ShadingMode(str, enum.Enum):
    RAW = "raw"
    DIRECT = "direct"
    RESIDUAL = "residual"


@dataclass(frozen=True)
class NetConfig:
    base_channels: int = 16
    depth: int = 3
    input_size: int = 64
    formulation: Formulation = Formulation.FULL
    shading_mode: ShadingMode = ShadingMode.RESIDUAL

    def __post_init__(self):
        object.__setattr__(self, "formulation", Formulation(self.formulation))
        object.__setattr__(self, "shading_mode", ShadingMode(self.shading_mode))
        if self.base_channels < 1 or self.depth < 1:
            raise ValueError("base_channels and depth must be positive")
        if self.input_size % (2**self.depth):
            raise ValueError(f"input_size {self.input_size} not divisible by 2**depth = {2**self.depth}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["formulation"] = self.formulation.value
        d["shading_mode"] = self.shading_mode.value
        return d


class ModelFormatError(ValueError):
    """Raised for unreadable or mismatched model files."""


# -- parameter layout -----------------------------------------------------------

def _encoder_layout(prefix: str, cin: int, base: int, depth: int):
    c = [base * 2**k for k in range(depth + 1)]
    layers = [(f"{prefix}.in.0", "conv", cin, c[0], 3), (f"{prefix}.in.1", "conv", c[0], c[0], 3)]
    for k in range(1, depth + 1):
        layers += [(f"{prefix}.down{k}.0", "conv", c[k - 1], c[k], 3), (f"{prefix}.down{k}.1", "conv", c[k], c[k], 3)]
    return layers


def _decoder_layout(prefix: str, base: int, depth: int, heads):
    c = [base * 2**k for k in range(depth + 1)]
    layers = []
    for k in range(depth, 0, -1):
        layers += [
            (f"{prefix}.up{k}.t", "tconv", c[k], c[k - 1], 2),
            (f"{prefix}.up{k}.0", "conv", 2 * c[k - 1], c[k - 1], 3),
            (f"{prefix}.up{k}.1", "conv", c[k - 1], c[k - 1], 3),
        ]
    layers += [(f"{prefix}.head.{name}", "conv", c[0], cout, 1) for name, cout in heads]
    return layers


def architecture(cfg: NetConfig):
    """Ordered ``(name, kind, in_ch, out_ch, kernel)`` list of every layer."""
    b, d = cfg.base_channels, cfg.depth
    return (
        _encoder_layout("E", 3, b, d)
        + _decoder_layout("E", b, d, [("D", 3), ("R", 1)])
        + _encoder_layout("Er", 7, b, d)
        + _decoder_layout("Ds", b, d, [("S", 3)])
        + _decoder_layout("Da", b, d, [("alpha", 3)])
    )


@dataclass
class TransferModel:
    params: dict  # name -> Tensor, insertion-ordered
    config: NetConfig

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype) -> "TransferModel":
        return TransferModel(
            {k: Tensor(v.data.astype(dtype), requires_grad=v.requires_grad, dtype=dtype) for k, v in self.params.items()},
            self.config,
        )

    def group(self, prefix: str) -> dict:
        return {k: v for k, v in self.params.items() if k.split(".")[0] == prefix}


# Unbounded residual outputs; zero-initialised so an untrained model composes from D, R and S' alone.
RESIDUAL_HEADS = ("Ds.head.S", "Da.head.alpha")


def build_model(cfg: NetConfig, seed: int = 0, dtype=np.float32) -> TransferModel:
    """He-initialised model; biases and the residual heads start at zero. Same seed, same weights."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, kind, cin, cout, k in architecture(cfg):
        fan_in = (cin if kind == "conv" else cout) * k * k
        std = np.sqrt(2.0 / fan_in)
        shape = (cout, cin, k, k) if kind == "conv" else (cin, cout, k, k)
        w = rng.normal(0.0, std, shape)
        if name in RESIDUAL_HEADS:
            w[:] = 0.0
        params[f"{name}.weight"] = Tensor(w.astype(dtype), requires_grad=True, dtype=dtype)
        params[f"{name}.bias"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True, dtype=dtype)
    return TransferModel(params, cfg)


# -- forward --------------------------------------------------------------------

@dataclass
class ForwardOut:
    D: Tensor
    R: Tensor          # 1 channel
    alpha: Tensor
    S_residual: Tensor
    S_final: Tensor
    I_t: Tensor


def _conv(p, name, x, padding=1):
    return ad.conv2d(x, p[f"{name}.weight"], p[f"{name}.bias"], stride=1, padding=padding)


def _block(p, name, x):
    x = ad.leaky_relu(_conv(p, f"{name}.0", x))
    return ad.leaky_relu(_conv(p, f"{name}.1", x))


def _encode(p, prefix, x, depth):
    skips = [_block(p, f"{prefix}.in", x)]
    for k in range(1, depth + 1):
        skips.append(_block(p, f"{prefix}.down{k}", ad.avg_pool2d(skips[-1], 2)))
    return skips


def _decode(p, prefix, skips, depth):
    x = skips[depth]
    for k in range(depth, 0, -1):
        x = ad.conv2d_transpose(x, p[f"{prefix}.up{k}.t.weight"], p[f"{prefix}.up{k}.t.bias"], stride=2)
        x = _block(p, f"{prefix}.up{k}", ad.concat([x, skips[k - 1]], axis=1))
    return x


def compose(cfg: NetConfig, D: Tensor, R: Tensor, alpha: Tensor, S_final: Tensor) -> Tensor:
    """Target image from the predicted components under `cfg.formulation`."""
    f = cfg.formulation
    if f is Formulation.DS:
        return D * S_final
    if f is Formulation.DRS:
        return (D + R) * S_final
    if f is Formulation.DRS_PLUS_ALPHA:
        return (D + R) * S_final + alpha
    return (D + R + alpha) * S_final


def forward(model: TransferModel, I_s, S_prime, zero_heads=()) -> ForwardOut:
    """Run the network on NCHW source images and rough shadings.

    `zero_heads` may name ``"R"`` and/or ``"alpha"`` to force those outputs to
    zero, which isolates parts of the composition in tests.
    """
    cfg, p = model.config, model.params
    I_s, S_prime = ad.as_tensor(I_s), ad.as_tensor(S_prime)
    expect = (3, cfg.input_size, cfg.input_size)
    for name, t in (("I_s", I_s), ("S_prime", S_prime)):
        if t.ndim != 4 or t.shape[1:] != expect:
            raise ValueError(f"{name}: expected (N, {expect[0]}, {expect[1]}, {expect[2]}), got {t.shape}")
    if I_s.shape[0] != S_prime.shape[0]:
        raise ValueError(f"batch mismatch: I_s {I_s.shape} vs S_prime {S_prime.shape}")

    feat = _decode(p, "E", _encode(p, "E", I_s, cfg.depth), cfg.depth)
    D = ad.sigmoid(_conv(p, "E.head.D", feat, padding=0))
    R = ad.sigmoid(_conv(p, "E.head.R", feat, padding=0))
    if "R" in zero_heads:
        R = ad.scale(R, 0.0)

    skips = _encode(p, "Er", ad.concat([S_prime, D, R], axis=1), cfg.depth)
    s_out = _conv(p, "Ds.head.S", _decode(p, "Ds", skips, cfg.depth), padding=0)
    alpha = _conv(p, "Da.head.alpha", _decode(p, "Da", skips, cfg.depth), padding=0)
    if "alpha" in zero_heads:
        alpha = ad.scale(alpha, 0.0)

    mode = cfg.shading_mode
    if mode is ShadingMode.RAW:
        S_final = S_prime
    elif mode is ShadingMode.DIRECT:
        S_final = s_out
    else:
        S_final = S_prime + s_out
    I_t = compose(cfg, D, R, alpha, S_final)
    return ForwardOut(D=D, R=R, alpha=alpha, S_residual=s_out, S_final=S_final, I_t=I_t)


# -- serialization ----------------------------------------------------------------

MAGIC = b"LTN1"
VERSION = 1


def save_model(model: TransferModel, path) -> None:
    """Write parameters as ``LTN1`` binary: header, then named little-endian float32 tensors."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(model.params))]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path, cfg: NetConfig) -> TransferModel:
    """Read a model written by :func:`save_model` and check it against `cfg`."""
    buf = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ModelFormatError(f"{path}: truncated file at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4) != MAGIC:
        raise ModelFormatError(f"{path}: bad magic, not an LTN1 model file")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {version}")
    template = build_model(cfg, seed=0)
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        data = np.frombuffer(take(4 * int(np.prod(shape))), dtype="<f4").reshape(shape).astype(np.float32)
        if name not in template.params:
            raise ModelFormatError(f"{path}: unexpected tensor {name!r} for this configuration")
        want = template.params[name].shape
        if tuple(shape) != want:
            raise ModelFormatError(f"{path}: tensor {name!r} has shape {tuple(shape)}, configuration expects {want}")
        params[name] = Tensor(data, requires_grad=True, dtype=np.float32)
    if pos != len(buf):
        raise ModelFormatError(f"{path}: {len(buf) - pos} trailing bytes")
    missing = [k for k in template.params if k not in params]
    if missing:
        raise ModelFormatError(f"{path}: missing tensor {missing[0]!r}")
    return TransferModel({k: params[k] for k in template.params}, cfg)
