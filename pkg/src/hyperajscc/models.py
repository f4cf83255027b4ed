"""Model assembly: encoder -> power normalization -> AWGN -> decoder.

A ModelConfig describes both halves as ordered layer descriptors; widths
are inferred by shape propagation at build time.  With every hyper flag
off, the built model is a plain fixed-condition codec whose outputs do not
depend on omega at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .channel import ChannelSymbols, awgn_transmit, power_normalize
from .layers import Conv2dLayer, DenseLayer, Flatten, HyperLayer, Reshape, ResNetBlock
from .tensor import ConfigurationError, ShapeError, Tensor
from . import tensor as T


@dataclass
class LayerSpec:
    """One encoder/decoder layer descriptor.

    kind: dense | conv | deconv | resblock | flatten
    out: output width (dense) or output channels (conv/deconv/resblock)
    """

    kind: str
    out: int = 0
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    upsample: int = 1
    act: str = "linear"
    hyper: bool = False
    shape: tuple = ()  # reshape target (C, H, W)


@dataclass
class ModelConfig:
    task: str  # reconstruction | classification
    input_shape: tuple[int, int, int]  # (C, H, W)
    bandwidth: int  # d complex symbols
    encoder: list[LayerSpec] = field(default_factory=list)
    decoder: list[LayerSpec] = field(default_factory=list)
    num_classes: int = 0
    omega_lo_db: float = 0.0
    omega_hi_db: float = 20.0

    @property
    def n(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def omega_gain(self) -> float:
        span = self.omega_hi_db - self.omega_lo_db
        return 2.0 / span if span else 0.0

    @property
    def omega_offset(self) -> float:
        span = self.omega_hi_db - self.omega_lo_db
        return -(self.omega_hi_db + self.omega_lo_db) / span if span else 0.0

    def validate(self) -> None:
        if self.task not in ("reconstruction", "classification"):
            raise ConfigurationError(f"unknown task: {self.task!r}")
        if self.bandwidth < 1:
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.task == "classification" and self.num_classes < 2:
            raise ConfigurationError(f"classification needs num_classes >= 2, got {self.num_classes}")
        enc_out = _propagate(self.input_shape, self.encoder, "encoder")
        if int(np.prod(enc_out)) != 2 * self.bandwidth:
            raise ConfigurationError(
                f"encoder output width {int(np.prod(enc_out))} != 2*d = {2 * self.bandwidth}"
            )
        dec_out = _propagate((2 * self.bandwidth,), self.decoder, "decoder")
        if self.task == "reconstruction":
            # a flat decoder output of width n is reshaped to the image in decode()
            if tuple(dec_out) != tuple(self.input_shape) and dec_out != (self.n,):
                raise ConfigurationError(
                    f"decoder output shape {dec_out} != input shape {self.input_shape}"
                )
        else:
            if dec_out != (self.num_classes,):
                raise ConfigurationError(
                    f"decoder final width {dec_out} != num_classes {self.num_classes}"
                )


def _propagate(shape, specs: list[LayerSpec], half: str):
    """Infer the output shape of a layer stack; errors name the layer."""
    cur = tuple(shape)
    for i, s in enumerate(specs):
        where = f"{half}[{i}] ({s.kind})"
        if s.kind == "dense":
            if len(cur) != 1:
                raise ConfigurationError(f"{where}: dense needs a flat input, got {cur}")
            cur = (s.out,)
        elif s.kind in ("conv", "deconv"):
            if len(cur) != 3:
                raise ConfigurationError(f"{where}: conv needs [C,H,W] input, got {cur}")
            c, h, w = cur
            if s.kind == "deconv":
                h, w = h * s.upsample, w * s.upsample
            if (h + 2 * s.padding - s.kernel) % s.stride or (w + 2 * s.padding - s.kernel) % s.stride:
                raise ConfigurationError(f"{where}: non-integral output size from {cur}")
            ho = (h + 2 * s.padding - s.kernel) // s.stride + 1
            wo = (w + 2 * s.padding - s.kernel) // s.stride + 1
            if ho < 1 or wo < 1:
                raise ConfigurationError(f"{where}: empty output from {cur}")
            cur = (s.out, ho, wo)
        elif s.kind == "resblock":
            if len(cur) != 3:
                raise ConfigurationError(f"{where}: resblock needs [C,H,W] input, got {cur}")
            cur = (s.out, cur[1], cur[2])
        elif s.kind == "flatten":
            cur = (int(np.prod(cur)),)
        elif s.kind == "reshape":
            if int(np.prod(s.shape)) != int(np.prod(cur)):
                raise ConfigurationError(f"{where}: cannot reshape {cur} into {s.shape}")
            cur = tuple(s.shape)
        else:
            raise ConfigurationError(f"{where}: unknown layer kind")
    return cur


class HyperAJSCCModel:
    """Built encoder/decoder pair with shared condition conditioning."""

    def __init__(self, encoder, decoder, config: ModelConfig):
        self.encoder = encoder
        self.decoder = decoder
        self.config = config

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for half, layers_ in (("enc", self.encoder), ("dec", self.decoder)):
            for i, layer in enumerate(layers_):
                for name, t in layer.named_params():
                    out.append((f"{half}.{i}.{name}", t))
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def trainable_layers(self):
        return list(self.encoder) + list(self.decoder)


def _build_stack(shape, specs: list[LayerSpec], cfg: ModelConfig, rng, half: str):
    built = []
    cur = tuple(shape)
    for i, s in enumerate(specs):
        g, o = cfg.omega_gain, cfg.omega_offset
        if s.kind == "dense":
            built.append(L.make_dense(cur[0], s.out, s.act, s.hyper, rng, g, o))
        elif s.kind in ("conv", "deconv"):
            up = s.upsample if s.kind == "deconv" else 1
            built.append(L.make_conv(cur[0], s.out, s.kernel, s.stride, s.padding, up, s.act, s.hyper, rng, g, o))
        elif s.kind == "resblock":
            built.append(L.make_resblock(cur[0], s.out, s.kernel, s.act, s.hyper, rng, g, o))
        elif s.kind == "flatten":
            built.append(Flatten())
        elif s.kind == "reshape":
            built.append(Reshape(s.shape))
        cur = _propagate(cur, [s], half)
    return built


def build_model(config: ModelConfig, seed: int | np.random.Generator = 0) -> HyperAJSCCModel:
    """Initialize a model: He-uniform weights, zero biases, nu=0, c=1."""
    config.validate()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    encoder = _build_stack(config.input_shape, config.encoder, config, rng, "encoder")
    decoder = _build_stack((2 * config.bandwidth,), config.decoder, config, rng, "decoder")
    return HyperAJSCCModel(encoder, decoder, config)


def encode(model: HyperAJSCCModel, x: Tensor, omega_db) -> ChannelSymbols:
    """Run the encoder stack and power-normalize into d complex symbols."""
    cfg = model.config
    expected = (x.shape[0],) + tuple(cfg.input_shape)
    if x.shape != expected:
        raise ShapeError(f"encode: input {x.shape}, expected {expected}")
    f = x
    for layer in model.encoder:
        f = layer.forward(f, omega_db)
    if f.data.ndim > 2:
        f = T.reshape(f, (f.shape[0], f.size // f.shape[0]))
    if f.shape[1] != 2 * cfg.bandwidth:
        raise ConfigurationError(f"encoder produced width {f.shape[1]}, expected {2 * cfg.bandwidth}")
    return power_normalize(f)


def decode(model: HyperAJSCCModel, z_hat: Tensor, omega_db) -> Tensor:
    cfg = model.config
    if z_hat.data.ndim != 2 or z_hat.shape[1] != 2 * cfg.bandwidth:
        raise ShapeError(f"decode: input {z_hat.shape}, expected [batch, {2 * cfg.bandwidth}]")
    f = z_hat
    for layer in model.decoder:
        f = layer.forward(f, omega_db)
    if cfg.task == "reconstruction" and f.data.ndim == 2:
        f = T.reshape(f, (f.shape[0],) + tuple(cfg.input_shape))
    return f


def forward_pipeline(model: HyperAJSCCModel, x: Tensor, omega_db, rng: np.random.Generator):
    """encode -> AWGN at omega -> decode, on one tape. Returns (out, z, z_hat)."""
    symbols = encode(model, x, omega_db)
    z_hat = awgn_transmit(symbols, omega_db, rng)
    out = decode(model, z_hat, omega_db)
    return out, symbols.values, z_hat


def count_params(model: HyperAJSCCModel) -> dict:
    """Parameter accounting: base vs introduced counts and 32-bit storage."""
    per_layer = []
    total_base = total_intro = 0
    for half, layers_ in (("enc", model.encoder), ("dec", model.decoder)):
        for i, layer in enumerate(layers_):
            base, intro = layer.param_counts()
            per_layer.append((f"{half}.{i}", type(layer).__name__, base, intro))
            total_base += base
            total_intro += intro
    return {
        "per_layer": per_layer,
        "total_base": total_base,
        "total_introduced": total_intro,
        "bytes_at_32bit": 4 * (total_base + total_intro),
        "introduced_bytes_at_32bit": 4 * total_intro,
    }


def compression_ratio(config: ModelConfig) -> float:
    """R = d/n: channel bandwidth over source dimension."""
    if config.n <= 0:
        raise ConfigurationError("source dimension must be positive")
    return config.bandwidth / config.n


# ---------------------------------------------------------------------------
# desk-scale default architectures


def default_reconstruction_config(hyper: bool = True, bandwidth: int = 8) -> ModelConfig:
    """All-conv codec for 3x8x8 images; the bandwidth layer is a conv, not a wide dense."""
    cb = (2 * bandwidth) // 4  # bottleneck channels over a 2x2 spatial grid
    if cb * 4 != 2 * bandwidth:
        raise ConfigurationError(f"default reconstruction config needs 2*d divisible by 4, got d={bandwidth}")
    enc = [
        LayerSpec("conv", out=16, kernel=4, stride=2, padding=1, act="relu", hyper=hyper),
        LayerSpec("conv", out=32, kernel=4, stride=2, padding=1, act="relu", hyper=hyper),
        LayerSpec("conv", out=cb, kernel=3, stride=1, padding=1, act="linear", hyper=hyper),
    ]
    dec = [
        LayerSpec("reshape", shape=(cb, 2, 2)),
        LayerSpec("conv", out=32, kernel=3, stride=1, padding=1, act="relu", hyper=hyper),
        LayerSpec("deconv", out=16, kernel=3, upsample=2, padding=1, act="relu", hyper=hyper),
        LayerSpec("deconv", out=3, kernel=3, upsample=2, padding=1, act="tanh", hyper=hyper),
    ]
    return ModelConfig(
        task="reconstruction",
        input_shape=(3, 8, 8),
        bandwidth=bandwidth,
        encoder=enc,
        decoder=dec,
    )


def default_classification_config(hyper: bool = True, bandwidth: int = 4, num_classes: int = 2) -> ModelConfig:
    """Small conv + resblock encoder with a dense classification head."""
    enc = [
        LayerSpec("conv", out=8, kernel=4, stride=2, padding=1, act="relu", hyper=hyper),
        LayerSpec("conv", out=16, kernel=4, stride=2, padding=1, act="relu", hyper=hyper),
        LayerSpec("resblock", out=16, kernel=3, act="relu", hyper=hyper),
        LayerSpec("flatten"),
        LayerSpec("dense", out=2 * bandwidth, act="linear", hyper=hyper),
    ]
    dec = [
        LayerSpec("dense", out=32, act="relu", hyper=hyper),
        LayerSpec("dense", out=num_classes, act="softmax", hyper=hyper),
    ]
    return ModelConfig(
        task="classification",
        input_shape=(3, 8, 8),
        bandwidth=bandwidth,
        encoder=enc,
        decoder=dec,
        num_classes=num_classes,
    )
