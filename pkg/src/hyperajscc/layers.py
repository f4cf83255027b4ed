"""Neural layers with channel-conditioned element-wise scaling.

Each adaptive layer is a plain base layer (weights W0/b0 or kernels C0/b0)
plus a per-output-channel scale s = omega_t * nu + c, applied to the
pre-activation output.  For convolutions, scaling output channels is
mathematically identical to row-scaling the kernels and commutes with the
convolution, so we scale the cheaper side.

omega_t is the raw channel SNR in dB mapped affinely (gain, offset) into
[-1, 1] over the configured training range; the map travels with the
checkpoint so inference matches training.  With nu = 0 and c = 1 every
layer is bit-identical to its unscaled base.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ConfigurationError, ShapeError, Tensor


class HyperScale:
    """Per-output-channel affine condition scale: s = (gain*omega+offset)*nu + c."""

    def __init__(self, nu: Tensor, c: Tensor, omega_gain: float = 0.1, omega_offset: float = -1.0):
        if nu.shape != c.shape or nu.data.ndim != 1:
            raise ShapeError(f"HyperScale: nu {nu.shape} vs c {c.shape}")
        self.nu = nu
        self.c = c
        self.omega_gain = float(omega_gain)
        self.omega_offset = float(omega_offset)

    @classmethod
    def identity(cls, n_out: int, omega_gain: float = 0.1, omega_offset: float = -1.0) -> "HyperScale":
        """nu=0, c=1: starts as an exact no-op for every omega."""
        nu = Tensor(np.zeros(n_out), requires_grad=True)
        c = Tensor(np.ones(n_out), requires_grad=True)
        return cls(nu, c, omega_gain, omega_offset)

    def map_omega(self, omega_db):
        return self.omega_gain * np.asarray(omega_db, dtype=np.float64) + self.omega_offset

    def vector(self, omega_db) -> Tensor:
        """Scale vector for a scalar omega ([D]) or per-sample omegas ([B,D])."""
        om = self.map_omega(omega_db)
        if om.ndim == 0:
            return T.add(T.scale(self.nu, float(om)), self.c)
        return T.affine_outer(om, self.nu, self.c)


class DenseLayer:
    def __init__(self, w0: Tensor, b0: Tensor, act: str = "linear"):
        if w0.data.ndim != 2 or b0.shape != (w0.shape[0],):
            raise ShapeError(f"DenseLayer: W0 {w0.shape} vs b0 {b0.shape}")
        self.w0 = w0
        self.b0 = b0
        self.act = act

    @property
    def out_channels(self) -> int:
        return self.w0.shape[0]

    def param_count(self) -> int:
        return self.w0.size + self.b0.size

    def named_params(self):
        return [("W0", self.w0), ("b0", self.b0)]


class Conv2dLayer:
    """Convolution, optionally preceded by zero-insertion upsampling (deconv)."""

    def __init__(
        self,
        c0: Tensor,
        b0: Tensor,
        stride: int = 1,
        padding: int = 0,
        upsample: int = 1,
        act: str = "linear",
    ):
        if c0.data.ndim != 4 or b0.shape != (c0.shape[0],):
            raise ShapeError(f"Conv2dLayer: C0 {c0.shape} vs b0 {b0.shape}")
        if c0.shape[2] < 1 or c0.shape[3] < 1:
            raise ConfigurationError(f"Conv2dLayer: empty kernel {c0.shape}")
        self.c0 = c0
        self.b0 = b0
        self.stride = stride
        self.padding = padding
        self.upsample = upsample
        self.act = act

    @property
    def out_channels(self) -> int:
        return self.c0.shape[0]

    def param_count(self) -> int:
        return self.c0.size + self.b0.size

    def named_params(self):
        return [("C0", self.c0), ("b0", self.b0)]


class HyperLayer:
    """Base layer plus optional condition scale; scale absent = plain layer."""

    def __init__(self, base: DenseLayer | Conv2dLayer, scale: HyperScale | None = None):
        if scale is not None and scale.nu.shape[0] != base.out_channels:
            raise ShapeError(
                f"HyperLayer: scale width {scale.nu.shape[0]} vs {base.out_channels} output channels"
            )
        self.base = base
        self.scale = scale

    @property
    def out_channels(self) -> int:
        return self.base.out_channels

    def forward(self, f: Tensor, omega_db) -> Tensor:
        base = self.base
        if isinstance(base, DenseLayer):
            y = T.linear(f, base.w0, base.b0)
            if self.scale is not None:
                s = self.scale.vector(omega_db)
                y = T.mul(y, s) if s.data.ndim == 2 else T.mul_rowvec(y, s)
        else:
            x = T.upsample_zero(f, base.upsample) if base.upsample > 1 else f
            y = T.conv2d(x, base.c0, base.b0, base.stride, base.padding)
            if self.scale is not None:
                y = T.scale_channels(y, self.scale.vector(omega_db))
        return T.activation(base.act, y)

    def param_counts(self) -> tuple[int, int]:
        """(base parameter count, introduced parameter count)."""
        introduced = 2 * self.out_channels if self.scale is not None else 0
        return self.base.param_count(), introduced

    def named_params(self):
        out = list(self.base.named_params())
        if self.scale is not None:
            out += [("nu", self.scale.nu), ("c", self.scale.c)]
        return out


class ResNetBlock:
    """out = act(conv2(act(conv1(f))) + skip(f)), scaling inside each conv.

    skip is a 1x1 projection when channel counts differ, identity otherwise.
    """

    def __init__(self, conv1: HyperLayer, conv2: HyperLayer, skip: HyperLayer | None, act: str):
        self.conv1 = conv1
        self.conv2 = conv2
        self.skip = skip
        self.act = act

    @property
    def out_channels(self) -> int:
        return self.conv2.out_channels

    def forward(self, f: Tensor, omega_db) -> Tensor:
        h = self.conv1.forward(f, omega_db)
        h = self.conv2.forward(h, omega_db)
        sk = self.skip.forward(f, omega_db) if self.skip is not None else f
        return T.activation(self.act, T.add(h, sk))

    def param_counts(self) -> tuple[int, int]:
        parts = [self.conv1, self.conv2] + ([self.skip] if self.skip else [])
        base = sum(p.param_counts()[0] for p in parts)
        introduced = sum(p.param_counts()[1] for p in parts)
        return base, introduced

    def named_params(self):
        out = [(f"conv1.{n}", t) for n, t in self.conv1.named_params()]
        out += [(f"conv2.{n}", t) for n, t in self.conv2.named_params()]
        if self.skip is not None:
            out += [(f"skip.{n}", t) for n, t in self.skip.named_params()]
        return out


class Flatten:
    """Structural layer: [B,C,H,W] -> [B, C*H*W]."""

    def forward(self, f: Tensor, omega_db) -> Tensor:
        return T.reshape(f, (f.shape[0], f.size // f.shape[0]))

    def param_counts(self) -> tuple[int, int]:
        return 0, 0

    def named_params(self):
        return []


class Reshape:
    """Structural layer: [B, prod(shape)] -> [B, *shape]."""

    def __init__(self, shape: tuple[int, ...]):
        self.shape = tuple(shape)

    def forward(self, f: Tensor, omega_db) -> Tensor:
        return T.reshape(f, (f.shape[0],) + self.shape)

    def param_counts(self) -> tuple[int, int]:
        return 0, 0

    def named_params(self):
        return []


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def make_dense(
    d_in: int,
    d_out: int,
    act: str,
    hyper: bool,
    rng: np.random.Generator,
    omega_gain: float = 0.1,
    omega_offset: float = -1.0,
) -> HyperLayer:
    w0 = Tensor(he_uniform((d_out, d_in), d_in, rng), requires_grad=True)
    b0 = Tensor(np.zeros(d_out), requires_grad=True)
    scale = HyperScale.identity(d_out, omega_gain, omega_offset) if hyper else None
    return HyperLayer(DenseLayer(w0, b0, act), scale)


def make_conv(
    c_in: int,
    c_out: int,
    kernel: int,
    stride: int,
    padding: int,
    upsample: int,
    act: str,
    hyper: bool,
    rng: np.random.Generator,
    omega_gain: float = 0.1,
    omega_offset: float = -1.0,
) -> HyperLayer:
    fan_in = c_in * kernel * kernel
    c0 = Tensor(he_uniform((c_out, c_in, kernel, kernel), fan_in, rng), requires_grad=True)
    b0 = Tensor(np.zeros(c_out), requires_grad=True)
    scale = HyperScale.identity(c_out, omega_gain, omega_offset) if hyper else None
    return HyperLayer(Conv2dLayer(c0, b0, stride, padding, upsample, act), scale)


def make_resblock(
    c_in: int,
    c_out: int,
    kernel: int,
    act: str,
    hyper: bool,
    rng: np.random.Generator,
    omega_gain: float = 0.1,
    omega_offset: float = -1.0,
) -> ResNetBlock:
    pad = kernel // 2
    conv1 = make_conv(c_in, c_out, kernel, 1, pad, 1, act, hyper, rng, omega_gain, omega_offset)
    conv2 = make_conv(c_out, c_out, kernel, 1, pad, 1, "linear", hyper, rng, omega_gain, omega_offset)
    skip = None
    if c_in != c_out:
        skip = make_conv(c_in, c_out, 1, 1, 0, 1, "linear", hyper, rng, omega_gain, omega_offset)
    return ResNetBlock(conv1, conv2, skip, act)
