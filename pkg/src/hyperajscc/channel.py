"""Complex AWGN channel: power normalization, SNR priors, noisy transmission.

Symbols live as interleaved real pairs: a [B, 2d] row holds d complex
symbols (re0, im0, re1, im1, ...).  After normalization each row has unit
average complex-symbol power, so SNR omega (dB) maps to a per-complex-symbol
noise variance sigma^2 = 10^(-omega/10), i.e. sigma^2/2 per real component.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ContractError, ShapeError, Tensor, _make

# Above this SNR the channel is treated as exactly noiseless.
SNR_CAP_DB = 40.0


class DegenerateInputError(ValueError):
    """An all-zero symbol row cannot satisfy the unit-power constraint."""


@dataclass
class ChannelSymbols:
    """Power-normalized channel input: d complex symbols per row."""

    values: Tensor  # [B, 2d]
    d: int


@dataclass
class ChannelDraw:
    """One realized channel condition."""

    omega_db: float
    sigma2: float = field(init=False)

    def __post_init__(self):
        self.sigma2 = snr_to_sigma2(self.omega_db)


def snr_to_sigma2(omega_db):
    """Noise variance per complex symbol under unit signal power."""
    om = np.asarray(omega_db, dtype=np.float64)
    sigma2 = np.where(om >= SNR_CAP_DB, 0.0, 10.0 ** (-om / 10.0))
    return float(sigma2) if sigma2.ndim == 0 else sigma2


def power_normalize(z_raw: Tensor) -> ChannelSymbols:
    """Scale each row by sqrt(d)/||z|| so average complex power is exactly 1.

    Differentiable: the gradient flows through the norm.
    """
    if z_raw.data.ndim != 2 or z_raw.shape[1] % 2:
        raise ShapeError(f"power_normalize expects [batch, 2d] input, got {z_raw.shape}")
    d = z_raw.shape[1] // 2
    norms = np.linalg.norm(z_raw.data, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateInputError("all-zero symbol row cannot be power-normalized")
    factor = np.sqrt(d) / norms
    out = z_raw.data * factor[:, None]

    def backward(g):
        # dz = sqrt(d)/||z|| * (g - (g.z) z / ||z||^2), per row
        zd = z_raw.data
        inner = (g * zd).sum(axis=1)
        dz = factor[:, None] * (g - (inner / norms**2)[:, None] * zd)
        return [(z_raw, dz)]

    return ChannelSymbols(_make(out, (z_raw,), backward), d)


def awgn_transmit(symbols: ChannelSymbols, omega_db, rng: np.random.Generator) -> Tensor:
    """z_hat = z + eps with per-real-component variance sigma^2/2.

    omega_db is a scalar or one value per row.  The noise is a constant in
    backward (reparameterization): gradients pass through z unchanged.
    """
    z = symbols.values
    sigma2 = np.atleast_1d(np.asarray(snr_to_sigma2(omega_db), dtype=np.float64))
    if sigma2.size not in (1, z.shape[0]):
        raise ShapeError(f"awgn_transmit: {sigma2.size} conditions for batch of {z.shape[0]}")
    noise = rng.standard_normal(z.shape) * np.sqrt(sigma2 / 2.0)[:, None]
    return _make(z.data + noise, (z,), lambda g: [(z, g)])


@dataclass
class SnrPrior:
    """Distribution of channel conditions p(omega), in dB."""

    kind: str  # uniform | fixed | discrete
    lo_db: float = 0.0
    hi_db: float = 20.0
    value_db: float = 10.0
    values: tuple = ()
    weights: tuple = ()

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed", "discrete"):
            raise ContractError(f"unknown SNR prior kind: {self.kind!r}")
        if self.kind == "uniform" and self.lo_db > self.hi_db:
            raise ContractError(f"uniform prior: lo {self.lo_db} > hi {self.hi_db}")
        if self.kind == "discrete":
            if len(self.values) != len(self.weights) or not self.values:
                raise ContractError("discrete prior needs matching values and weights")
            if abs(sum(self.weights) - 1.0) > 1e-9:
                raise ContractError("discrete prior weights must sum to 1")

    def sample(self, rng: np.random.Generator, size: int | None = None):
        if self.kind == "fixed":
            return self.value_db if size is None else np.full(size, self.value_db)
        if self.kind == "uniform":
            draw = rng.uniform(self.lo_db, self.hi_db, size=size)
            return float(draw) if size is None else draw
        idx = rng.choice(len(self.values), size=size, p=np.asarray(self.weights))
        vals = np.asarray(self.values, dtype=np.float64)
        return float(vals[idx]) if size is None else vals[idx]


def sample_snr(prior: SnrPrior, rng: np.random.Generator) -> float:
    return prior.sample(rng)
