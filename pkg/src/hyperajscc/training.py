"""Losses, Adam, and the single-round condition-adaptive training loop.

Each mini-batch draws one channel condition per sample from the prior, so
one gradient step optimizes the Monte-Carlo average of the per-condition
losses over the whole trainable set (base weights plus scale vectors).
A NaN loss aborts immediately with the offending epoch/step.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .channel import SnrPrior
from .data import Dataset, batches
from .models import HyperAJSCCModel, forward_pipeline
from .tensor import ContractError, ShapeError, Tensor


class TrainingDivergedError(RuntimeError):
    """Loss went NaN; aborting beats silently skipping a broken gradient."""


def mse_loss(x: Tensor, x_hat: Tensor) -> Tensor:
    if x.shape != x_hat.shape:
        raise ShapeError(f"mse_loss: shapes differ: {x.shape} vs {x_hat.shape}")
    diff = T.sub(x_hat, x)
    return T.tmean(T.mul(diff, diff))


PROB_FLOOR = 1e-12


def cross_entropy_loss(probs: Tensor, labels) -> Tensor:
    """Mean of -log probs[i, label_i], with a 1e-12 probability floor."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.data.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ShapeError(f"cross_entropy_loss: probs {probs.shape}, labels {labels.shape}")
    k = probs.shape[1]
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ContractError(f"label out of range [0, {k})")
    n = probs.shape[0]
    picked = probs.data[np.arange(n), labels]
    floored = np.maximum(picked, PROB_FLOOR)
    loss = -np.log(floored).mean()

    def backward(g):
        dp = np.zeros_like(probs.data)
        live = picked >= PROB_FLOOR
        dp[np.arange(n)[live], labels[live]] = -float(g) / (n * floored[live])
        return [(probs, dp)]

    return T._make(np.asarray(loss), (probs,), backward)


class Adam:
    """Adam with bias correction; update is -lr * m_hat / sqrt(v_hat + eps)."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**self.t)
            v_hat = self.v[i] / (1 - self.beta2**self.t)
            p.data -= self.lr * m_hat / np.sqrt(v_hat + self.eps)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    prior: SnrPrior = field(default_factory=lambda: SnrPrior("uniform", 0.0, 20.0))
    loss: str = "mse"  # mse | cross_entropy
    seed: int = 0
    val_grid: tuple = (1.0, 4.0, 7.0, 10.0, 13.0, 16.0, 19.0)
    val_every: int = 1  # 0 disables validation

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be positive")
        if self.lr <= 0:
            raise ContractError("learning rate must be positive")
        if self.loss not in ("mse", "cross_entropy"):
            raise ContractError(f"unknown loss kind: {self.loss!r}")


@dataclass
class TrainLog:
    """One row per epoch: mean loss, validation metric per grid SNR, wall time."""

    seed: int
    config_digest: str
    epochs: list = field(default_factory=list)  # (epoch, loss, {snr: metric}, wall_s)

    def to_csv(self, val_grid) -> str:
        cols = ["epoch", "loss"] + [f"val_{g:g}dB" for g in val_grid] + ["wall_s"]
        lines = [",".join(cols)]
        for epoch, loss, val, wall in self.epochs:
            row = [str(epoch), repr(loss)]
            row += [repr(val[g]) if g in val else "" for g in val_grid]
            row.append(f"{wall:.3f}")
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _batch_loss(model, xb, labels, omegas, loss_kind, rng):
    x = Tensor(xb)
    out, _, _ = forward_pipeline(model, x, omegas, rng)
    if loss_kind == "mse":
        return mse_loss(x, out)
    return cross_entropy_loss(out, labels)


def train_step(model: HyperAJSCCModel, xb, labels, omegas, loss_kind: str, optimizer: Adam, rng) -> float:
    if len(np.atleast_1d(omegas)) != xb.shape[0]:
        raise ContractError(f"{len(np.atleast_1d(omegas))} conditions for batch of {xb.shape[0]}")
    optimizer.zero_grad()
    loss = _batch_loss(model, xb, labels, omegas, loss_kind, rng)
    loss.backward()
    optimizer.step()
    return float(loss.data)


def evaluate(model: HyperAJSCCModel, dataset: Dataset, omega_db: float, rng, chunk: int = 64):
    """Full-dataset metric at one test condition: MSE (reconstruction) or accuracy."""
    total_se = 0.0
    n_el = 0
    correct = 0
    n_items = dataset.samples.shape[0]
    for start in range(0, n_items, chunk):
        xb = dataset.samples[start : start + chunk]
        x = Tensor(xb)
        out, _, _ = forward_pipeline(model, x, omega_db, rng)
        if model.config.task == "reconstruction":
            total_se += float(((out.data - xb) ** 2).sum())
            n_el += xb.size
        else:
            pred = out.data.argmax(axis=1)
            correct += int((pred == np.asarray(dataset.labels[start : start + chunk])).sum())
    if model.config.task == "reconstruction":
        return total_se / n_el  # MSE in [-1,1] units
    return correct / n_items


def train(
    model: HyperAJSCCModel,
    dataset: Dataset,
    config: TrainConfig,
    val_dataset: Dataset | None = None,
    config_digest: str = "",
) -> tuple[HyperAJSCCModel, TrainLog]:
    """Epochs of shuffled mini-batches with per-sample condition draws."""
    config.validate()
    if dataset.samples.shape[0] == 0:
        raise ContractError("dataset is empty")
    ss = np.random.SeedSequence(config.seed)
    s_prior, s_noise, s_val = ss.spawn(3)
    rng_prior = np.random.default_rng(s_prior)
    rng_noise = np.random.default_rng(s_noise)

    params = model.parameters()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    log = TrainLog(seed=config.seed, config_digest=config_digest)
    step = 0
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        epoch_losses = []
        for idx in batches(dataset, config.batch_size, config.seed, epoch):
            xb = dataset.samples[idx]
            labels = [dataset.labels[i] for i in idx] if dataset.labels is not None else None
            omegas = config.prior.sample(rng_prior, size=len(idx))
            loss = train_step(model, xb, labels, omegas, config.loss, opt, rng_noise)
            step += 1
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}, step {step}")
            epoch_losses.append(loss)
        val = {}
        if val_dataset is not None and config.val_every and epoch % config.val_every == 0:
            rng_v = np.random.default_rng(np.random.SeedSequence((config.seed, 7, epoch)))
            for g in config.val_grid:
                val[g] = evaluate(model, val_dataset, g, rng_v)
        log.epochs.append((epoch, float(np.mean(epoch_losses)), val, time.perf_counter() - t0))
    return model, log
