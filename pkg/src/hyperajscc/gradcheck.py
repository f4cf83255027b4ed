"""Finite-difference verification suite covering every registered op.

Each check builds a small random problem, reduces the op output to a
scalar, and compares tape gradients against central differences.  Inputs
for relu checks are nudged away from the kink at 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .channel import power_normalize
from .layers import HyperScale, make_conv, make_dense, make_resblock
from .models import build_model, forward_pipeline
from .tensor import Tensor, finite_diff_check
from .training import cross_entropy_loss, mse_loss

DEFAULT_TOL = 1e-5


@dataclass
class CheckResult:
    op: str
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _param(rng, *shape, away_from_zero=False):
    data = rng.uniform(-1.0, 1.0, size=shape)
    if away_from_zero:
        data = np.where(np.abs(data) < 0.2, np.sign(data) * 0.2 + data, data)
    return Tensor(data, requires_grad=True)


def _checks(rng: np.random.Generator, cases: int):
    """Yields (name, loss_builder, params) problems."""
    for i in range(cases):
        a = _param(rng, 2, 3)
        b = _param(rng, 3, 2)
        yield "matmul", (lambda a=a, b=b: T.tsum(T.matmul(a, b))), [a, b]

        x = _param(rng, 3, 4)
        w = _param(rng, 2, 4)
        bias = _param(rng, 2)
        yield "linear", (lambda x=x, w=w, bias=bias: T.tsum(T.tanh(T.linear(x, w, bias)))), [x, w, bias]

        p = _param(rng, 2, 3)
        q = _param(rng, 2, 3)
        yield "mul", (lambda p=p, q=q: T.tsum(T.mul(p, q))), [p, q]
        yield "add_sub", (lambda p=p, q=q: T.tsum(T.mul(T.add(p, q), T.sub(p, q)))), [p, q]

        v = _param(rng, 2)
        yield "scale_rowwise", (lambda p=p, v=v: T.tsum(T.tanh(T.scale_rowwise(p, v)))), [p, v]

        rv = _param(rng, 3)
        yield "mul_rowvec", (lambda p=p, rv=rv: T.tsum(T.tanh(T.mul_rowvec(p, rv)))), [p, rv]

        xc = _param(rng, 2, 3, 4, 4)
        sc = _param(rng, 3)
        sb = _param(rng, 2, 3)
        yield "scale_channels", (lambda xc=xc, sc=sc: T.tsum(T.tanh(T.scale_channels(xc, sc)))), [xc, sc]
        yield "scale_channels_batch", (lambda xc=xc, sb=sb: T.tsum(T.tanh(T.scale_channels(xc, sb)))), [xc, sb]

        om = rng.uniform(-1, 1, size=4)
        nu = _param(rng, 3)
        cc = _param(rng, 3)
        yield "affine_outer", (lambda om=om, nu=nu, cc=cc: T.tsum(T.tanh(T.affine_outer(om, nu, cc)))), [nu, cc]

        xa = _param(rng, 2, 5, away_from_zero=True)
        yield "relu", (lambda xa=xa: T.tsum(T.mul(T.relu(xa), T.relu(xa)))), [xa]
        yield "tanh", (lambda xa=xa: T.tsum(T.tanh(xa))), [xa]
        yield "sigmoid", (lambda xa=xa: T.tsum(T.sigmoid(xa))), [xa]
        lab = rng.integers(0, 5, size=2)
        yield "softmax_ce", (lambda xa=xa, lab=lab: cross_entropy_loss(T.softmax(xa), lab)), [xa]

        xi = _param(rng, 2, 2, 4, 4)
        k = _param(rng, 3, 2, 3, 3)
        kb = _param(rng, 3)
        yield "conv2d", (lambda xi=xi, k=k, kb=kb: T.tsum(T.tanh(T.conv2d(xi, k, kb, 1, 1)))), [xi, k, kb]
        k4 = _param(rng, 3, 2, 4, 4)
        yield "conv2d_s2", (lambda xi=xi, k4=k4, kb=kb: T.tsum(T.tanh(T.conv2d(xi, k4, kb, 2, 1)))), [xi, k4, kb]
        yield "upsample_conv", (
            lambda xi=xi, k=k, kb=kb: T.tsum(T.tanh(T.conv2d(T.upsample_zero(xi, 2), k, kb, 1, 1)))
        ), [xi, k, kb]

        zr = _param(rng, 2, 6, away_from_zero=True)
        yield "power_normalize", (lambda zr=zr: T.tsum(T.tanh(power_normalize(zr).values))), [zr]

        xm = _param(rng, 2, 3)
        ym = _param(rng, 2, 3)
        yield "mse_loss", (lambda xm=xm, ym=ym: mse_loss(xm, ym)), [xm, ym]


def _layer_checks(rng: np.random.Generator, cases: int):
    for i in range(cases):
        dense = make_dense(4, 3, "tanh", True, rng)
        dense.scale.nu.data = rng.uniform(-0.3, 0.3, 3)
        xd = Tensor(rng.uniform(-1, 1, (2, 4)))
        om = float(rng.uniform(0, 20))
        params = [t for _, t in dense.named_params()]
        yield "dense_hyper_layer", (lambda dense=dense, xd=xd, om=om: T.tsum(dense.forward(xd, om))), params

        conv = make_conv(2, 3, 3, 1, 1, 1, "tanh", True, rng)
        conv.scale.nu.data = rng.uniform(-0.3, 0.3, 3)
        xc = Tensor(rng.uniform(-1, 1, (2, 2, 4, 4)))
        params = [t for _, t in conv.named_params()]
        yield "conv_hyper_layer", (lambda conv=conv, xc=xc, om=om: T.tsum(conv.forward(xc, om))), params

        block = make_resblock(2, 3, 3, "tanh", True, rng)
        params = [t for _, t in block.named_params()]
        yield "resnet_block", (lambda block=block, xc=xc, om=om: T.tsum(block.forward(xc, om))), params


def tiny_model_config():
    """A <200 parameter model: small enough for exhaustive finite differences."""
    from .models import LayerSpec, ModelConfig

    return ModelConfig(
        task="reconstruction",
        input_shape=(1, 2, 2),
        bandwidth=2,
        encoder=[
            LayerSpec("flatten"),
            LayerSpec("dense", out=4, act="tanh", hyper=True),
            LayerSpec("dense", out=4, act="linear", hyper=True),
        ],
        decoder=[
            LayerSpec("dense", out=4, act="tanh", hyper=True),
            LayerSpec("dense", out=4, act="tanh", hyper=True),
        ],
    )


def objective_check(rng: np.random.Generator) -> CheckResult:
    """End-to-end gradient of the Monte-Carlo objective with frozen noise."""
    cfg = tiny_model_config()
    model = build_model(cfg, seed=int(rng.integers(1 << 31)))
    for _, t in model.named_parameters():
        if t.data.ndim == 1 and np.all(t.data == 0):  # excite nu and biases
            t.data = rng.uniform(-0.1, 0.1, t.data.shape)
    x = rng.uniform(-0.9, 0.9, (2, 1, 2, 2))
    omegas = rng.uniform(0, 20, size=2)
    noise_seed = int(rng.integers(1 << 31))

    def loss():
        xt = Tensor(x)
        out, _, _ = forward_pipeline(model, xt, omegas, np.random.default_rng(noise_seed))
        return mse_loss(xt, out)

    params = model.parameters()
    err = finite_diff_check(loss, params, h=1e-5)
    return CheckResult("end_to_end_objective", err, DEFAULT_TOL)


def run_suite(size: str = "tiny", seed: int = 0, tol: float = DEFAULT_TOL) -> list[CheckResult]:
    """Run every check; 'small' uses enough repeats for 100+ cases in total."""
    cases = 2 if size == "tiny" else 8
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for name, f, params in _checks(rng, cases):
        err = finite_diff_check(f, params)
        worst[name] = max(worst.get(name, 0.0), err)
    for name, f, params in _layer_checks(rng, cases):
        err = finite_diff_check(f, params)
        worst[name] = max(worst.get(name, 0.0), err)
    results = [CheckResult(name, err, tol) for name, err in worst.items()]
    results.append(objective_check(rng))
    return results
