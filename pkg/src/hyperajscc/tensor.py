"""Dense float64 arrays with reverse-mode automatic differentiation.

The computation graph is rebuilt on every forward pass (define-by-run):
each Tensor produced by an op keeps references to its parent tensors and a
closure that maps the output gradient to parent gradients.  Calling
``backward()`` on a scalar runs one reverse-topological sweep and
accumulates gradients into every reachable tensor with ``requires_grad``.

Everything is float64.  Models here are tiny, so we trade throughput for
tight finite-difference checks.  relu's subgradient at 0 is defined as 0.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

# When True every op asserts its output is finite. Enabled by tests.
check_finite = False


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


class ContractError(ValueError):
    """An op precondition (other than pure shape agreement) was violated."""


class ConfigurationError(ValueError):
    """A structural parameter (stride/padding/width) is inconsistent."""


class Tensor:
    """n-dimensional float64 array, optionally tracked for autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_track")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple = (),
        backward_fn: Callable | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = parents
        self._backward_fn = backward_fn
        self._track = requires_grad or bool(parents)
        if check_finite and not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in tensor of shape {self.shape}")

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self) -> None:
        """Reverse-topological gradient sweep from a scalar loss."""
        if self.data.size != 1:
            raise ContractError(f"backward requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p._track:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad = node.grad + g
            if node._backward_fn is not None:
                for parent, pg in node._backward_fn(g):
                    if not parent._track:
                        continue
                    acc = grads.get(id(parent))
                    grads[id(parent)] = pg if acc is None else acc + pg

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _make(data, parents: tuple, backward_fn: Callable) -> Tensor:
    """Wrap an op result; drop the graph when no parent is tracked."""
    if any(p._track for p in parents):
        return Tensor(data, parents=parents, backward_fn=backward_fn)
    return Tensor(data)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def backward(g):
        grads = []
        if a._track:
            grads.append((a, g @ b.data.T))
        if b._track:
            grads.append((b, a.data.T @ g))
        return grads

    return _make(out, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w.T + b for x [B,Din], w [Dout,Din], b [Dout]."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {w.shape}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias {b.shape} does not match weight {w.shape}")
    out = x.data @ w.data.T + b.data

    def backward(g):
        grads = []
        if x._track:
            grads.append((x, g @ w.data))
        if w._track:
            grads.append((w, g.T @ x.data))
        if b._track:
            grads.append((b, g.sum(axis=0)))
        return grads

    return _make(out, (x, w, b), backward)


# ---------------------------------------------------------------------------
# elementwise


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: [(a, g), (b, g)])


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: [(a, g), (b, -g)])


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b), lambda g: [(a, g * b.data), (b, g * a.data)])


def scale(a: Tensor, alpha: float) -> Tensor:
    """Multiply by a python constant (not differentiated w.r.t. alpha)."""
    return _make(a.data * alpha, (a,), lambda g: [(a, g * alpha)])


def scale_rowwise(a: Tensor, v: Tensor) -> Tensor:
    """Multiply slice i along the leading axis of `a` by v[i]."""
    if v.data.ndim != 1 or v.shape[0] != a.shape[0]:
        raise ShapeError(f"scale_rowwise: vector {v.shape} does not match leading dim of {a.shape}")
    vr = v.data.reshape((a.shape[0],) + (1,) * (a.data.ndim - 1))
    out = a.data * vr

    def backward(g):
        grads = []
        if a._track:
            grads.append((a, g * vr))
        if v._track:
            axes = tuple(range(1, a.data.ndim))
            grads.append((v, (g * a.data).sum(axis=axes) if axes else g * a.data))
        return grads

    return _make(out, (a, v), backward)


def mul_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Multiply every row of x [B,D] elementwise by v [D]."""
    if x.data.ndim != 2 or v.data.ndim != 1 or x.shape[1] != v.shape[0]:
        raise ShapeError(f"mul_rowvec: {x.shape} vs {v.shape}")
    out = x.data * v.data

    def backward(g):
        grads = []
        if x._track:
            grads.append((x, g * v.data))
        if v._track:
            grads.append((v, (g * x.data).sum(axis=0)))
        return grads

    return _make(out, (x, v), backward)


def scale_channels(x: Tensor, s: Tensor) -> Tensor:
    """Scale channel c of x [B,C,H,W] by s[c] (shared) or s[b,c] (per sample)."""
    if x.data.ndim != 4:
        raise ShapeError(f"scale_channels expects 4-d input, got {x.shape}")
    B, C = x.shape[0], x.shape[1]
    if s.data.ndim == 1:
        if s.shape[0] != C:
            raise ShapeError(f"scale_channels: {s.shape} vs {C} channels")
        sr = s.data.reshape(1, C, 1, 1)
    elif s.data.ndim == 2:
        if s.shape != (B, C):
            raise ShapeError(f"scale_channels: {s.shape} vs batch/channels ({B},{C})")
        sr = s.data.reshape(B, C, 1, 1)
    else:
        raise ShapeError(f"scale_channels: scale must be 1-d or 2-d, got {s.shape}")
    out = x.data * sr

    def backward(g):
        grads = []
        if x._track:
            grads.append((x, g * sr))
        if s._track:
            if s.data.ndim == 1:
                grads.append((s, (g * x.data).sum(axis=(0, 2, 3))))
            else:
                grads.append((s, (g * x.data).sum(axis=(2, 3))))
        return grads

    return _make(out, (x, s), backward)


def affine_outer(omega: np.ndarray, nu: Tensor, c: Tensor) -> Tensor:
    """out[b, j] = omega[b] * nu[j] + c[j] for a per-sample condition vector."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 1 or nu.data.ndim != 1 or nu.shape != c.shape:
        raise ShapeError(f"affine_outer: omega {omega.shape}, nu {nu.shape}, c {c.shape}")
    out = omega[:, None] * nu.data[None, :] + c.data[None, :]

    def backward(g):
        grads = []
        if nu._track:
            grads.append((nu, omega @ g))
        if c._track:
            grads.append((c, g.sum(axis=0)))
        return grads

    return _make(out, (nu, c), backward)


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: [(x, g * mask)])


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: [(x, g * (1.0 - out * out))])


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _make(out, (x,), lambda g: [(x, g * out * (1.0 - out))])


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis; output rows sum to 1."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        return [(x, out * (g - inner))]

    return _make(out, (x,), backward)


ACTIVATIONS = ("linear", "relu", "tanh", "sigmoid", "softmax")


def activation(kind: str, x: Tensor) -> Tensor:
    if kind == "linear":
        return x
    if kind == "relu":
        return relu(x)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "softmax":
        return softmax(x)
    raise ContractError(f"unknown activation kind: {kind!r}")


# ---------------------------------------------------------------------------
# reductions & reshaping


def tsum(x: Tensor) -> Tensor:
    return _make(np.asarray(x.data.sum()), (x,), lambda g: [(x, np.broadcast_to(g, x.shape).copy())])


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    return _make(np.asarray(x.data.mean()), (x,), lambda g: [(x, np.broadcast_to(g / n, x.shape).copy())])


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != x.data.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    return _make(x.data.reshape(shape), (x,), lambda g: [(x, g.reshape(x.shape))])


# ---------------------------------------------------------------------------
# convolution


def conv2d(x: Tensor, k: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Batched cross-correlation: x [B,Cin,H,W], k [Cout,Cin,KH,KW], b [Cout].

    Direct computation via a loop over kernel offsets; no im2col.
    """
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ShapeError(f"conv2d: input {x.shape}, kernels {k.shape}")
    B, Cin, H, W = x.shape
    Cout, KCin, KH, KW = k.shape
    if KCin != Cin:
        raise ShapeError(f"conv2d: input channels {Cin} vs kernel channels {KCin}")
    if b.shape != (Cout,):
        raise ShapeError(f"conv2d: bias {b.shape} vs {Cout} output channels")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d: bad stride/padding ({stride}, {padding})")
    if (H + 2 * padding - KH) % stride or (W + 2 * padding - KW) % stride:
        raise ConfigurationError(
            f"conv2d: non-integral output size for input {H}x{W}, "
            f"kernel {KH}x{KW}, stride {stride}, padding {padding}"
        )
    Ho = (H + 2 * padding - KH) // stride + 1
    Wo = (W + 2 * padding - KW) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ConfigurationError(f"conv2d: empty output ({Ho}x{Wo})")

    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    else:
        xp = x.data
    out = np.empty((B, Cout, Ho, Wo))
    out[:] = b.data.reshape(1, Cout, 1, 1)
    kd = k.data
    for ki in range(KH):
        for kj in range(KW):
            patch = xp[:, :, ki : ki + stride * Ho : stride, kj : kj + stride * Wo : stride]
            out += np.einsum("bchw,oc->bohw", patch, kd[:, :, ki, kj])

    def backward(g):
        grads = []
        if x._track:
            dxp = np.zeros_like(xp)
            for ki in range(KH):
                for kj in range(KW):
                    dxp[:, :, ki : ki + stride * Ho : stride, kj : kj + stride * Wo : stride] += np.einsum(
                        "bohw,oc->bchw", g, kd[:, :, ki, kj]
                    )
            dx = dxp[:, :, padding : padding + H, padding : padding + W] if padding else dxp
            grads.append((x, dx))
        if k._track:
            dk = np.zeros_like(kd)
            for ki in range(KH):
                for kj in range(KW):
                    patch = xp[:, :, ki : ki + stride * Ho : stride, kj : kj + stride * Wo : stride]
                    dk[:, :, ki, kj] = np.einsum("bohw,bchw->oc", g, patch)
            grads.append((k, dk))
        if b._track:
            grads.append((b, g.sum(axis=(0, 2, 3))))
        return grads

    return _make(out, (x, k, b), backward)


def upsample_zero(x: Tensor, factor: int) -> Tensor:
    """Fractional-stride upsampling: insert zeros so pixel i lands at i*factor."""
    if x.data.ndim != 4:
        raise ShapeError(f"upsample_zero expects 4-d input, got {x.shape}")
    if factor < 1:
        raise ConfigurationError(f"upsample_zero: factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    B, C, H, W = x.shape
    out = np.zeros((B, C, H * factor, W * factor))
    out[:, :, ::factor, ::factor] = x.data
    return _make(out, (x,), lambda g: [(x, g[:, :, ::factor, ::factor].copy())])


# ---------------------------------------------------------------------------
# gradient oracle


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between tape gradients and central differences.

    `f` must rebuild the forward pass from scratch on every call and be
    deterministic (freeze any RNG before calling).
    """
    for p in params:
        p.zero_grad()
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    max_err = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            denom = max(abs(aflat[i]), abs(numeric), 1e-8)
            max_err = max(max_err, abs(aflat[i] - numeric) / denom)
    return max_err
