"""Dense tensors with reverse-mode automatic differentiation.

Training runs in float32; gradient verification promotes to float64.
Primitives record onto the computation graph only when an input requires
gradients, so pure inference pays no tape overhead. There is no hidden
global state: randomness enters exclusively through ``seeded_init`` and
the tape is reconstructed from tensor parentage at ``backward`` time.
"""

from __future__ import annotations

import math

import numpy as np


class NumericError(RuntimeError):
    """A non-finite value surfaced where finite numbers are required."""


class TapeNode:
    """Record of one primitive: its input tensors and a gradient closure.

    ``grad_fn(grad_out)`` returns one gradient array (or None) per input.
    """

    __slots__ = ("inputs", "grad_fn")

    def __init__(self, inputs, grad_fn):
        self.inputs = inputs
        self.grad_fn = grad_fn


class Tensor:
    """Dense numeric array carrying an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


def _result(data, inputs, grad_fn) -> Tensor:
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.op = TapeNode(tuple(inputs), grad_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tape:
    """Topologically ordered record of the ops reachable from a root tensor."""

    __slots__ = ("nodes",)

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, emitted = stack.pop()
            if emitted:
                order.append(t)
                continue
            if t.op is None or id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for parent in t.op.inputs:
                stack.append((parent, False))
        return cls(order)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` for every requires_grad tensor reachable from ``loss``.

    Gradients accumulate across calls until the owning tensor is zeroed.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.shape}")
    if loss.op is None:
        raise ValueError("loss is detached: no recorded operation produced it")
    order = Tape.trace(loss).nodes
    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        if t.grad is None:
            t.grad = np.zeros_like(t.data)
        t.grad = t.grad + g
        for parent, pg in zip(t.op.inputs, t.op.grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.op is None:
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.data)
                parent.grad = parent.grad + pg
            else:
                prev = pending.get(id(parent))
                pending[id(parent)] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------------
# primitive suite


def add(a: Tensor, b: Tensor) -> Tensor:
    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), grad_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def grad_fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), grad_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""

    def grad_fn(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), grad_fn)


def div(a: Tensor, b: Tensor) -> Tensor:
    def grad_fn(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return _result(a.data / b.data, (a, b), grad_fn)


def scalar_mul(t: Tensor, c: float) -> Tensor:
    def grad_fn(g):
        return (g * c,)

    return _result(t.data * c, (t,), grad_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def grad_fn(g):
        return g @ b.data.T, a.data.T @ g

    return _result(a.data @ b.data, (a, b), grad_fn)


def relu(t: Tensor) -> Tensor:
    mask = t.data > 0

    def grad_fn(g):
        return (g * mask,)

    return _result(np.where(mask, t.data, 0), (t,), grad_fn)


def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    mask = t.data > 0

    def grad_fn(g):
        return (np.where(mask, g, g * slope),)

    return _result(np.where(mask, t.data, t.data * slope), (t,), grad_fn)


def sigmoid(t: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-t.data))

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return _result(out, (t,), grad_fn)


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _result(out, (t,), grad_fn)


def log(t: Tensor) -> Tensor:
    def grad_fn(g):
        return (g / t.data,)

    return _result(np.log(t.data), (t,), grad_fn)


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)

    def grad_fn(g):
        return (g * out,)

    return _result(out, (t,), grad_fn)


def row_softmax(t: Tensor) -> Tensor:
    """Softmax over the last axis, shifted for stability."""
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result(out, (t,), grad_fn)


def row_log_softmax(t: Tensor) -> Tensor:
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def grad_fn(g):
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _result(out, (t,), grad_fn)


def mean(t: Tensor) -> Tensor:
    n = t.data.size

    def grad_fn(g):
        return (np.full_like(t.data, float(g) / n),)

    return _result(np.asarray(t.data.mean(dtype=t.data.dtype)), (t,), grad_fn)


def total_sum(t: Tensor) -> Tensor:
    def grad_fn(g):
        return (np.full_like(t.data, float(g)),)

    return _result(np.asarray(t.data.sum(dtype=t.data.dtype)), (t,), grad_fn)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, grad_fn)


def gather_rows(t: Tensor, index) -> Tensor:
    """Select rows ``t[index]``; duplicate indices accumulate on backward."""
    index = np.asarray(index, dtype=np.int64)

    def grad_fn(g):
        out = np.zeros_like(t.data)
        np.add.at(out, index, g)
        return (out,)

    return _result(t.data[index], (t,), grad_fn)


def scatter_add_rows(t: Tensor, index, num_rows: int) -> Tensor:
    """Sum rows of ``t`` into ``num_rows`` buckets given by ``index``."""
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros((num_rows,) + t.data.shape[1:], dtype=t.data.dtype)
    np.add.at(out, index, t.data)

    def grad_fn(g):
        return (g[index],)

    return _result(out, (t,), grad_fn)


def pick_per_row(t: Tensor, cols) -> Tensor:
    """Select one entry per row: ``t[i, cols[i]]``."""
    cols = np.asarray(cols, dtype=np.int64)
    rows = np.arange(t.data.shape[0])

    def grad_fn(g):
        out = np.zeros_like(t.data)
        np.add.at(out, (rows, cols), g)
        return (out,)

    return _result(t.data[rows, cols], (t,), grad_fn)


def reshape(t: Tensor, shape) -> Tensor:
    def grad_fn(g):
        return (g.reshape(t.data.shape),)

    return _result(t.data.reshape(shape), (t,), grad_fn)


def transpose(t: Tensor) -> Tensor:
    if t.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got shape {t.shape}")

    def grad_fn(g):
        return (g.T,)

    return _result(t.data.T.copy(), (t,), grad_fn)


def l2_normalize_rows(t: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; all-zero rows pass through unchanged."""
    norms = np.linalg.norm(t.data, axis=-1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    out = t.data / safe

    def grad_fn(g):
        proj = (g * out).sum(axis=-1, keepdims=True)
        gr = (g - out * proj) / safe
        return (np.where(norms > 0, gr, 0.0),)

    return _result(out, (t,), grad_fn)


def pair_rotate(x: Tensor, angles: Tensor) -> Tensor:
    """Rotate adjacent column pairs of ``x`` by per-pair angles.

    Pair ``j`` is columns ``(2j, 2j+1)`` read as (real, imaginary); the pair
    norm is preserved exactly. ``angles`` has half the trailing width of
    ``x`` and broadcasts over leading axes.
    """
    if x.data.shape[-1] % 2 != 0:
        raise ValueError(f"pair_rotate needs an even last dimension, got {x.shape}")
    if angles.data.shape[-1] * 2 != x.data.shape[-1]:
        raise ValueError(
            f"angles last dim {angles.data.shape[-1]} does not pair with {x.shape}"
        )
    a = x.data[..., 0::2]
    b = x.data[..., 1::2]
    c = np.cos(angles.data)
    s = np.sin(angles.data)
    out = np.empty_like(x.data)
    out[..., 0::2] = a * c - b * s
    out[..., 1::2] = a * s + b * c

    def grad_fn(g):
        ga_out = g[..., 0::2]
        gb_out = g[..., 1::2]
        gx = np.empty_like(x.data)
        gx[..., 0::2] = ga_out * c + gb_out * s
        gx[..., 1::2] = -ga_out * s + gb_out * c
        gth = ga_out * (-a * s - b * c) + gb_out * (a * c - b * s)
        return gx, _unbroadcast(gth, angles.data.shape)

    return _result(out, (x, angles), grad_fn)


# ---------------------------------------------------------------------------
# verification and initialization


def grad_check(f, x, eps: float = 1e-5) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` maps a tensor to a scalar tensor and is evaluated in float64.
    The relative error is ``|analytic - numeric| / max(1, |numeric|)``,
    maximized over elements.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    probe = Tensor(base.copy(), requires_grad=True)
    out = f(probe)
    if out.data.size != 1:
        raise ValueError("grad_check target must return a scalar")
    backward(out)
    analytic = probe.grad.reshape(-1).astype(np.float64)
    flat = base.reshape(-1)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += eps
        fp = f(Tensor(bumped.reshape(base.shape))).item()
        bumped[i] = flat[i] - eps
        fm = f(Tensor(bumped.reshape(base.shape))).item()
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NumericError("non-finite value during finite-difference probe")
        numeric[i] = (fp - fm) / (2.0 * eps)
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0


def seeded_init(shape, scheme: str, seed: int, dtype=np.float32,
                requires_grad: bool = False) -> Tensor:
    """Deterministic parameter initialization from an explicit seed.

    Schemes: ``glorot-uniform`` (bound sqrt(6/(fan_in+fan_out))), ``zeros``,
    and ``unit-phases`` (angles uniform in [0, 2*pi)).
    """
    shape = tuple(int(s) for s in shape)
    if not shape:
        raise ValueError("shape must be non-empty")
    rng = np.random.Generator(np.random.PCG64(seed))
    if scheme == "zeros":
        data = np.zeros(shape, dtype=dtype)
    elif scheme == "glorot-uniform":
        if len(shape) >= 2:
            fan_in, fan_out = shape[-2], shape[-1]
        else:
            fan_in = fan_out = shape[0]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    elif scheme == "unit-phases":
        data = rng.uniform(0.0, 2.0 * math.pi, size=shape).astype(dtype)
    else:
        raise ValueError(f"unknown init scheme: {scheme!r}")
    return Tensor(data, requires_grad=requires_grad)


class AdamState:
    """First/second moment buffers and step counter for one parameter set."""

    __slots__ = ("m", "v", "step")

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0


class Adam:
    """Bias-corrected Adam over a name -> Tensor parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self) -> None:
        self.state.step += 1
        t = self.state.step
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(p.data.dtype, copy=False)
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient for parameter {name!r}")
            m = self.state.m.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            else:
                v = self.state.v[name]
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * (g * g)
            self.state.m[name] = m
            self.state.v[name] = v
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
