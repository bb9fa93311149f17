"""Small dense-tensor reverse-mode autodiff on top of numpy.

Every op returns a new :class:`Tensor`. When at least one input tracks
gradients the op records a closure that pushes the output gradient back
into its inputs; :meth:`Tensor.backward` runs those closures in reverse
topological order. Untracked inputs cost nothing beyond the forward numpy
call, which keeps target-network and acting passes cheap.
"""

from __future__ import annotations

import math
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from coex.errors import ConfigError, NumericalError

__all__ = [
    "clip_grad_norm",
    "Tensor",
    "ParamSet",
    "SGD",
    "Adam",
    "affine",
    "activation",
    "relu",
    "elu",
    "abs_",
    "add",
    "sub",
    "mul",
    "sum_",
    "reshape",
    "gather",
    "batched_mv",
    "mse",
    "soft_update",
    "save_params",
    "load_params",
]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def values(self):
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    def item(self):
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            else:
                self.grad.fill(0.0)

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ConfigError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        _accumulate(self, np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    if any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True, _parents=parents)
        out._backward = backward
        return out
    return Tensor(data)


def _accumulate(t, g):
    # intermediates allocate their gradient on first use; parameters keep
    # theirs so packed views stay valid
    if t.requires_grad:
        if t.grad is None:
            t.grad = np.array(g, dtype=np.float64)
        else:
            t.grad += g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def affine(x, W, b):
    """``x @ W + b`` for a batch of row vectors."""
    x, W, b = _as_tensor(x), _as_tensor(W), _as_tensor(b)
    if x.data.shape[-1] != W.data.shape[0] or W.data.ndim != 2 or b.data.shape != (W.data.shape[1],):
        raise ConfigError(f"affine shape mismatch: x{x.shape} W{W.shape} b{b.shape}")
    xd, Wd = x.data, W.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        if W.requires_grad:
            _accumulate(W, xd.reshape(-1, xd.shape[-1]).T @ g2)
        if b.requires_grad:
            _accumulate(b, g2.sum(axis=0))
        if x.requires_grad:
            _accumulate(x, g @ Wd.T)

    return _make(xd @ Wd + b.data, (x, W, b), backward)


def relu(x):
    x = _as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: _accumulate(x, g * mask))


def elu(x, alpha=1.0):
    x = _as_tensor(x)
    neg = alpha * np.expm1(np.minimum(x.data, 0.0))
    pos = x.data > 0
    out = np.where(pos, x.data, neg)
    return _make(out, (x,), lambda g: _accumulate(x, g * np.where(pos, 1.0, neg + alpha)))


def abs_(x):
    # np.sign(0) == 0 gives the zero subgradient at the kink.
    x = _as_tensor(x)
    sign = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: _accumulate(x, g * sign))


_ACTIVATIONS = {"relu": relu, "elu": elu, "abs": abs_}


def activation(x, kind):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}") from None
    return fn(x)


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * bd, a.shape))
        _accumulate(b, _unbroadcast(g * ad, b.shape))

    return _make(ad * bd, (a, b), backward)


def sum_(x, axis=None):
    x = _as_tensor(x)
    shape = x.shape

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, shape))

    return _make(x.data.sum(axis=axis), (x,), backward)


def reshape(x, shape):
    x = _as_tensor(x)
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: _accumulate(x, g.reshape(old)))


def gather(x, index):
    """Pick ``x[..., index[...]]`` along the last axis (chosen-action values)."""
    x = _as_tensor(x)
    idx = np.asarray(index, dtype=np.intp)[..., None]
    if idx.shape[:-1] != x.shape[:-1]:
        raise ConfigError(f"gather index shape {idx.shape[:-1]} does not match {x.shape[:-1]}")

    def backward(g):
        if x.requires_grad:
            full = np.zeros(x.shape)
            np.put_along_axis(full, idx, g[..., None], -1)
            _accumulate(x, full)

    return _make(np.take_along_axis(x.data, idx, -1)[..., 0], (x,), backward)


def batched_mv(v, M):
    """Per-row vector-matrix product: ``out[b] = v[b] @ M[b]``."""
    v, M = _as_tensor(v), _as_tensor(M)
    if v.data.ndim != 2 or M.data.ndim != 3 or M.shape[:2] != v.shape:
        raise ConfigError(f"batched_mv shape mismatch: v{v.shape} M{M.shape}")
    vd, Md = v.data, M.data

    def backward(g):
        if v.requires_grad:
            _accumulate(v, np.einsum("be,bne->bn", g, Md))
        if M.requires_grad:
            _accumulate(M, vd[:, :, None] * g[:, None, :])

    return _make(np.einsum("bn,bne->be", vd, Md), (v, M), backward)


def mse(pred, target):
    """Mean squared error; ``target`` is treated as a constant."""
    pred = _as_tensor(pred)
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ConfigError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    n = diff.size
    return _make(np.mean(diff * diff), (pred,), lambda g: _accumulate(pred, g * 2.0 * diff / n))


class ParamSet:
    """Named parameter tensors plus per-parameter optimizer moments.

    :meth:`pack` moves all tensors into one contiguous buffer so optimizer
    steps and Polyak averaging run as a handful of vector operations.
    """

    def __init__(self, tensors=None):
        self.tensors = OrderedDict()
        self.moments = {}
        self.flat = None
        self.flat_grad = None
        for name, value in (tensors or {}).items():
            self.add(name, value)

    def add(self, name, value):
        if name in self.tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = value if isinstance(value, Tensor) else Tensor(value, requires_grad=True)
        t.requires_grad = True
        t.zero_grad()
        self.tensors[name] = t
        self.flat = self.flat_grad = None
        return t

    def pack(self):
        """Rebind every tensor's data and grad as views of two flat buffers."""
        sizes = [t.data.size for t in self.tensors.values()]
        data, grad = np.empty(sum(sizes)), np.zeros(sum(sizes))
        offset = 0
        for t, size in zip(self.tensors.values(), sizes):
            shape = t.data.shape
            data[offset : offset + size] = t.data.reshape(-1)
            t.data = data[offset : offset + size].reshape(shape)
            t.grad = grad[offset : offset + size].reshape(shape)
            offset += size
        self.flat, self.flat_grad = data, grad
        self.moments.clear()
        return self

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors.items())

    def __len__(self):
        return len(self.tensors)

    def names(self):
        return list(self.tensors)

    def zero_grad(self):
        if self.flat_grad is not None:
            self.flat_grad.fill(0.0)
            return
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self):
        out = ParamSet({k: Tensor(v.data.copy(), requires_grad=True) for k, v in self})
        return out.pack() if self.flat is not None else out

    def load_from(self, other):
        for name, t in self:
            t.data[...] = other[name].data

    def update(self, other):
        """Merge another set's tensors (shared, not copied) into this one."""
        for name, t in other:
            if name in self.tensors:
                raise ConfigError(f"duplicate parameter name {name!r}")
            self.tensors[name] = t
        self.flat = self.flat_grad = None
        return self

    def _chunks(self):
        """(name, data, grad) triples; a single flat one when packed."""
        if self.flat is not None:
            return [("", self.flat, self.flat_grad)]
        return [(name, t.data, t.grad) for name, t in self]


def _check_finite(params):
    if params.flat_grad is not None and np.isfinite(params.flat_grad).all():
        return
    for name, t in params:
        if not np.all(np.isfinite(t.grad)):
            raise NumericalError(f"non-finite gradient in parameter {name!r}")


def clip_grad_norm(params, max_norm):
    """Rescale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping; ``max_norm <= 0`` only measures it.
    """
    _check_finite(params)
    total = math.sqrt(sum(float(np.dot(g.reshape(-1), g.reshape(-1))) for _, _, g in params._chunks()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for _, _, grad in params._chunks():
            grad *= scale
    return total


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params):
        _check_finite(params)
        for _, data, grad in params._chunks():
            data -= self.lr * grad


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0

    def step(self, params):
        _check_finite(params)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1.0 - b1**self.t)
        root_corr = 1.0 / np.sqrt(1.0 - b2**self.t)
        for name, data, grad in params._chunks():
            if name not in params.moments:
                params.moments[name] = (np.zeros_like(data), np.zeros_like(data), np.empty_like(data))
            m, v, tmp = params.moments[name]
            # in-place updates through one scratch buffer; no per-step allocation
            m *= b1
            np.multiply(grad, 1.0 - b1, out=tmp)
            m += tmp
            v *= b2
            np.multiply(grad, grad, out=tmp)
            tmp *= 1.0 - b2
            v += tmp
            # lr * mhat / (sqrt(vhat) + eps)
            np.sqrt(v, out=tmp)
            tmp *= root_corr
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= step_size
            data -= tmp


def soft_update(target, online, tau):
    """Polyak averaging ``target <- tau * online + (1 - tau) * target``."""
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must lie in [0, 1], got {tau}")
    if target.flat is not None and online.flat is not None and target.flat.shape == online.flat.shape:
        pairs = [(target.flat, online.flat)]
    else:
        pairs = []
        for name, t in target:
            src = online[name].data
            if src.shape != t.data.shape:
                raise ConfigError(f"soft_update shape mismatch for {name!r}")
            pairs.append((t.data, src))
    for dst, src in pairs:
        dst *= 1.0 - tau
        dst += tau * src
    return target


MAGIC = b"COEX"
VERSION = 1


def save_params(path, params):
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, t in params:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_params(path):
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    params = ParamSet()
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}Q", blob, pos)
        pos += 8 * rank
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        params.add(name, data.astype(np.float64))
    return params


def init_linear(rng, fan_in, fan_out, zero=False):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    if zero:
        return np.zeros((fan_in, fan_out)), np.zeros(fan_out)
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)), rng.uniform(-bound, bound, fan_out)
