"""Dense float64 tensors with a reverse-mode autodiff tape.

The op vocabulary is deliberately small: exactly the layers the fusion
networks use (2d convolution, batch normalization, leaky ReLU, tanh,
elementwise arithmetic, channel concat) plus the reductions the training
losses need. No broadcasting, no GPU, no graph rewriting.

A tape (:class:`Graph`) is opened as a context manager around a forward
pass. Ops executed inside record nodes; :func:`backward` replays the tape
for an arbitrary seed. One retained tape supports many backward passes, so
per-pixel saliency queries pay for a single forward only once.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Dimension mismatch; ``axis`` names the offending axis."""

    def __init__(self, message: str, axis: str | None = None):
        super().__init__(message)
        self.axis = axis


class NoGraphError(RuntimeError):
    """Backward was requested on a tensor with no recorded graph."""


class DegenerateBatchError(ValueError):
    """Batch normalization over zero elements per channel."""


class PixelIndexError(ValueError):
    """Pixel index outside 1..n."""


@dataclass(frozen=True)
class ImageShape:
    """Row-major pixel addressing for a single-channel image.

    Pixel indices are 1-based: i in {1..n} with n = height * width,
    matching the convention used throughout the public API.
    """

    height: int
    width: int

    @property
    def n(self) -> int:
        return self.height * self.width

    def check_index(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise PixelIndexError(f"pixel index {i} outside 1..{self.n}")
        return i

    def to_rc(self, i: int) -> tuple[int, int]:
        self.check_index(i)
        return divmod(i - 1, self.width)

    def to_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise PixelIndexError(f"pixel ({row},{col}) outside {self.height}x{self.width}")
        return row * self.width + col + 1


class Tensor:
    """A dense float64 array, optionally wired into an autodiff graph.

    ``requires_grad`` on a leaf marks it as a differentiation target; on an
    op output it means some ancestor leaf is a target. NaN/Inf data is
    rejected at construction.
    """

    __slots__ = ("data", "requires_grad", "_graph", "_node")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite (no NaN/Inf)")
        self.data = arr
        self.requires_grad = requires_grad
        self._graph = None
        self._node = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # fast path for op outputs; finiteness is the ops' responsibility
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t._graph = None
        t._node = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same data, no grad tracking. Shares the underlying array."""
        t = Tensor._wrap(self.data)
        return t

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Node:
    """One executed op on the tape."""

    __slots__ = ("op", "parents", "backward_fn")

    def __init__(self, op: str, parents: tuple, backward_fn):
        self.op = op
        self.parents = parents
        self.backward_fn = backward_fn


_ACTIVE = threading.local()


def _active_graph():
    stack = getattr(_ACTIVE, "stack", None)
    return stack[-1] if stack else None


class Graph:
    """Append-only op tape; insertion order is a topological order.

    Construction is single-writer (use one thread inside the ``with``
    block). After the forward pass the tape is read-only, and concurrent
    :func:`backward` calls with distinct seeds are safe: each owns its
    private gradient buffers.
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self._leaf_ids: dict[int, int] = {}
        self._leaf_tensors: list[Tensor] = []  # strong refs keep id() stable
        self.grad_leaves: list[tuple[Tensor, int]] = []
        self.backward_calls = 0

    def __enter__(self) -> "Graph":
        stack = getattr(_ACTIVE, "stack", None)
        if stack is None:
            stack = _ACTIVE.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.stack.pop()
        return False

    def _leaf(self, t: Tensor) -> int:
        nid = self._leaf_ids.get(id(t))
        if nid is None:
            nid = len(self.nodes)
            self.nodes.append(Node("leaf", (), None))
            self._leaf_ids[id(t)] = nid
            self._leaf_tensors.append(t)
            if t.requires_grad:
                self.grad_leaves.append((t, nid))
        return nid

    def _node_id(self, t: Tensor) -> int:
        if t._graph is self:
            return t._node
        return self._leaf(t)

    def _emit(self, data: np.ndarray, op: str, parents: tuple, backward_fn) -> Tensor:
        nid = len(self.nodes)
        self.nodes.append(Node(op, parents, backward_fn))
        out = Tensor._wrap(data)
        out.requires_grad = True
        out._graph = self
        out._node = nid
        return out


def _accumulate(grads: dict, nid: int, value: np.ndarray):
    prev = grads.get(nid)
    # never mutate stored arrays in place: ops may hand out shared buffers
    grads[nid] = value if prev is None else prev + value


def _conv_out(xd: np.ndarray, wmat: np.ndarray, k: int, bias: np.ndarray | None,
              chunk_bytes: int = 96 << 20) -> np.ndarray:
    """stride-1 same-padding cross-correlation via chunked im2col + GEMM."""
    B, cin, H, W = xd.shape
    cout = wmat.shape[0]
    p = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    out = np.empty((B, cout, H, W), dtype=np.float64)
    per_item = cin * k * k * H * W * 8
    step = max(1, chunk_bytes // max(per_item, 1))
    for s in range(0, B, step):
        e = min(B, s + step)
        win = sliding_window_view(xp[s:e], (k, k), axis=(2, 3))  # (b,cin,H,W,k,k)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape((e - s) * H * W, cin * k * k)
        prod = cols @ wmat.T  # (b*H*W, cout)
        out[s:e] = prod.reshape(e - s, H, W, cout).transpose(0, 3, 1, 2)
    if bias is not None:
        out += bias.reshape(1, cout, 1, 1)
    return out


def _conv_weight_grad(xd: np.ndarray, gout: np.ndarray, k: int,
                      chunk_bytes: int = 96 << 20) -> np.ndarray:
    B, cin, H, W = xd.shape
    cout = gout.shape[1]
    p = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p))) if p else xd
    gw = np.zeros((cout, cin * k * k), dtype=np.float64)
    per_item = cin * k * k * H * W * 8
    step = max(1, chunk_bytes // max(per_item, 1))
    for s in range(0, B, step):
        e = min(B, s + step)
        win = sliding_window_view(xp[s:e], (k, k), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape((e - s) * H * W, cin * k * k)
        gmat = gout[s:e].transpose(0, 2, 3, 1).reshape((e - s) * H * W, cout)
        gw += gmat.T @ cols
    return gw.reshape(cout, cin, k, k)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """2d convolution, stride 1, zero padding (k-1)/2: spatial shape is kept.

    x: (B, Cin, H, W); weight: (Cout, Cin, k, k) with k odd; bias: (Cout,).
    """
    xd, wd = x.data, weight.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d input must be 4d (B,C,H,W), got {xd.shape}", axis="rank")
    if wd.ndim != 4 or wd.shape[2] != wd.shape[3]:
        raise ShapeError(f"conv2d kernel must be (Cout,Cin,k,k), got {wd.shape}", axis="kernel")
    k = wd.shape[2]
    if k % 2 == 0:
        raise ShapeError(f"kernel size {k} must be odd", axis="kernel")
    if wd.shape[1] != xd.shape[1]:
        raise ShapeError(
            f"kernel expects {wd.shape[1]} input channels, input has {xd.shape[1]}",
            axis="channels")
    bd = bias.data if bias is not None else None
    if bd is not None and bd.shape != (wd.shape[0],):
        raise ShapeError(f"bias shape {bd.shape} != ({wd.shape[0]},)", axis="channels")

    cout = wd.shape[0]
    wmat = wd.reshape(cout, -1)
    out = _conv_out(xd, wmat, k, bd)

    g = _active_graph()
    track_x = x.requires_grad
    track_w = weight.requires_grad
    track_b = bias is not None and bias.requires_grad
    if g is None or not (track_x or track_w or track_b):
        return Tensor._wrap(out)

    xid = g._node_id(x) if track_x else None
    wid = g._node_id(weight) if track_w else None
    bid = g._node_id(bias) if track_b else None

    def bwd(gout, acc):
        if xid is not None:
            # dL/dx = same-padding correlation with the flipped, transposed kernel
            wt = wd.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
            _accumulate(acc, xid, _conv_out(gout, wt.reshape(wd.shape[1], -1), k, None))
        if wid is not None:
            _accumulate(acc, wid, _conv_weight_grad(xd, gout, k))
        if bid is not None:
            _accumulate(acc, bid, gout.sum(axis=(0, 2, 3)))

    parents = tuple(i for i in (xid, wid, bid) if i is not None)
    return g._emit(out, "conv2d", parents, bwd)


class RunningStats:
    """Per-channel mean/var buffers for batch norm in eval mode."""

    __slots__ = ("mean", "var")

    def __init__(self, channels: int):
        self.mean = np.zeros(channels, dtype=np.float64)
        self.var = np.ones(channels, dtype=np.float64)


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor,
               running: RunningStats | None = None, *,
               eps: float = 1e-5, training: bool = False,
               momentum: float = 0.1) -> Tensor:
    """Per-channel batch normalization with affine scale/shift.

    Train mode normalizes with batch statistics (biased variance) and
    updates ``running`` by exponential moving average; eval mode requires
    ``running`` and treats it as constant.
    """
    if eps <= 0:
        raise ValueError("batch_norm eps must be positive")
    xd = x.data
    if xd.ndim != 4:
        raise ShapeError(f"batch_norm input must be 4d, got {xd.shape}", axis="rank")
    B, C, H, W = xd.shape
    count = B * H * W
    if count == 0:
        raise DegenerateBatchError("batch_norm over a zero-element channel")
    if gamma.data.shape != (C,) or beta.data.shape != (C,):
        raise ShapeError(f"gamma/beta must have shape ({C},)", axis="channels")

    gd, bd = gamma.data, beta.data
    if training:
        mu = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        if running is not None:
            running.mean = (1.0 - momentum) * running.mean + momentum * mu
            running.var = (1.0 - momentum) * running.var + momentum * var
    else:
        if running is None:
            raise ValueError("batch_norm eval mode requires running stats")
        mu, var = running.mean, running.var

    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu.reshape(1, C, 1, 1)) * inv.reshape(1, C, 1, 1)
    out = gd.reshape(1, C, 1, 1) * xhat + bd.reshape(1, C, 1, 1)

    g = _active_graph()
    track_x, track_g, track_b = x.requires_grad, gamma.requires_grad, beta.requires_grad
    if g is None or not (track_x or track_g or track_b):
        return Tensor._wrap(out)

    xid = g._node_id(x) if track_x else None
    gid = g._node_id(gamma) if track_g else None
    bid = g._node_id(beta) if track_b else None
    inv_col = inv.reshape(1, C, 1, 1)
    g_col = gd.reshape(1, C, 1, 1)

    def bwd(gout, acc):
        if xid is not None:
            if training:
                gxhat = gout * g_col
                m1 = gxhat.mean(axis=(0, 2, 3)).reshape(1, C, 1, 1)
                m2 = (gxhat * xhat).mean(axis=(0, 2, 3)).reshape(1, C, 1, 1)
                _accumulate(acc, xid, inv_col * (gxhat - m1 - xhat * m2))
            else:
                _accumulate(acc, xid, gout * g_col * inv_col)
        if gid is not None:
            _accumulate(acc, gid, (gout * xhat).sum(axis=(0, 2, 3)))
        if bid is not None:
            _accumulate(acc, bid, gout.sum(axis=(0, 2, 3)))

    parents = tuple(i for i in (xid, gid, bid) if i is not None)
    return g._emit(out, "batch_norm", parents, bwd)


def _unary(x: Tensor, op: str, out: np.ndarray, grad_fn) -> Tensor:
    g = _active_graph()
    if g is None or not x.requires_grad:
        return Tensor._wrap(out)
    xid = g._node_id(x)

    def bwd(gout, acc):
        _accumulate(acc, xid, grad_fn(gout))

    return g._emit(out, op, (xid,), bwd)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data >= 0
    out = np.where(mask, x.data, slope * x.data)
    return _unary(x, "leaky_relu", out, lambda gout: np.where(mask, gout, slope * gout))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _unary(x, "tanh", y, lambda gout: gout * (1.0 - y * y))


def scale_shift(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """Elementwise a*x + b with scalar a, b."""
    out = scale * x.data + shift
    return _unary(x, "scale_shift", out, lambda gout: scale * gout)


def crop(x: Tensor, margin: int) -> Tensor:
    """Drop ``margin`` rows/cols from each spatial border of (B,C,H,W)."""
    if margin < 0:
        raise ValueError(f"crop margin must be >= 0, got {margin}")
    if margin == 0:
        return x
    if x.data.ndim != 4:
        raise ShapeError(f"crop expects a 4d tensor, got {x.data.shape}", axis="rank")
    B, C, H, W = x.data.shape
    if 2 * margin >= H or 2 * margin >= W:
        raise ShapeError(f"crop margin {margin} too large for {H}x{W}", axis="spatial")
    out = np.ascontiguousarray(x.data[:, :, margin:H - margin, margin:W - margin])

    def grad_fn(gout):
        full = np.zeros((B, C, H, W), dtype=np.float64)
        full[:, :, margin:H - margin, margin:W - margin] = gout
        return full

    return _unary(x, "crop", out, grad_fn)


def mean_all(x: Tensor) -> Tensor:
    """Mean over every element; returns a scalar tensor (shape ())."""
    size = x.data.size
    out = np.asarray(x.data.mean())
    return _unary(x, "mean", out,
                  lambda gout: np.full(x.data.shape, float(gout) / size))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)

    def grad_fn(gout):
        return np.where(y > 0, gout * 0.5 / np.where(y > 0, y, 1.0), 0.0)

    return _unary(x, "sqrt", y, grad_fn)


def _require_same_shape(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} requires equal shapes, got {a.data.shape} vs {b.data.shape}")


def _binary(a: Tensor, b: Tensor, op: str, out: np.ndarray, grad_a, grad_b) -> Tensor:
    g = _active_graph()
    ta, tb = a.requires_grad, b.requires_grad
    if g is None or not (ta or tb):
        return Tensor._wrap(out)
    aid = g._node_id(a) if ta else None
    bid = g._node_id(b) if tb else None

    def bwd(gout, acc):
        if aid is not None:
            _accumulate(acc, aid, grad_a(gout))
        if bid is not None:
            _accumulate(acc, bid, grad_b(gout))

    parents = tuple(i for i in (aid, bid) if i is not None)
    return g._emit(out, op, parents, bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "add")
    return _binary(a, b, "add", a.data + b.data, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "sub")
    return _binary(a, b, "sub", a.data - b.data, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _binary(a, b, "mul", ad * bd, lambda g: g * bd, lambda g: g * ad)


def div(a: Tensor, b: Tensor) -> Tensor:
    _require_same_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _binary(a, b, "div",
                   out,
                   lambda g: g / bd,
                   lambda g: -g * ad / (bd * bd))


def safe_div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a/b that yields 0 (value and gradients) where b == 0."""
    _require_same_shape(a, b, "safe_div")
    ad, bd = a.data, b.data
    nz = bd != 0
    denom = np.where(nz, bd, 1.0)
    out = np.where(nz, ad / denom, 0.0)
    return _binary(a, b, "safe_div",
                   out,
                   lambda g: np.where(nz, g / denom, 0.0),
                   lambda g: np.where(nz, -g * ad / (denom * denom), 0.0))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack along the channel axis; batch and spatial extents must agree."""
    ad, bd = a.data, b.data
    if ad.ndim != 4 or bd.ndim != 4:
        raise ShapeError("concat_channels expects 4d tensors", axis="rank")
    if ad.shape[0] != bd.shape[0]:
        raise ShapeError(f"batch mismatch {ad.shape[0]} vs {bd.shape[0]}", axis="batch")
    if ad.shape[2:] != bd.shape[2:]:
        raise ShapeError(f"spatial mismatch {ad.shape[2:]} vs {bd.shape[2:]}", axis="spatial")
    ca = ad.shape[1]
    out = np.concatenate([ad, bd], axis=1)
    return _binary(a, b, "concat",
                   out,
                   lambda g: g[:, :ca],
                   lambda g: g[:, ca:])


def backward(output: Tensor, seed, grads: dict | None = None) -> dict:
    """Reverse-mode pass from ``output`` seeded with ``seed``.

    Returns {leaf Tensor: dL/dleaf} for every requires_grad leaf on the
    tape, where L = sum(seed * output). Fresh buffers every call; pass a
    previous result as ``grads`` to accumulate across seeds instead.
    """
    g = output._graph
    if g is None:
        raise NoGraphError("tensor has no recorded graph to backpropagate through")
    seed_arr = np.asarray(seed, dtype=np.float64)
    if seed_arr.shape != output.data.shape:
        raise ShapeError(
            f"seed shape {seed_arr.shape} != output shape {output.data.shape}")
    g.backward_calls += 1

    acc: dict[int, np.ndarray] = {output._node: seed_arr}
    leaf_grads: dict[int, np.ndarray] = {}
    leaf_ids = {nid for _, nid in g.grad_leaves}
    for nid in range(output._node, -1, -1):
        gout = acc.pop(nid, None)
        if gout is None:
            continue
        node = g.nodes[nid]
        if node.backward_fn is not None:
            node.backward_fn(gout, acc)
        elif nid in leaf_ids:
            leaf_grads[nid] = gout

    result = grads if grads is not None else {}
    for tensor, nid in g.grad_leaves:
        got = leaf_grads.get(nid)
        if got is None:
            got = np.zeros_like(tensor.data)
        if tensor in result:
            result[tensor] = result[tensor] + got
        else:
            result[tensor] = got
    return result


def uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Uniform init in +-1/sqrt(fan_in), the default for conv weights and biases."""
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
