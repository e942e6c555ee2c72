"""Builtin kernel implementations, exact float32 with a fixed summation order.

Every reduction accumulates in row-major tap order with the channel loop
innermost: convolutions sum over (ky, kx, cin), dense layers over the input
feature index, pools over (wy, wx).  Each partial product is rounded to
float32 before the add, so results are bit-reproducible and match a naive
scalar loop that follows the same order.  Bias is added after the taps,
fused activation last.

Kernels never consult declared tensor shapes; everything is derived from the
actual input arrays.  The leading axis is treated as batch throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch, UnsupportedDtype
from .model_format import (
    Activation,
    BuiltinOp,
    ConcatOptions,
    ConvOptions,
    DenseOptions,
    Padding,
    PoolOptions,
)

F32 = np.float32
_ZERO = np.float32(0.0)
_SIX = np.float32(6.0)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def _require_f32(*arrays: np.ndarray) -> None:
    for a in arrays:
        if a.dtype != np.float32:
            raise UnsupportedDtype(f"kernel requires float32, got {a.dtype}")


def _apply_activation(acc: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(acc, _ZERO)
    if act is Activation.RELU6:
        return np.minimum(np.maximum(acc, _ZERO), _SIX)
    return acc


def _out_extent(size: int, k: int, stride: int, padding: Padding) -> int:
    if padding is Padding.VALID:
        _require(size >= k, f"window {k} larger than input extent {size}")
        return (size - k) // stride + 1
    return (size - 1) // stride + 1


def _pad_spatial(x: np.ndarray, kh: int, kw: int, sh: int, sw: int,
                 oh: int, ow: int, fill: float) -> tuple[np.ndarray, int, int]:
    """Zero-offset SAME padding: top/left pads are floor((k-1)/2)."""
    _, h, w, _ = x.shape
    pt, pl = (kh - 1) // 2, (kw - 1) // 2
    pb = max(0, (oh - 1) * sh + kh - pt - h)
    pr = max(0, (ow - 1) * sw + kw - pl - w)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)),
                constant_values=fill)
    return xp.astype(np.float32, copy=False), pt, pl


def _tap(xp: np.ndarray, ky: int, kx: int, oh: int, ow: int,
         sh: int, sw: int) -> np.ndarray:
    return xp[:, ky:ky + (oh - 1) * sh + 1:sh, kx:kx + (ow - 1) * sw + 1:sw]


def conv2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None,
           opts: ConvOptions) -> np.ndarray:
    _require_f32(x, w)
    _require(x.ndim == 4, f"Conv2D input must be NHWC, got rank {x.ndim}")
    _require(w.ndim == 4, f"Conv2D weight must be (kh, kw, cin, cout), got rank {w.ndim}")
    n, h, wd, ci = x.shape
    kh, kw, wci, co = w.shape
    _require(wci == ci, f"Conv2D channels: input {ci} vs weight {wci}")
    sh, sw = opts.stride_h, opts.stride_w
    oh = _out_extent(h, kh, sh, opts.padding)
    ow = _out_extent(wd, kw, sw, opts.padding)
    if opts.padding is Padding.SAME:
        xp, _, _ = _pad_spatial(x, kh, kw, sh, sw, oh, ow, 0.0)
    else:
        xp = x
    acc = np.zeros((n, oh, ow, co), np.float32)
    for ky in range(kh):
        for kx in range(kw):
            patch = _tap(xp, ky, kx, oh, ow, sh, sw)
            for c in range(ci):
                acc += patch[:, :, :, c, None] * w[ky, kx, c, :]
    if bias is not None:
        _require_f32(bias)
        _require(bias.shape == (co,), f"Conv2D bias shape {bias.shape} != ({co},)")
        acc += bias
    return _apply_activation(acc, opts.activation)


def depthwise_conv2d(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None,
                     opts: ConvOptions) -> np.ndarray:
    _require_f32(x, w)
    _require(x.ndim == 4, f"DepthwiseConv2D input must be NHWC, got rank {x.ndim}")
    _require(w.ndim == 3, f"DepthwiseConv2D weight must be (kh, kw, c), got rank {w.ndim}")
    n, h, wd, c = x.shape
    kh, kw, wc = w.shape
    _require(wc == c, f"DepthwiseConv2D channels: input {c} vs weight {wc}")
    sh, sw = opts.stride_h, opts.stride_w
    oh = _out_extent(h, kh, sh, opts.padding)
    ow = _out_extent(wd, kw, sw, opts.padding)
    if opts.padding is Padding.SAME:
        xp, _, _ = _pad_spatial(x, kh, kw, sh, sw, oh, ow, 0.0)
    else:
        xp = x
    acc = np.zeros((n, oh, ow, c), np.float32)
    for ky in range(kh):
        for kx in range(kw):
            acc += _tap(xp, ky, kx, oh, ow, sh, sw) * w[ky, kx, :]
    if bias is not None:
        _require_f32(bias)
        _require(bias.shape == (c,), f"DepthwiseConv2D bias shape {bias.shape} != ({c},)")
        acc += bias
    return _apply_activation(acc, opts.activation)


def dense(x: np.ndarray, w: np.ndarray, bias: np.ndarray | None,
          opts: DenseOptions) -> np.ndarray:
    _require_f32(x, w)
    _require(x.ndim == 2, f"Dense input must be (batch, features), got rank {x.ndim}")
    _require(w.ndim == 2, f"Dense weight must be (in, out), got rank {w.ndim}")
    n, fin = x.shape
    win, fout = w.shape
    _require(win == fin, f"Dense features: input {fin} vs weight {win}")
    acc = np.zeros((n, fout), np.float32)
    for i in range(fin):
        acc += x[:, i, None] * w[i, :]
    if bias is not None:
        _require_f32(bias)
        _require(bias.shape == (fout,), f"Dense bias shape {bias.shape} != ({fout},)")
        acc += bias
    return _apply_activation(acc, opts.activation)


def max_pool2d(x: np.ndarray, opts: PoolOptions) -> np.ndarray:
    _require_f32(x)
    _require(x.ndim == 4, f"MaxPool2D input must be NHWC, got rank {x.ndim}")
    n, h, w, c = x.shape
    fh, fw, sh, sw = opts.filter_h, opts.filter_w, opts.stride_h, opts.stride_w
    oh = _out_extent(h, fh, sh, opts.padding)
    ow = _out_extent(w, fw, sw, opts.padding)
    if opts.padding is Padding.SAME:
        xp, _, _ = _pad_spatial(x, fh, fw, sh, sw, oh, ow, -np.inf)
    else:
        xp = x
    out = _tap(xp, 0, 0, oh, ow, sh, sw).copy()
    for wy in range(fh):
        for wx in range(fw):
            if wy == 0 and wx == 0:
                continue
            np.maximum(out, _tap(xp, wy, wx, oh, ow, sh, sw), out=out)
    return out


def avg_pool2d(x: np.ndarray, opts: PoolOptions) -> np.ndarray:
    _require_f32(x)
    _require(x.ndim == 4, f"AvgPool2D input must be NHWC, got rank {x.ndim}")
    n, h, w, c = x.shape
    fh, fw, sh, sw = opts.filter_h, opts.filter_w, opts.stride_h, opts.stride_w
    oh = _out_extent(h, fh, sh, opts.padding)
    ow = _out_extent(w, fw, sw, opts.padding)
    if opts.padding is Padding.SAME:
        xp, _, _ = _pad_spatial(x, fh, fw, sh, sw, oh, ow, 0.0)
        ones = np.ones((1, h, w, 1), np.float32)
        onesp, _, _ = _pad_spatial(ones, fh, fw, sh, sw, oh, ow, 0.0)
    else:
        xp = x
        onesp = np.ones((1, h, w, 1), np.float32)
    acc = np.zeros((n, oh, ow, c), np.float32)
    cnt = np.zeros((1, oh, ow, 1), np.float32)
    for wy in range(fh):
        for wx in range(fw):
            acc += _tap(xp, wy, wx, oh, ow, sh, sw)
            cnt += _tap(onesp, wy, wx, oh, ow, sh, sw)
    return acc / cnt


def relu(x: np.ndarray) -> np.ndarray:
    _require_f32(x)
    return np.maximum(x, _ZERO)


def relu6(x: np.ndarray) -> np.ndarray:
    _require_f32(x)
    return np.minimum(np.maximum(x, _ZERO), _SIX)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    _require_f32(a, b)
    _require(a.shape == b.shape, f"Add shapes differ: {a.shape} vs {b.shape}")
    return a + b


def concat(parts: list[np.ndarray], opts: ConcatOptions) -> np.ndarray:
    _require(len(parts) >= 1, "Concat needs at least one input")
    _require_f32(*parts)
    rank = parts[0].ndim
    axis = opts.axis if opts.axis >= 0 else opts.axis + rank
    _require(0 <= axis < rank, f"Concat axis {opts.axis} invalid for rank {rank}")
    base = parts[0].shape
    for p in parts[1:]:
        _require(p.ndim == rank, "Concat ranks differ")
        for d in range(rank):
            if d != axis:
                _require(p.shape[d] == base[d],
                         f"Concat shapes differ off-axis: {p.shape} vs {base}")
    return np.concatenate(parts, axis=axis)


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis: max-shifted exp, ascending-index sum."""
    _require_f32(x)
    _require(x.ndim >= 1 and x.shape[-1] >= 1, "Softmax needs a non-empty last axis")
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    s = e[..., 0].copy()
    for j in range(1, x.shape[-1]):
        s += e[..., j]
    return e / s[..., None]


def reshape(x: np.ndarray, shape_spec: np.ndarray) -> np.ndarray:
    if shape_spec.dtype != np.int32:
        raise UnsupportedDtype(f"Reshape shape input must be int32, got {shape_spec.dtype}")
    _require(shape_spec.ndim == 1, "Reshape shape input must be rank 1")
    dims = [int(d) for d in shape_spec]
    _require(dims.count(-1) <= 1, "Reshape allows at most one -1 wildcard")
    _require(all(d >= 1 or d == -1 for d in dims), f"Reshape dims invalid: {dims}")
    total = x.size
    if -1 in dims:
        known = 1
        for d in dims:
            if d != -1:
                known *= d
        _require(known > 0 and total % known == 0,
                 f"Reshape cannot infer -1: {total} elements into {dims}")
        dims[dims.index(-1)] = total // known
    prod = 1
    for d in dims:
        prod *= d
    _require(prod == total, f"Reshape size mismatch: {total} elements into {dims}")
    return x.reshape(dims)


def flatten(x: np.ndarray) -> np.ndarray:
    _require(x.ndim >= 2, f"Flatten input must have rank >= 2, got {x.ndim}")
    return x.reshape(x.shape[0], -1)


def execute_builtin(kind: BuiltinOp, inputs: list[np.ndarray],
                    options) -> list[np.ndarray]:
    """Dispatch one builtin kernel; returns its output list."""
    def arity(lo: int, hi: int) -> None:
        if not lo <= len(inputs) <= hi:
            raise ShapeMismatch(
                f"{kind.name} expects {lo}..{hi} inputs, got {len(inputs)}")

    if kind is BuiltinOp.CONV_2D:
        arity(2, 3)
        return [conv2d(inputs[0], inputs[1],
                       inputs[2] if len(inputs) == 3 else None, options)]
    if kind is BuiltinOp.DEPTHWISE_CONV_2D:
        arity(2, 3)
        return [depthwise_conv2d(inputs[0], inputs[1],
                                 inputs[2] if len(inputs) == 3 else None, options)]
    if kind is BuiltinOp.DENSE:
        arity(2, 3)
        return [dense(inputs[0], inputs[1],
                      inputs[2] if len(inputs) == 3 else None, options)]
    if kind is BuiltinOp.RELU:
        arity(1, 1)
        return [relu(inputs[0])]
    if kind is BuiltinOp.RELU6:
        arity(1, 1)
        return [relu6(inputs[0])]
    if kind is BuiltinOp.MAX_POOL_2D:
        arity(1, 1)
        return [max_pool2d(inputs[0], options)]
    if kind is BuiltinOp.AVG_POOL_2D:
        arity(1, 1)
        return [avg_pool2d(inputs[0], options)]
    if kind is BuiltinOp.ADD:
        arity(2, 2)
        return [add(inputs[0], inputs[1])]
    if kind is BuiltinOp.CONCAT:
        return [concat(list(inputs), options)]
    if kind is BuiltinOp.SOFTMAX:
        arity(1, 1)
        return [softmax(inputs[0])]
    if kind is BuiltinOp.RESHAPE:
        arity(2, 2)
        return [reshape(inputs[0], inputs[1])]
    if kind is BuiltinOp.FLATTEN:
        arity(1, 1)
        return [flatten(inputs[0])]
    raise ShapeMismatch(f"unknown builtin kernel {kind!r}")
