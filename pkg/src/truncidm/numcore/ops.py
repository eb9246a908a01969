"""Differentiable primitives over :class:`Tensor`.

Every function returns a new tensor; backward closures return one gradient
(or None) per parent, already reduced to the parent's shape.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ParameterError, ShapeError
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead > 0:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return make_result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result(ad * bd, (a, b), bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def bw(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None
        return ga, gb

    return make_result(ad / bd, (a, b), bw)


def neg(a):
    a = as_tensor(a)
    return make_result(-a.data, (a,), lambda g: (-g,))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    ad = a.data
    return make_result(np.log(ad), (a,), lambda g: (g / ad,))


def abs(a):
    a = as_tensor(a)
    ad = a.data
    return make_result(np.abs(ad), (a,), lambda g: (g * np.sign(ad),))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make_result(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_result(out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a):
    a = as_tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x)
    return make_result(out, (a,), lambda g: (g / (1.0 + np.exp(-x)),))


def leaky_relu(a, slope=0.01):
    a = as_tensor(a)
    x = a.data
    scale = np.where(x > 0, 1.0, slope)
    return make_result(x * scale, (a,), lambda g: (g * scale,))


def relu(a):
    return leaky_relu(a, 0.0)


# ---------------------------------------------------------------- reductions / shape

def sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape
    out = np.asarray(a.data.sum(axis=axis, keepdims=keepdims), dtype=np.float64)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[i] for i in axes]))
    return mul(sum(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    orig = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)
    return make_result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a, index):
    a = as_tensor(a)
    shape = a.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, index, g) if _has_fancy(index) else full.__setitem__(index, g)
        return (full,)

    return make_result(np.array(a.data[index], dtype=np.float64), (a,), bw)


def _has_fancy(index):
    idx = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in idx)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def pad_left(a, n, axis):
    """Zero-pad ``n`` entries before the start of ``axis``."""
    a = as_tensor(a)
    if n == 0:
        return a
    widths = [(0, 0)] * a.ndim
    widths[axis] = (n, 0)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(n, None)
    sl = tuple(sl)
    return make_result(np.pad(a.data, widths), (a,), lambda g: (g[sl],))


def pad_edge(a, n):
    """Replicate the border ``n`` times along the last two axes."""
    a = as_tensor(a)
    if n == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(n, n), (n, n)]
    h, w = a.shape[-2:]

    def bw(g):
        gh = g[..., n:n + h, :].copy()
        gh[..., 0, :] += g[..., :n, :].sum(axis=-2)
        gh[..., -1, :] += g[..., n + h:, :].sum(axis=-2)
        gx = gh[..., n:n + w].copy()
        gx[..., 0] += gh[..., :n].sum(axis=-1)
        gx[..., -1] += gh[..., n + w:].sum(axis=-1)
        return (gx,)

    return make_result(np.pad(a.data, widths, mode="edge"), (a,), bw)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 1:
        raise ShapeError(f"matmul needs a matrix on the left, got {a.shape} @ {b.shape}")
    vec = b.ndim == 1
    ad = a.data
    bd = b.data[:, None] if vec else b.data
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = ad @ bd

    def bw(g):
        if vec:
            g = g[..., None]
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = None
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
            if vec:
                gb = gb[:, 0]
        return ga, gb

    return make_result(out[..., 0] if vec else out, (a, b), bw)


def linear(x, w, b=None):
    """``x @ w + b`` with ``w`` stored as (in, out)."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def softmax(logits, temperature=1.0, axis=-1):
    if not temperature > 0:
        raise ParameterError(f"softmax temperature must be positive, got {temperature}")
    x = as_tensor(logits)
    s = x.data / temperature
    e = np.exp(s - s.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)) / temperature,)

    return make_result(y, (x,), bw)


# ---------------------------------------------------------------- convolution

def conv_output_size(n, k, stride, padding):
    return (n + 2 * padding - k) // stride + 1


def conv2d(x, kernel, stride=1, padding=0, bias=None):
    """2-D cross-correlation.

    ``x`` is (N, C, H, W) or (C, H, W); ``kernel`` is (O, C, kh, kw).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if stride < 1 or padding < 0:
        raise ParameterError(f"invalid stride/padding {stride}/{padding}")
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d expects (N,C,H,W) input and (O,C,kh,kw) kernel, got {x.shape}, {kernel.shape}")
    n, c, h, w = xd.shape
    o, kc, kh, kw = kernel.shape
    if kc != c:
        raise ShapeError(f"conv2d channel mismatch: input has {c}, kernel expects {kc}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kmat = kernel.data.reshape(o, c * kh * kw)
    out = cols @ kmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    if squeeze:
        out = out[0]

    def bw(g):
        g4 = g[None] if squeeze else g
        gmT = np.ascontiguousarray(g4.transpose(1, 0, 2, 3)).reshape(o, n * ho * wo)
        gk = (gmT @ cols).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            # tap-major, channel-major columns; taps sharing a stride phase are
            # summed in a contiguous buffer, then scattered once
            kt = kernel.data.transpose(2, 3, 1, 0).reshape(kh * kw * c, o)
            gc = (kt @ gmT).reshape(kh, kw, c, n, ho, wo)
            gxp = np.zeros((c, n) + xp.shape[2:])
            for pi in range(min(stride, kh)):
                ti = range(pi, kh, stride)
                for pj in range(min(stride, kw)):
                    tj = range(pj, kw, stride)
                    buf = np.zeros((c, n, ho + len(ti) - 1, wo + len(tj) - 1))
                    for a, i in enumerate(ti):
                        for b, j in enumerate(tj):
                            buf[:, :, a : a + ho, b : b + wo] += gc[i, j]
                    gxp[:, :, pi::stride, pj::stride][:, :, : buf.shape[2], : buf.shape[3]] = buf
            gxp = gxp.transpose(1, 0, 2, 3)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
            if squeeze:
                gx = gx[0]
        grads = [gx, gk]
        if bias is not None:
            grads.append(gmT.sum(axis=1) if bias.requires_grad else None)
        return tuple(grads)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(np.ascontiguousarray(out), parents, bw)


# ---------------------------------------------------------------- resampling

def _corner_weights(coords, h, w):
    """Clamp (row, col) coordinates and return corner indices and weights."""
    r = np.clip(coords[..., 0, :, :], 0.0, h - 1)
    c = np.clip(coords[..., 1, :, :], 0.0, w - 1)
    r0 = np.minimum(np.floor(r), max(h - 2, 0)).astype(np.int64)
    c0 = np.minimum(np.floor(c), max(w - 2, 0)).astype(np.int64)
    fr = r - r0
    fc = c - c0
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    return r0, r1, c0, c1, fr, fc


def bilinear_matrix(coords, h, w):
    """Sparse (P, h*w) interpolation matrix for fixed coordinates (2, ...)."""
    coords = np.asarray(coords, dtype=np.float64)
    r0, r1, c0, c1, fr, fc = _corner_weights(coords.reshape(2, 1, -1), h, w)
    r0, r1, c0, c1, fr, fc = (a.ravel() for a in (r0, r1, c0, c1, fr, fc))
    p = r0.size
    rows = np.tile(np.arange(p), 4)
    cols = np.concatenate([r0 * w + c0, r0 * w + c1, r1 * w + c0, r1 * w + c1])
    vals = np.concatenate([(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc])
    return sp.csr_matrix((vals, (rows, cols)), shape=(p, h * w))


def resample(x, matrix, out_shape):
    """Apply a fixed sparse resampling ``matrix`` over the trailing two axes.

    ``x`` is (..., H, W); the result is (..., *out_shape).
    """
    lead = x.shape[:-2]
    q = x.shape[-2] * x.shape[-1]
    if matrix.shape[1] != q:
        raise ShapeError(f"resample matrix expects {matrix.shape[1]} inputs, map has {q}")
    flat = x.data.reshape(-1, q)
    out = np.asarray((matrix @ flat.T).T).reshape(lead + tuple(out_shape))
    mt = matrix.T.tocsr()

    def bw(g):
        gf = g.reshape(-1, matrix.shape[0])
        return (np.asarray((mt @ gf.T).T).reshape(x.shape),)

    return make_result(out, (x,), bw)


def bilinear_sample(fmap, coords):
    """Sample ``fmap`` (..., C, H, W) at real (row, col) positions.

    ``coords`` is (2, Ho, Wo) or (N, 2, Ho, Wo) in pixel units; positions
    outside the map are clamped to the border.  Differentiable w.r.t. both
    arguments.
    """
    fmap, coords = as_tensor(fmap), as_tensor(coords)
    if coords.ndim < 3 or coords.shape[-3] != 2:
        raise ShapeError(f"coords must be (..., 2, H, W), got {coords.shape}")
    h, w = fmap.shape[-2:]
    if not coords.requires_grad and coords.ndim == 3:
        m = bilinear_matrix(coords.data, h, w)
        return resample(fmap, m, coords.shape[-2:])
    if fmap.ndim != 4 or coords.ndim != 4 or coords.shape[0] != fmap.shape[0]:
        if fmap.ndim == 3 and coords.ndim == 3:
            return reshape(bilinear_sample(reshape(fmap, (1,) + fmap.shape),
                                           reshape(coords, (1,) + coords.shape)), (fmap.shape[0],) + coords.shape[1:])
        raise ShapeError(f"batched bilinear_sample needs (N,C,H,W) map and (N,2,Ho,Wo) coords, got {fmap.shape}, {coords.shape}")
    n, c = fmap.shape[:2]
    ho, wo = coords.shape[-2:]
    cd = coords.data
    r0, r1, c0, c1, fr, fc = _corner_weights(cd, h, w)
    p = ho * wo
    flat = fmap.data.reshape(n, c, h * w)
    idx = [(r0 * w + c0), (r0 * w + c1), (r1 * w + c0), (r1 * w + c1)]
    idx = [i.reshape(n, 1, p) for i in idx]
    v00, v01, v10, v11 = (np.take_along_axis(flat, np.broadcast_to(i, (n, c, p)), axis=2) for i in idx)
    frf = fr.reshape(n, 1, p)
    fcf = fc.reshape(n, 1, p)
    top = (1 - fcf) * v00 + fcf * v01
    bot = (1 - fcf) * v10 + fcf * v11
    out = ((1 - frf) * top + frf * bot).reshape(n, c, ho, wo)
    r_in = ((cd[:, 0] >= 0) & (cd[:, 0] <= h - 1)).reshape(n, 1, p)
    c_in = ((cd[:, 1] >= 0) & (cd[:, 1] <= w - 1)).reshape(n, 1, p)

    def bw(g):
        gf = g.reshape(n, c, p)
        gmap = None
        if fmap.requires_grad:
            ws = [(1 - frf) * (1 - fcf), (1 - frf) * fcf, frf * (1 - fcf), frf * fcf]
            base = (np.arange(n * c) * (h * w)).reshape(n, c, 1)
            keys = np.concatenate([(base + i).ravel() for i in idx])
            vals = np.concatenate([(gf * wt).ravel() for wt in ws])
            gmap = np.bincount(keys, weights=vals, minlength=n * c * h * w).reshape(fmap.shape)
        gc = None
        if coords.requires_grad:
            d_r = ((bot - top) * gf).sum(axis=1, keepdims=True) * r_in
            d_c = (((1 - frf) * (v01 - v00) + frf * (v11 - v10)) * gf).sum(axis=1, keepdims=True) * c_in
            gc = np.concatenate([d_r, d_c], axis=1).reshape(n, 2, ho, wo)
        return gmap, gc

    return make_result(out, (fmap, coords), bw)


def identity_grid(h, w):
    """(2, h, w) array of (row, col) pixel positions."""
    rr, cc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    return np.stack([rr, cc])
