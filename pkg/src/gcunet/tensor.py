"""Dense NCHW tensor kernels on top of numpy.

Tensors are plain ``numpy.ndarray`` values in row-major (C) order.  Every
kernel here checks shapes up front and raises :class:`ShapeMismatch` rather
than relying on numpy broadcasting, which is deliberately not supported
beyond scalars.

Randomness comes from a single generator family, PCG64 (numpy's
``np.random.PCG64``), seeded with the integer seed directly.  ``uniform``
fills draw ``lo + (hi - lo) * u`` with ``u`` from ``Generator.random``.
"""
from contextlib import contextmanager

import numpy as np

from .errors import InvalidAxis, InvalidShape, NonFiniteValue, ShapeMismatch

_DTYPE = np.float32
_INDEX_MAX = np.iinfo(np.intp).max


def default_dtype():
    return _DTYPE


def set_default_dtype(dtype):
    global _DTYPE
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise TypeError(f"unsupported dtype {dtype!r}")
    _DTYPE = dtype


@contextmanager
def precision(dtype):
    """Temporarily switch the default float type (``float64`` for gradient checks)."""
    old = _DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)


def make_rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def check_shape(dims):
    dims = tuple(int(d) for d in dims)
    total = 1
    for d in dims:
        if d < 0:
            raise InvalidShape(f"negative extent in {dims}")
        total *= d
        if total > _INDEX_MAX:
            raise InvalidShape(f"shape {dims} overflows the index type")
    return dims


def create(shape, fill=0.0, *, dtype=None):
    """Build a tensor.

    ``fill`` is a number (constant fill), a sequence of values (row-major,
    must match the element count), or ``("uniform", lo, hi, seed)``.
    """
    shape = check_shape(shape)
    dtype = dtype or _DTYPE
    if isinstance(fill, tuple) and fill and fill[0] == "uniform":
        _, lo, hi, seed = fill
        u = make_rng(seed).random(shape)
        return (lo + (hi - lo) * u).astype(dtype)
    if np.isscalar(fill):
        return np.full(shape, fill, dtype=dtype)
    values = np.asarray(fill, dtype=dtype).ravel()
    if values.size != int(np.prod(shape, dtype=np.int64)):
        raise ShapeMismatch(f"{values.size} values cannot fill shape {shape}")
    return values.reshape(shape).copy()


def check_finite(t, what="tensor"):
    if not np.all(np.isfinite(t)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return t


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}")
    return a @ b


_ELEMENTWISE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "max": np.maximum,
}


def elementwise(op, a, b=None):
    """Apply ``op`` pointwise.  ``op`` is a name from add/sub/mul/max or a callable.

    ``b`` must have ``a``'s shape or be a scalar; a callable ``op`` with
    ``b=None`` is a unary map.
    """
    if b is not None and not np.isscalar(b) and np.shape(b) != a.shape:
        raise ShapeMismatch(f"elementwise {op} of {a.shape} and {np.shape(b)}")
    fn = _ELEMENTWISE[op] if isinstance(op, str) else op
    if b is None:
        return np.asarray(fn(a), dtype=a.dtype)
    return np.asarray(fn(a, b), dtype=a.dtype)


def reduce(op, t, axis=None):
    if axis is not None and not -t.ndim <= axis < t.ndim:
        raise InvalidAxis(f"axis {axis} for rank {t.ndim}")
    if op == "sum":
        return np.sum(t, axis=axis)
    if op == "mean":
        return np.mean(t, axis=axis)
    if op == "argmax":
        # np.argmax returns the first occurrence on ties
        return np.argmax(t, axis=axis)
    raise ValueError(f"unknown reduction {op!r}")


def _out_extent(size, k, stride, pad, what):
    span = size + 2 * pad - k
    if span < 0:
        raise ShapeMismatch(f"{what}: window {k} larger than padded extent {size + 2 * pad}")
    if span % stride:
        raise ShapeMismatch(f"{what}: output extent ({size}+2*{pad}-{k})/{stride}+1 is not integral")
    return span // stride + 1


def _windows(x, kh, kw, stride):
    """View of shape (N, C, H', W', kh, kw) over every stride-spaced window."""
    v = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    return v[:, :, ::stride, ::stride]


def conv2d(x, w, b, stride=1, padding=0):
    """Cross-correlation of ``x`` [N,C,H,W] with ``w`` [F,C,kh,kw] plus bias ``b`` [F]."""
    out, _ = conv2d_with_cols(x, w, b, stride, padding)
    return out


def conv2d_with_cols(x, w, b, stride=1, padding=0):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-d input and kernels, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeMismatch(f"conv2d channel mismatch: input {c}, kernels {cw}")
    if b.shape != (f,):
        raise ShapeMismatch(f"conv2d bias shape {b.shape}, expected ({f},)")
    if stride < 1 or padding < 0:
        raise ValueError("stride must be positive and padding nonnegative")
    ho = _out_extent(h, kh, stride, padding, "conv2d height")
    wo = _out_extent(wd, kw, stride, padding, "conv2d width")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(x, kh, kw, stride)[:, :, :ho, :wo]
    # (N, H', W', C, kh, kw) -> rows are output pixels
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    out = cols @ w.reshape(f, -1).T + b
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), cols


def conv2d_backward(dout, x_shape, w, cols, stride=1, padding=0):
    """Gradients (dx, dw, db) of conv2d given the upstream gradient ``dout``."""
    n, c, h, wd = x_shape
    f, _, kh, kw = w.shape
    _, _, ho, wo = dout.shape
    dmat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dmat.T @ cols).reshape(w.shape)
    db = dmat.sum(axis=0)
    dcols = (dmat @ w.reshape(f, -1)).reshape(n, ho, wo, c, kh, kw)
    dx = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
    if padding:
        dx = dx[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dx), dw, db


def pool_extent(size, window, stride):
    """Pooled extent; trailing rows/columns that do not fill a window are dropped."""
    if size < window:
        raise ShapeMismatch(f"maxpool window {window} larger than extent {size}")
    return (size - window) // stride + 1


def maxpool2d(x, window, stride):
    """Max pooling over [N,C,H,W].

    Returns ``(out, argmax)`` where ``argmax`` holds, per output element, the
    flat index ``r * window + c`` of the winning element inside its window.
    Ties go to the lowest flat index.
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"maxpool2d expects a 4-d input, got {x.shape}")
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    ho = pool_extent(x.shape[2], window, stride)
    wo = pool_extent(x.shape[3], window, stride)
    win = _windows(x, window, window, stride)[:, :, :ho, :wo]
    flat = win.reshape(*win.shape[:4], window * window)
    argmax = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), argmax


def maxpool2d_backward(dout, argmax, x_shape, window, stride):
    """Scatter ``dout`` to the stored argmax positions."""
    dx = np.zeros(x_shape, dtype=dout.dtype)
    _, _, ho, wo = dout.shape
    for p in range(window * window):
        i, j = divmod(p, window)
        dx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.where(argmax == p, dout, 0)
    return dx


def argmax_position(argmax, window, out_row, out_col, stride):
    """Absolute (row, col) in the input of a pooled element's winner."""
    i, j = divmod(int(argmax), window)
    return out_row * stride + i, out_col * stride + j
