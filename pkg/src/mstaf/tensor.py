"""Dense numpy-backed tensors with reverse-mode automatic differentiation.

The kernel set is deliberately small: matrix products, strided/grouped 2-D
convolution, layer norm, softmax, GELU, 2x bilinear upsampling, a handful of
pointwise ops and full reductions. Storage is row-major contiguous and there
is no broadcasting beyond the bias patterns that actually occur (a 1-D vector
added along the last axis, a scalar operand).

Each operation records its inputs and a backward closure on the output
tensor; ``backward()`` on a scalar walks that graph once in reverse
topological order, accumulating gradients additively across fan-out.
The default scalar type is float32; switch to float64 (``using_dtype``)
for tight finite-difference checks.
"""

from __future__ import annotations

import contextlib
import functools
import math

import numpy as np

from .errors import ConfigurationError, DimensionError, UsageError

_DEFAULT_DTYPE = np.dtype(np.float32)
_GRAD_ENABLED = True

GELU_TANH_COEFF = 0.7978845608028654  # sqrt(2/pi)
GELU_CUBIC_COEFF = 0.044715


def set_default_dtype(dtype) -> None:
    """Set the scalar type used for tensors created without an explicit dtype."""
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise UsageError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def using_dtype(dtype):
    """Temporarily switch the default scalar type."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference / data plumbing)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


class Tensor:
    """A contiguous n-d float array, optionally part of an autodiff graph.

    ``grad`` is populated by ``backward()`` and always matches ``data`` in
    shape; a leaf never reached from the loss keeps ``grad is None``, which
    downstream code treats as an all-zero gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=np.dtype(dtype) if dtype is not None else _DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        """The underlying buffer (not a copy)."""
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A new graph-free tensor sharing this tensor's buffer."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *axes):
        return transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)

    def sum(self):
        return tensor_sum(self)

    def mean(self):
        return tensor_mean(self)

    # -- autodiff ----------------------------------------------------------

    def backward(self) -> None:
        """Populate ``grad`` on every reachable requires_grad tensor.

        Only defined for scalar tensors (a loss). Gradients accumulate, so
        zero them between steps.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.ascontiguousarray(data)
    out.grad = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _as_scalar(x) -> float | None:
    if isinstance(x, (int, float)):
        return float(x)
    return None


# -- pointwise and shape ops ------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    """a + b for equal shapes, a scalar b, or a 1-D bias along the last axis."""
    s = _as_scalar(b)
    if s is not None:
        def backward(g):
            _accumulate(a, g)
        return _from_op(a.data + s, (a,), backward)

    if a.shape == b.shape:
        def backward(g):
            _accumulate(a, g)
            _accumulate(b, g)
        return _from_op(a.data + b.data, (a, b), backward)

    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        def backward(g):
            _accumulate(a, g)
            _accumulate(b, g.reshape(-1, b.shape[0]).sum(axis=0))
        return _from_op(a.data + b.data, (a, b), backward)

    raise DimensionError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a: Tensor, b) -> Tensor:
    s = _as_scalar(b)
    if s is not None:
        def backward(g):
            _accumulate(a, g)
        return _from_op(a.data - s, (a,), backward)
    if a.shape != b.shape:
        raise DimensionError(f"sub: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)
    return _from_op(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product for equal shapes or a scalar operand."""
    s = _as_scalar(b)
    if s is not None:
        def backward(g):
            _accumulate(a, g * s)
        return _from_op(a.data * s, (a,), backward)
    if a.shape != b.shape:
        raise DimensionError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    a_data, b_data = a.data, b.data

    def backward(g):
        _accumulate(a, g * b_data)
        _accumulate(b, g * a_data)
    return _from_op(a.data * b.data, (a, b), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    y[~pos] = ex / (1.0 + ex)

    def backward(g):
        _accumulate(x, g * y * (1.0 - y))
    return _from_op(y, (x,), backward)


def log(x: Tensor) -> Tensor:
    d = x.data

    def backward(g):
        _accumulate(x, g / d)
    return _from_op(np.log(d), (x,), backward)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient passes only through the interior."""
    d = x.data
    interior = (d > lo) & (d < hi)

    def backward(g):
        _accumulate(x, g * interior)
    return _from_op(np.clip(d, lo, hi), (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    d = x.data
    inner = GELU_TANH_COEFF * (d + GELU_CUBIC_COEFF * d**3)
    t = np.tanh(inner)
    y = 0.5 * d * (1.0 + t)

    def backward(g):
        sech2 = 1.0 - t * t
        dy = 0.5 * (1.0 + t) + 0.5 * d * sech2 * GELU_TANH_COEFF * (1.0 + 3.0 * GELU_CUBIC_COEFF * d**2)
        _accumulate(x, g * dy)
    return _from_op(y, (x,), backward)


def softmax(x: Tensor, axis: int) -> Tensor:
    """Max-subtracted softmax; slices along ``axis`` sum to 1."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        gy = g * y
        _accumulate(x, gy - y * gy.sum(axis=axis, keepdims=True))
    return _from_op(y, (x,), backward)


def concat(tensors, axis: int) -> Tensor:
    """Concatenate along ``axis``; every other extent must agree."""
    tensors = tuple(tensors)
    if not tensors:
        raise UsageError("concat: need at least one tensor")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            i != axis % t.ndim and t.shape[i] != ref[i] for i in range(t.ndim)
        ):
            raise DimensionError(f"concat: incompatible shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])
    return _from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    original = x.shape

    def backward(g):
        _accumulate(x, g.reshape(original))
    return _from_op(x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(x, np.ascontiguousarray(g.transpose(inverse)))
    return _from_op(x.data.transpose(axes), (x,), backward)


def flatten_grid(x: Tensor) -> Tensor:
    """[B, C, H, W] feature map -> [B, H*W, C] token sequence."""
    if x.ndim != 4:
        raise DimensionError(f"flatten_grid: expected 4-d input, got shape {x.shape}")
    b, c, h, w = x.shape
    return reshape(transpose(x, (0, 2, 3, 1)), (b, h * w, c))


def unflatten_grid(x: Tensor, grid_h: int, grid_w: int) -> Tensor:
    """[B, N, C] token sequence -> [B, C, grid_h, grid_w] feature map."""
    if x.ndim != 3:
        raise DimensionError(f"unflatten_grid: expected 3-d input, got shape {x.shape}")
    b, n, c = x.shape
    if n != grid_h * grid_w:
        raise DimensionError(f"unflatten_grid: {n} tokens do not form a {grid_h}x{grid_w} grid")
    return transpose(reshape(x, (b, grid_h, grid_w, c)), (0, 3, 1, 2))


def tensor_sum(x: Tensor) -> Tensor:
    def backward(g):
        _accumulate(x, np.full_like(x.data, g.reshape(-1)[0]))
    return _from_op(np.asarray(x.data.sum(), dtype=x.data.dtype), (x,), backward)


def tensor_mean(x: Tensor) -> Tensor:
    n = x.data.size

    def backward(g):
        _accumulate(x, np.full_like(x.data, g.reshape(-1)[0] / n))
    return _from_op(np.asarray(x.data.mean(), dtype=x.data.dtype), (x,), backward)


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product: 2d @ 2d, batched 3d @ 3d, or 3d @ shared 2d."""
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise DimensionError(f"matmul: inner extents disagree for shapes {a.shape} and {b.shape}")

    if ad.ndim == 2 and bd.ndim == 2:
        def backward(g):
            _accumulate(a, g @ bd.T)
            _accumulate(b, ad.T @ g)
        return _from_op(ad @ bd, (a, b), backward)

    if ad.ndim == 3 and bd.ndim == 3:
        if ad.shape[0] != bd.shape[0]:
            raise DimensionError(f"matmul: batch extents disagree for shapes {a.shape} and {b.shape}")

        def backward(g):
            _accumulate(a, g @ bd.transpose(0, 2, 1))
            _accumulate(b, ad.transpose(0, 2, 1) @ g)
        return _from_op(np.matmul(ad, bd), (a, b), backward)

    if ad.ndim == 3 and bd.ndim == 2:
        def backward(g):
            _accumulate(a, g @ bd.T)
            _accumulate(b, ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        return _from_op(np.matmul(ad, bd), (a, b), backward)

    raise DimensionError(f"matmul: unsupported ranks for shapes {a.shape} and {b.shape}")


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ w with an optional 1-D bias on the output axis."""
    y = matmul(x, w)
    if bias is not None:
        y = add(y, bias)
    return y


# -- convolution --------------------------------------------------------------


def conv_output_extent(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Padded [B, C, Hp, Wp] -> contiguous [B, C, kh, kw, out_h, out_w] patches."""
    sb, sc, sh, sw = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp,
        shape=(xp.shape[0], xp.shape[1], kh, kw, out_h, out_w),
        strides=(sb, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return np.ascontiguousarray(view)


def _col2im(dcols: np.ndarray, padded_shape, kh: int, kw: int, stride: int) -> np.ndarray:
    """Scatter-add [B, C, kh, kw, out_h, out_w] patch grads back onto the padded input."""
    out = np.zeros(padded_shape, dtype=dcols.dtype)
    out_h, out_w = dcols.shape[-2:]
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += dcols[:, :, i, j]
    return out


def conv2d(
    x: Tensor,
    w: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    groups: int = 1,
) -> Tensor:
    """2-D cross-correlation (no kernel flip) with stride, zero padding, groups.

    ``x`` is [B, C_in, H, W]; ``w`` is [C_out, C_in/groups, kh, kw].
    ``groups == C_in`` with matching C_out is the depthwise case.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-d operands, got shapes {x.shape} and {w.shape}")
    batch, c_in, h, wth = x.shape
    c_out, c_in_g, kh, kw = w.shape
    if c_in % groups != 0 or c_out % groups != 0:
        raise DimensionError(f"conv2d: groups={groups} does not divide channels {c_in}->{c_out}")
    if c_in_g != c_in // groups:
        raise DimensionError(f"conv2d: weight shape {w.shape} inconsistent with {c_in} input channels and groups={groups}")
    out_h = conv_output_extent(h, kh, stride, padding)
    out_w = conv_output_extent(wth, kw, stride, padding)
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(
            f"conv2d: non-positive output extent {out_h}x{out_w} for input {h}x{wth}, kernel {kh}x{kw}, stride {stride}, padding {padding}"
        )

    if padding:
        xp = np.zeros((batch, c_in, h + 2 * padding, wth + 2 * padding), dtype=x.data.dtype)
        xp[:, :, padding : padding + h, padding : padding + wth] = x.data
    else:
        xp = x.data

    n = out_h * out_w
    ckk = c_in_g * kh * kw
    og = c_out // groups
    patches = _im2col(xp, kh, kw, stride, out_h, out_w)
    # [B, groups, C_in/g * kh * kw, N]
    cols = patches.reshape(batch, groups, ckk, n)
    w2 = w.data.reshape(groups, og, ckk)
    out = np.matmul(w2, cols).reshape(batch, c_out, out_h, out_w)
    if bias is not None:
        if bias.shape != (c_out,):
            raise DimensionError(f"conv2d: bias shape {bias.shape} does not match {c_out} output channels")
        out = out + bias.data[None, :, None, None]

    parents = (x, w) if bias is None else (x, w, bias)

    def backward(g):
        gy = g.reshape(batch, groups, og, n)
        if w.requires_grad:
            dw = np.matmul(gy, cols.transpose(0, 1, 3, 2)).sum(axis=0)
            _accumulate(w, dw.reshape(w.shape))
        if x.requires_grad:
            dcols = np.matmul(w2.transpose(0, 2, 1), gy)
            dxp = _col2im(
                dcols.reshape(batch, c_in, kh, kw, out_h, out_w), xp.shape, kh, kw, stride
            )
            if padding:
                dxp = dxp[:, :, padding : padding + h, padding : padding + wth]
            _accumulate(x, dxp)
        if bias is not None:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return _from_op(out, parents, backward)


# -- normalization -------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-token normalization over the last axis (population variance)."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"layer_norm: gamma/beta shapes {gamma.shape}/{beta.shape} do not match channel count {c}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xmu = x.data - mu
    var = (xmu * xmu).mean(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xmu * ivar
    out = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).reshape(-1, c).sum(axis=0))
        if beta.requires_grad:
            _accumulate(beta, g.reshape(-1, c).sum(axis=0))
        if x.requires_grad:
            dxhat = g * gamma.data
            dx = ivar / c * (
                c * dxhat
                - dxhat.sum(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
            )
            _accumulate(x, dx)

    return _from_op(out, (x, gamma, beta), backward)


# -- bilinear upsampling --------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _upsample_weights(extent: int, dtype_str: str) -> np.ndarray:
    """Dense [2*extent, extent] interpolation matrix, align-corners-false."""
    m = np.zeros((2 * extent, extent), dtype=np.dtype(dtype_str))
    for i in range(2 * extent):
        src = max((i + 0.5) / 2.0 - 0.5, 0.0)
        i0 = min(int(math.floor(src)), extent - 1)
        i1 = min(i0 + 1, extent - 1)
        w1 = src - i0
        m[i, i0] += 1.0 - w1
        m[i, i1] += w1
    return m


def upsample2x_bilinear(x: Tensor) -> Tensor:
    """[B, C, H, W] -> [B, C, 2H, 2W] bilinear interpolation (align_corners=False)."""
    if x.ndim != 4:
        raise DimensionError(f"upsample2x_bilinear: expected 4-d input, got shape {x.shape}")
    h, w = x.shape[-2:]
    wr = _upsample_weights(h, x.data.dtype.str)
    wc = _upsample_weights(w, x.data.dtype.str)
    out = np.matmul(np.matmul(wr, x.data), wc.T)

    def backward(g):
        _accumulate(x, np.matmul(np.matmul(wr.T, g), wc))
    return _from_op(out, (x,), backward)
