"""Dense float tensors with reverse-mode differentiation.

Small by design: enough machinery for desk-scale convolutional networks and
the image losses built on top of them. Forward values are plain numpy arrays;
gradients are accumulated by replaying a recording tape backwards. There is
no graph compilation, no higher-order differentiation and no GPU path.

Key choices:
  - Ops record onto the active ``Tape`` (a contextvar, so independent tapes
    may live on independent threads). With no active tape, ops run in pure
    inference mode and build no graph.
  - 64-bit floats are the default; training code passes 32-bit arrays and
    every op preserves the incoming dtype.
  - Convolution is evaluated as one GEMM per kernel offset on strided views,
    which is exact (no FFT) and fast enough for images up to ~128x128.
"""

from __future__ import annotations

import contextvars
import json
from pathlib import Path

import numpy as np

DEFAULT_DTYPE = np.float64

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "darklight_active_tape", default=None
)


class Tape:
    """Ordered record of primitive ops, replayed in reverse by backward().

    A tape is confined to one logical thread. Entering the context makes it
    the recording target for every op executed inside.
    """

    def __init__(self):
        self.records: list[Tensor] = []
        self.consumed = False
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._token)
        self._token = None


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


class Tensor:
    """N-dimensional float array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._tape: Tape | None = None

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _record(out: Tensor, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Attach graph edges to `out` and append it to the active tape.

    Skipped entirely when no parent needs a gradient or no tape is active,
    so inference-only paths carry zero bookkeeping.
    """
    if not any(p.requires_grad or p._parents for p in parents):
        return out
    tape = _ACTIVE_TAPE.get()
    if tape is None:
        return out
    out.requires_grad = True
    out._parents = parents
    out._backward = backward_fn
    out._tape = tape
    tape.records.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not (t.requires_grad or t._parents):
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a gradient back to the shape of a broadcast operand."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor) -> None:
    """Populate grads of every tensor reachable from a scalar loss.

    Replays the loss's tape once, in reverse recording order; each visited
    record contributes its local vector-Jacobian product. The replay consumes
    the tape: its graph (records, parent edges, backward closures) is severed
    afterwards so the step's intermediates free by reference count alone, and
    a second backward through the same tape raises.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise ValueError("loss was not recorded on a tape; wrap the forward pass in `with Tape():`")
    if tape.consumed:
        raise ValueError("this tape was already replayed; record a fresh forward pass")

    reachable: set[int] = set()
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in reachable:
            continue
        reachable.add(id(t))
        stack.extend(t._parents)

    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.records):
        if id(node) not in reachable or node._backward is None:
            continue
        if node.grad is None:
            continue  # recorded but not on any path contributing to the loss
        node._backward(node.grad)

    # Records reference the tape and the tape references the records; breaking
    # the cycle here keeps step graphs from waiting on the garbage collector.
    for node in tape.records:
        node._parents = ()
        node._backward = None
    tape.records.clear()
    tape.consumed = True


# -- elementwise primitives ---------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _record(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _record(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _record(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.data == 0):
        raise ValueError("div: divisor contains zero entries")
    out = Tensor(a.data / b.data)

    def bwd(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _record(out, (a, b), bwd)


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = Tensor(np.where(mask, a.data, 0.0))

    def bwd(g):
        _accum(a, g * mask)

    return _record(out, (a,), bwd)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # Split by sign for numerical stability at large |x|.
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = Tensor(s)

    def bwd(g):
        _accum(a, g * s * (1.0 - s))

    return _record(out, (a,), bwd)


def exp(a) -> Tensor:
    a = as_tensor(a)
    e = np.exp(a.data)
    out = Tensor(e)

    def bwd(g):
        _accum(a, g * e)

    return _record(out, (a,), bwd)


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise ValueError("log: operand has entries <= 0")
    out = Tensor(np.log(a.data))

    def bwd(g):
        _accum(a, g / a.data)

    return _record(out, (a,), bwd)


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.abs(a.data))
    sign = np.sign(a.data)

    def bwd(g):
        _accum(a, g * sign)

    return _record(out, (a,), bwd)


def maximum_scalar(a, floor: float) -> Tensor:
    """max(a, floor); the subgradient at the tie goes to the floor side."""
    a = as_tensor(a)
    mask = a.data > floor
    out = Tensor(np.where(mask, a.data, floor))

    def bwd(g):
        _accum(a, g * mask)

    return _record(out, (a,), bwd)


def clamp01_st(a) -> Tensor:
    """Clamp to [0, 1] with a straight-through gradient."""
    a = as_tensor(a)
    out = Tensor(np.clip(a.data, 0.0, 1.0))

    def bwd(g):
        _accum(a, g)

    return _record(out, (a,), bwd)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "relu": relu,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "abs": absolute,
}


def elementwise(op: str, a, b=None) -> Tensor:
    """Dispatch an elementwise op by name; binary ops require `b`."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    if op in ("add", "sub", "mul", "div"):
        if b is None:
            raise ValueError(f"elementwise {op!r} needs two operands")
        return fn(a, b)
    if b is not None:
        raise ValueError(f"elementwise {op!r} is unary")
    return fn(a)


# -- reductions ---------------------------------------------------------------


def tsum(a) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ValueError("sum of an empty tensor")
    out = Tensor(a.data.sum())

    def bwd(g):
        _accum(a, np.broadcast_to(g, a.shape).astype(a.dtype, copy=False))

    return _record(out, (a,), bwd)


def tmean(a) -> Tensor:
    a = as_tensor(a)
    if a.data.size == 0:
        raise ValueError("mean of an empty tensor")
    n = a.data.size
    out = Tensor(a.data.mean())

    def bwd(g):
        _accum(a, np.broadcast_to(g / n, a.shape).astype(a.dtype, copy=False))

    return _record(out, (a,), bwd)


def spatial_mean(a) -> Tensor:
    """Average the trailing two axes: [..., C, H, W] -> [..., C]."""
    a = as_tensor(a)
    if a.ndim < 3:
        raise ValueError(f"spatial_mean needs rank >= 3, got shape {a.shape}")
    if a.data.size == 0:
        raise ValueError("spatial_mean of an empty tensor")
    h, w = a.shape[-2], a.shape[-1]
    out = Tensor(a.data.mean(axis=(-1, -2)))

    def bwd(g):
        _accum(a, np.broadcast_to(g[..., None, None] / (h * w), a.shape).astype(a.dtype, copy=False))

    return _record(out, (a,), bwd)


def mean_axis(a, axis: int, keepdims: bool = True) -> Tensor:
    """Mean along one axis."""
    a = as_tensor(a)
    if a.data.size == 0:
        raise ValueError("mean of an empty tensor")
    axis = axis % a.ndim
    n = a.shape[axis]
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))

    def bwd(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(gg / n, a.shape).astype(a.dtype, copy=False))

    return _record(out, (a,), bwd)


_REDUCE = {"sum": tsum, "mean": tmean, "spatial_mean": spatial_mean}


def reduce(op: str, a) -> Tensor:
    try:
        return _REDUCE[op](a)
    except KeyError:
        raise ValueError(f"unknown reduce op {op!r}") from None


# -- structural ops -----------------------------------------------------------


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    """Differentiable reshape (same element count, row-major)."""
    a = as_tensor(a)
    if int(np.prod(a.shape)) != int(np.prod(shape)):
        raise ValueError(f"cannot reshape {a.shape} to {shape}")
    out = Tensor(a.data.reshape(shape))

    def bwd(g):
        _accum(a, g.reshape(a.shape))

    return _record(out, (a,), bwd)


def cast(a, dtype) -> Tensor:
    """Differentiable dtype cast; the gradient is cast back on the way down."""
    a = as_tensor(a)
    out = Tensor(a.data.astype(dtype))

    def bwd(g):
        _accum(a, g.astype(a.dtype))

    return _record(out, (a,), bwd)


def concat0(parts: list) -> Tensor:
    """Differentiable concatenation along the leading axis."""
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValueError("concat0 of nothing")
    out = Tensor(np.concatenate([p.data for p in parts], axis=0))
    sizes = [p.shape[0] for p in parts]

    def bwd(g):
        lo = 0
        for p, n in zip(parts, sizes):
            _accum(p, g[lo : lo + n])
            lo += n

    return _record(out, tuple(parts), bwd)


def take_range(a, lo: int, hi: int) -> Tensor:
    """Differentiable slice [lo:hi] of the leading axis."""
    a = as_tensor(a)
    out = Tensor(a.data[lo:hi])

    def bwd(g):
        gi = np.zeros_like(a.data)
        gi[lo:hi] = g
        _accum(a, gi)

    return _record(out, (a,), bwd)


def forward_diff(a, axis: int) -> Tensor:
    """Forward difference along `axis`, zero-padded at the trailing edge."""
    a = as_tensor(a)
    n = a.shape[axis]
    if n < 2:
        raise ValueError(f"forward_diff needs extent >= 2 along axis {axis}, got shape {a.shape}")
    d = np.zeros_like(a.data)
    lead = np.take(a.data, range(1, n), axis=axis) - np.take(a.data, range(0, n - 1), axis=axis)
    sl = [slice(None)] * a.ndim
    sl[axis] = slice(0, n - 1)
    d[tuple(sl)] = lead
    out = Tensor(d)

    def bwd(g):
        gi = np.zeros_like(a.data)
        head = [slice(None)] * a.ndim
        head[axis] = slice(0, n - 1)
        tail = [slice(None)] * a.ndim
        tail[axis] = slice(1, n)
        gm = g[tuple(head)]
        gi[tuple(tail)] += gm
        gi[tuple(head)] -= gm
        _accum(a, gi)

    return _record(out, (a,), bwd)


def upsample_nearest(a, factor: int) -> Tensor:
    """Nearest-neighbour upsampling of the trailing two axes."""
    a = as_tensor(a)
    if a.ndim < 2:
        raise ValueError(f"upsample_nearest needs rank >= 2, got shape {a.shape}")
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    if factor == 1:
        up = a.data.copy()
    else:
        up = a.data.repeat(factor, axis=-2).repeat(factor, axis=-1)
    out = Tensor(up)
    h, w = a.shape[-2], a.shape[-1]

    def bwd(g):
        gr = g.reshape(g.shape[:-2] + (h, factor, w, factor)).sum(axis=(-3, -1))
        _accum(a, gr)

    return _record(out, (a,), bwd)


# Largest per-pixel contraction (C_in * k * k) routed through the im2col GEMM;
# wider contractions switch to per-offset tensordots, which keep memory traffic
# proportional to the input instead of the column matrix. Both routes compute
# the same sums, only the evaluation order moves.
_IM2COL_MAX = 48


def _conv_out_extent(n: int, k: int, stride: int, padding: int) -> int:
    span = n + 2 * padding - k
    if span < 0 or span % stride != 0:
        raise ValueError(
            f"conv2d: extent {n} with kernel {k}, stride {stride}, padding {padding} "
            f"does not yield an integral output extent"
        )
    return span // stride + 1


def conv2d(inp, weight, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation.

    `inp` is [C_in, H, W] or [B, C_in, H, W]; `weight` is [C_out, C_in, k, k].
    Output extent (H + 2*padding - k)/stride + 1 must be integral.
    """
    inp, weight = as_tensor(inp), as_tensor(weight)
    batched = inp.ndim == 4
    if inp.ndim not in (3, 4):
        raise ValueError(f"conv2d: input must be rank 3 or 4, got shape {inp.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d: weight must be [C_out, C_in, k, k], got shape {weight.shape}")
    x = inp.data if batched else inp.data[None]
    b, cin, h, w = x.shape
    cout, wcin, k, _ = weight.shape
    if wcin != cin:
        raise ValueError(
            f"conv2d: input channels {cin} do not match weight channels {wcin} "
            f"(input {inp.shape}, weight {weight.shape})"
        )
    if padding < 0:
        raise ValueError("conv2d: padding must be >= 0")
    ho = _conv_out_extent(h, k, stride, padding)
    wo = _conv_out_extent(w, k, stride, padding)

    if padding:
        xp = np.zeros((b, cin, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, :, padding:-padding, padding:-padding] = x
    else:
        xp = x
    wd = weight.data

    # Two exact evaluation routes, picked by shape: an im2col GEMM when the
    # per-pixel contraction is small enough that the column matrix stays
    # cheap, otherwise one BLAS contraction per kernel offset over strided
    # views of the padded input.
    if cin * k * k <= _IM2COL_MAX:
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, ::stride, ::stride]
        col = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
            b * ho * wo, cin * k * k
        )
        wmat = wd.reshape(cout, cin * k * k)
        out = (col @ wmat.T).reshape(b, ho, wo, cout)
        out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

        def bwd(g):
            gg = g if batched else g[None]
            gmat = np.ascontiguousarray(gg.transpose(0, 2, 3, 1)).reshape(b * ho * wo, cout)
            if weight.requires_grad or weight._parents:
                _accum(weight, (gmat.T @ col).reshape(wd.shape))
            if inp.requires_grad or inp._parents:
                gcol = (gmat @ wmat).reshape(b, ho, wo, cin, k, k)
                gcol = gcol.transpose(0, 3, 1, 2, 4, 5)
                gxp = np.zeros((b, cin, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
                for i in range(k):
                    for j in range(k):
                        gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcol[
                            :, :, :, :, i, j
                        ]
                gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
                _accum(inp, gx if batched else gx[0])

    else:
        acc = np.zeros((cout, b, ho, wo), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
                acc += np.tensordot(wd[:, :, i, j], patch, axes=([1], [1]))
        out = np.ascontiguousarray(acc.transpose(1, 0, 2, 3))

        def bwd(g):
            gg = g if batched else g[None]
            if weight.requires_grad or weight._parents:
                gw = np.empty_like(wd)
                for i in range(k):
                    for j in range(k):
                        patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
                        gw[:, :, i, j] = np.tensordot(gg, patch, axes=([0, 2, 3], [0, 2, 3]))
                _accum(weight, gw)
            if inp.requires_grad or inp._parents:
                # Accumulate in [C_in, B, Hp, Wp] layout so each offset lands
                # as one strided add, transpose once at the end.
                gxp = np.zeros((cin,) + xp.shape[0:1] + xp.shape[2:], dtype=x.dtype)
                for i in range(k):
                    for j in range(k):
                        gxp[
                            :, :, i : i + stride * ho : stride, j : j + stride * wo : stride
                        ] += np.tensordot(wd[:, :, i, j], gg, axes=([0], [1]))
                gxp = gxp.transpose(1, 0, 2, 3)
                gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
                _accum(inp, gx if batched else gx[0])

    result = Tensor(out if batched else out[0])
    return _record(result, (inp, weight), bwd)


# -- weight persistence --------------------------------------------------------

_MANIFEST_SUFFIX = ".json"


def save_weights(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named arrays as one flat little-endian blob plus a JSON manifest.

    The manifest lives next to the blob at `<path>.json`. Round-trips are
    bit-exact for float32 and float64 payloads.
    """
    path = Path(path)
    entries = []
    offset = 0
    blobs = []
    for name, t in tensors.items():
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        if arr.dtype == np.float64:
            code = "<f8"
        elif arr.dtype == np.float32:
            code = "<f4"
        else:
            raise ValueError(f"save_weights: unsupported dtype {arr.dtype} for {name!r}")
        raw = np.ascontiguousarray(arr, dtype=code).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": code, "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    path.write_bytes(b"".join(blobs))
    manifest = {"tensors": entries}
    if meta:
        manifest["meta"] = meta
    Path(str(path) + _MANIFEST_SUFFIX).write_text(json.dumps(manifest, indent=1))


def load_weights(path) -> tuple[dict, dict]:
    """Read a weight archive; returns (name -> ndarray, meta)."""
    path = Path(path)
    manifest = json.loads(Path(str(path) + _MANIFEST_SUFFIX).read_text())
    raw = path.read_bytes()
    out = {}
    for e in manifest["tensors"]:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(raw, dtype=e["dtype"], count=n, offset=e["offset"])
        out[e["name"]] = arr.reshape(e["shape"]).copy()
    return out, manifest.get("meta", {})
