"""Dense float64 tensors with taped reverse-mode gradients.

Tensors are always 2-D (scalars are 1x1, vectors are columns). Operations
never broadcast, with the single exception of scalar multiplication; any
shape mismatch raises ShapeError naming the operation. While a GradTape is
active on the current thread, every operation whose inputs participate in
the gradient chain records its backward rule; ``GradTape.backward`` then
replays the records in reverse, accumulating into ``Tensor.grad``.

Independent tapes on different threads do not interact. There is no
implicit global state beyond the per-thread active tape.
"""

import math
import threading
from contextlib import contextmanager

import numpy as np

from .errors import NumericalError, ShapeError, TapeStateError

__all__ = [
    "Tensor",
    "GradTape",
    "debug_checks",
    "add",
    "sub",
    "mul",
    "matmul",
    "scalar_mul",
    "sigmoid",
    "tanh",
    "concat",
    "slice_block",
    "tensor_sum",
    "softmax",
    "power",
    "log2",
    "gather_columns",
    "expand_cols",
    "finite_diff_check",
]

_LOCAL = threading.local()
_DEBUG = False


def _active_tape():
    return getattr(_LOCAL, "tape", None)


@contextmanager
def debug_checks():
    """Within this context every op verifies its output is finite."""
    global _DEBUG
    prev = _DEBUG
    _DEBUG = True
    try:
        yield
    finally:
        _DEBUG = prev


class Tensor:
    """A 2-D float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar for the model code
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class GradTape:
    """Execution-ordered record of operations for one reverse sweep.

    Use as a context manager around the forward computation; ops executed
    inside append themselves in order (a topological order by construction).
    ``backward`` may be called once.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._live: set[int] = set()
        self._used = False

    def __enter__(self):
        if _active_tape() is not None:
            raise TapeStateError("a GradTape is already active on this thread")
        _LOCAL.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _LOCAL.tape = None
        return False

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        """Fill ``grad`` on every participating tensor with d(loss)/d(tensor)."""
        if self._used:
            raise TapeStateError("backward already ran on this tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"loss must be scalar (1x1), got {loss.shape}")
        if id(loss) not in self._live:
            raise TapeStateError("loss was not produced by operations on this tape")
        self._used = True
        loss.grad = np.ones((1, 1))
        for out, inputs, backward_fn in reversed(self._records):
            g = out.grad
            if g is None:
                continue
            grads = backward_fn(g)
            for inp, gi in zip(inputs, grads):
                if gi is None:
                    continue
                if not (inp.requires_grad or id(inp) in self._live):
                    continue
                if inp.grad is None:
                    inp.grad = gi.copy() if gi.base is not None or gi is g else gi
                else:
                    inp.grad += gi


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _finish(name: str, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _DEBUG and not np.all(np.isfinite(out.data)):
        raise NumericalError(f"{name} produced a non-finite value")
    tape = _active_tape()
    if tape is not None and any(t.requires_grad or id(t) in tape._live for t in inputs):
        tape._records.append((out, inputs, backward_fn))
        tape._live.add(id(out))
    return out


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data)
    return _finish("add", out, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data - b.data)
    return _finish("sub", out, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    """Elementwise product; shapes must match exactly."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data * b.data)
    return _finish("mul", out, (a, b), lambda g: (g * b.data, g * a.data))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims of {a.shape} and {b.shape} differ")
    out = Tensor(a.data @ b.data)
    return _finish("matmul", out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def scalar_mul(s, x) -> Tensor:
    """Multiply a tensor by a scalar (python float or 1x1 tensor).

    The only op that broadcasts.
    """
    x = _as_tensor(x)
    if isinstance(s, Tensor):
        if s.shape != (1, 1):
            raise ShapeError(f"scalar_mul: scalar operand must be 1x1, got {s.shape}")
        out = Tensor(s.data[0, 0] * x.data)

        def backward(g):
            return (np.array([[np.sum(g * x.data)]]), s.data[0, 0] * g)

        return _finish("scalar_mul", out, (s, x), backward)
    c = float(s)
    out = Tensor(c * x.data)
    return _finish("scalar_mul", out, (x,), lambda g: (c * g,))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="ignore"):
        val = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(val)
    return _finish("sigmoid", out, (x,), lambda g: (g * val * (1.0 - val),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    val = np.tanh(x.data)
    out = Tensor(val)
    return _finish("tanh", out, (x,), lambda g: (g * (1.0 - val * val),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(_as_tensor(t) for t in tensors)
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    if axis not in (0, 1):
        raise ShapeError(f"concat: axis must be 0 or 1, got {axis}")
    other = 1 - axis
    width = tensors[0].shape[other]
    for t in tensors:
        if t.shape[other] != width:
            raise ShapeError(
                f"concat: shapes {[t.shape for t in tensors]} differ on axis {other}"
            )
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        if axis == 0:
            return tuple(g[offsets[i]:offsets[i + 1], :] for i in range(len(tensors)))
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(tensors)))

    return _finish("concat", out, tensors, backward)


def slice_block(x, rows: tuple[int, int] | None = None, cols: tuple[int, int] | None = None) -> Tensor:
    """Contiguous sub-block x[r0:r1, c0:c1]; None keeps the full extent."""
    x = _as_tensor(x)
    r0, r1 = rows if rows is not None else (0, x.shape[0])
    c0, c1 = cols if cols is not None else (0, x.shape[1])
    if not (0 <= r0 < r1 <= x.shape[0] and 0 <= c0 < c1 <= x.shape[1]):
        raise ShapeError(f"slice: block ({rows},{cols}) outside tensor of shape {x.shape}")
    out = Tensor(x.data[r0:r1, c0:c1].copy())

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[r0:r1, c0:c1] = g
        return (gx,)

    return _finish("slice", out, (x,), backward)


def tensor_sum(x, axis: int | None = None) -> Tensor:
    """Sum all entries (1x1 result) or along one axis (keeping 2-D shape)."""
    x = _as_tensor(x)
    if axis is None:
        out = Tensor(np.array([[x.data.sum()]]))
        return _finish("sum", out, (x,), lambda g: (np.full_like(x.data, g[0, 0]),))
    if axis not in (0, 1):
        raise ShapeError(f"sum: axis must be None, 0 or 1, got {axis}")
    out = Tensor(x.data.sum(axis=axis, keepdims=True))

    def backward(g):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _finish("sum", out, (x,), backward)


def softmax(x, axis: int = 0) -> Tensor:
    """Numerically stable softmax along one axis."""
    x = _as_tensor(x)
    if axis not in (0, 1):
        raise ShapeError(f"softmax: axis must be 0 or 1, got {axis}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    val = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(val)

    def backward(g):
        dot = np.sum(g * val, axis=axis, keepdims=True)
        return (val * (g - dot),)

    return _finish("softmax", out, (x,), backward)


def power(x, exponent: float) -> Tensor:
    """Elementwise x ** exponent for a constant exponent."""
    x = _as_tensor(x)
    p = float(exponent)
    out = Tensor(x.data ** p)
    if p == 0.0:
        return _finish("power", out, (x,), lambda g: (np.zeros_like(x.data),))
    return _finish("power", out, (x,), lambda g: (g * p * x.data ** (p - 1.0),))


def log2(x) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = Tensor(np.log2(x.data))
    inv_ln2 = 1.0 / math.log(2.0)
    return _finish("log2", out, (x,), lambda g: (g * inv_ln2 / x.data,))


def gather_columns(x, indices) -> Tensor:
    """Select columns of ``x`` by index, duplicates allowed.

    The gradient scatters back additively, so repeated indices accumulate.
    """
    x = _as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ShapeError("gather_columns: need at least one index")
    if idx.min() < 0 or idx.max() >= x.shape[1]:
        raise IndexError(
            f"gather_columns: index range [{idx.min()},{idx.max()}] outside {x.shape[1]} columns"
        )
    out = Tensor(x.data[:, idx])

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx.T, idx, g.T)
        return (gx,)

    return _finish("gather", out, (x,), backward)


def expand_cols(x, n: int) -> Tensor:
    """Tile a column vector across ``n`` columns (explicit expansion)."""
    x = _as_tensor(x)
    if x.shape[1] != 1:
        raise ShapeError(f"expand_cols: expected a column vector, got {x.shape}")
    return matmul(x, Tensor(np.ones((1, n))))


def finite_diff_check(f, params, eps: float = 1e-5) -> float:
    """Max relative error between taped gradients of ``f`` and central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor computed from
    the current values of ``params``. Parameter data is perturbed in place
    and restored. Relative error per coordinate is
    |ga - gn| / max(1e-8, |ga| + |gn|).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with GradTape() as tape:
        loss = f()
    tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f().item()
            flat[i] = orig - eps
            down = f().item()
            flat[i] = orig
            gn = (up - down) / (2.0 * eps)
            gai = ga.ravel()[i]
            err = abs(gai - gn) / max(1e-8, abs(gai) + abs(gn))
            worst = max(worst, err)
    return worst
