"""Dense float64 tensors with reverse-mode automatic differentiation.

Operations record themselves on the active ``Tape`` whenever any operand
requires gradients; ``Tape.backward`` then walks the recording in reverse
and accumulates ``.grad`` on every participating tensor.  The op set is
deliberately small and every gradient rule lives next to its forward
formula so it can be audited line by line.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, NumericError, StateError

_CHECK_FINITE = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection on every op output (off by default)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(enabled)


def _check_finite(arr: np.ndarray, opname: str) -> np.ndarray:
    if _CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise NumericError(f"{opname} produced non-finite values")
    return arr


class Tensor:
    """A dense row-major float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; the module-level functions do the real work
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class _TapeNode:
    __slots__ = ("output", "inputs", "backward_fn")

    def __init__(self, output: Tensor, inputs: tuple, backward_fn: Callable):
        self.output = output
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered recording of ops; supports exactly one backward pass.

    Use as a context manager around the forward computation::

        with Tape() as tape:
            loss = ...
            tape.backward(loss)

    Ops executed outside any tape context are pure inference and record
    nothing.
    """

    def __init__(self):
        self._nodes: list[_TapeNode] = []
        self._tracked: dict[int, Tensor] = {}
        self._spent = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, node: _TapeNode) -> None:
        if self._spent:
            raise StateError("tape already consumed by backward; start a new tape")
        self._nodes.append(node)
        self._tracked[id(node.output)] = node.output
        for t in node.inputs:
            if t.requires_grad:
                self._tracked[id(t)] = t

    def backward(self, loss: Tensor) -> None:
        """Populate .grad = d(loss)/d(tensor) on every tracked tensor.

        Tensors recorded on this tape but unreachable from the loss end
        up with zero gradients.
        """
        if self._spent:
            raise StateError("backward already ran on this tape")
        if not self._nodes:
            raise StateError("cannot run backward on an empty tape")
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._tracked:
            raise ContractError("loss was not produced on this tape")
        self._spent = True

        for t in self._tracked.values():
            t.grad = np.zeros_like(t.data)
        loss.grad = np.ones_like(loss.data)

        for node in reversed(self._nodes):
            gout = node.output.grad
            grads = node.backward_fn(gout)
            for t, g in zip(node.inputs, grads):
                if g is None or not t.requires_grad:
                    continue
                t.grad += g.reshape(t.data.shape)


_TAPE_STACK: list[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(out_data: np.ndarray, inputs: tuple, backward_fn: Callable, opname: str) -> Tensor:
    out = Tensor(_check_finite(out_data, opname))
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._record(_TapeNode(out, inputs, backward_fn))
    return out


def _broadcast_check(sa: tuple, sb: tuple, opname: str) -> None:
    # numpy-style right alignment; each dim must match or be 1 on one side
    for da, db in zip(reversed(sa), reversed(sb)):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"{opname}: incompatible shapes {sa} and {sb}")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradients over dims that broadcasting expanded."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "add")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bwd, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "sub")

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bwd, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "mul")

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bwd, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check(a.shape, b.shape, "div")

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _make(a.data / b.data, (a, b), bwd, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (-g,)

    return _make(-a.data, (a,), bwd, "neg")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    """Matrix product: 2-D x 2-D, or stacked with identical batch dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} vs {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: batch dims differ, {a.shape} vs {b.shape}")

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _make(a.data @ b.data, (a, b), bwd, "matmul")


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd, "sum")


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy() / count,)

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd, "mean")


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    if not ts:
        raise ContractError("concat needs at least one tensor")
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bwd, "concat")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (g.reshape(a.shape),)

    return _make(a.data.reshape(shape), (a,), bwd, "reshape")


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)

    def bwd(g):
        return (g.transpose(inverse),)

    return _make(a.data.transpose(axes), (a,), bwd, "transpose")


def gather_rows(a, indices) -> Tensor:
    """Select rows along axis 0; gradients scatter-add back."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError(f"gather_rows needs 1-D indices, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ContractError(f"gather_rows: index out of range for {a.shape[0]} rows")

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make(a.data[idx], (a,), bwd, "gather_rows")


def index_add_rows(src, indices, num_rows: int) -> Tensor:
    """out[r] = sum of src rows whose index equals r (deterministic order)."""
    src = as_tensor(src)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.shape != (src.shape[0],):
        raise DimensionError(
            f"index_add_rows: indices shape {idx.shape} must match rows {src.shape[0]}"
        )
    out_data = np.zeros((num_rows,) + src.shape[1:], dtype=np.float64)
    np.add.at(out_data, idx, src.data)

    def bwd(g):
        return (g[idx],)

    return _make(out_data, (src,), bwd, "index_add_rows")


# ---------------------------------------------------------------------------
# nonlinearities


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _make(y, (a,), bwd, "sigmoid")


def silu(a) -> Tensor:
    """x * sigmoid(x), the smooth nonlinearity used by all MLPs here."""
    a = as_tensor(a)
    s = _sigmoid(a.data)

    def bwd(g):
        return (g * (s + a.data * s * (1.0 - s)),)

    return _make(a.data * s, (a,), bwd, "silu")


def exp(a) -> Tensor:
    a = as_tensor(a)
    y = np.exp(a.data)

    def bwd(g):
        return (g * y,)

    return _make(y, (a,), bwd, "exp")


def log(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (g / a.data,)

    return _make(np.log(a.data), (a,), bwd, "log")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    y = np.sqrt(a.data)

    def bwd(g):
        return (g / (2.0 * y),)

    return _make(y, (a,), bwd, "sqrt")


def square(a) -> Tensor:
    a = as_tensor(a)

    def bwd(g):
        return (g * 2.0 * a.data,)

    return _make(a.data * a.data, (a,), bwd, "square")


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (a,), bwd, "softmax")


def log_softmax(a) -> Tensor:
    """log(softmax) over the last axis, computed stably."""
    a = as_tensor(a)
    m = a.data.max(axis=-1, keepdims=True)
    shifted = a.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)

    def bwd(g):
        return (g - sm * g.sum(axis=-1, keepdims=True),)

    return _make(y, (a,), bwd, "log_softmax")


def norm_last(a, keepdims: bool = False) -> Tensor:
    """Euclidean norm over the last axis; zero vectors get zero gradient."""
    a = as_tensor(a)
    n = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, -1)
        safe = np.where(n == 0.0, 1.0, n)
        return (g * a.data / safe,)

    out = n if keepdims else n.squeeze(-1)
    return _make(out, (a,), bwd, "norm_last")


# ---------------------------------------------------------------------------
# optimizer and schedule


class AdamState:
    """Per-parameter first/second moment accumulators for Adam."""

    def __init__(self, params: Sequence[Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, base_lr: float = 1e-3):
        self.params = list(params)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.base_lr = base_lr


def adam_step(state: AdamState, params: Sequence[Tensor], lr: float) -> None:
    """One bias-corrected Adam update; zeroes grads and bumps the counter."""
    params = list(params)
    if lr < 0:
        raise ContractError(f"learning rate must be >= 0, got {lr}")
    if len(params) != len(state.params):
        raise StateError("parameter list does not match optimizer state")
    for p, sp in zip(params, state.params):
        if p is not sp:
            raise StateError("parameter identity does not match optimizer state")
        if p.grad is None:
            raise StateError("adam_step called with missing gradients; run backward first")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / (1.0 - b1 ** t)
        v_hat = state.v[i] / (1.0 - b2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.grad = np.zeros_like(p.data)


def lr_at_step(step: int, warmup: int, total: int, base_lr: float) -> float:
    """Linear ramp 0 -> base_lr over [0, warmup], then linear decay to 0 at total."""
    if warmup >= total:
        raise ConfigError(f"warmup ({warmup}) must be smaller than total steps ({total})")
    if warmup <= 0:
        raise ConfigError(f"warmup must be positive, got {warmup}")
    if not 0 <= step <= total:
        raise ConfigError(f"step {step} outside [0, {total}]")
    if step <= warmup:
        return base_lr * step / warmup
    return base_lr * (total - step) / (total - warmup)
