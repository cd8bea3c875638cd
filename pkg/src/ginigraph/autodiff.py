"""Reverse-mode automatic differentiation on float64 numpy matrices.

Every value is a 2-D float64 array (scalars are 1x1). A Tape records the
operations of one forward pass in creation order; Tape.backward walks the
record in reverse and accumulates gradients into every reachable node, so a
single forward graph supports several backward sweeps (each sweep resets the
stored gradients first).

Forward values never depend on whether tracing is on: a Tape built with
tracing=False runs the identical numpy code and simply skips recording.
Every operation checks its output for NaN/Inf and raises NumericalError on
the first non-finite entry, which is how training detects divergence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, DimensionError, DomainError, NumericalError

Array = np.ndarray


def _as_matrix(values) -> Array:
    """Coerce input to a float64 matrix; scalars become 1x1."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(
            f"expected a scalar or 2-D array, got shape {arr.shape}; reshape explicitly"
        )
    return arr


def _ensure_finite(arr: Array, op: str) -> Array:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values produced by op '{op}'")
    return arr


class Tape:
    """Operation record for one forward pass."""

    def __init__(self, tracing: bool = True):
        self.tracing = tracing
        self._nodes: list[Tensor] = []

    def leaf(self, values, name: str | None = None) -> "Tensor":
        """Create an input node (parameter or constant)."""
        return Tensor(_as_matrix(values).copy(), self, name=name)

    def _record(self, t: "Tensor") -> None:
        if self.tracing:
            self._nodes.append(t)

    def backward(self, root: "Tensor") -> None:
        """Accumulate d(root)/d(node) into node.grad for every reachable node.

        root must be scalar (1x1). Clears all gradients on the tape first, so
        repeated calls give independent sweeps over the same forward graph.
        """
        if not self.tracing:
            raise ContractError("backward on a non-tracing tape")
        if root.tape is not self:
            raise ContractError("root tensor belongs to a different tape")
        if root.values.shape != (1, 1):
            raise ContractError(f"backward root must be 1x1, got {root.values.shape}")
        for node in self._nodes:
            node.grad = None
        root.grad = np.ones((1, 1), dtype=np.float64)
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


class Tensor:
    """A node on a tape: a matrix value plus the closure that backpropagates it."""

    __slots__ = ("values", "tape", "name", "op", "parents", "grad", "_backward")

    def __init__(
        self,
        values: Array,
        tape: Tape,
        *,
        name: str | None = None,
        op: str = "leaf",
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[Array], None] | None = None,
    ):
        self.values = values
        self.tape = tape
        self.name = name
        self.op = op
        self.parents = parents
        self.grad: Array | None = None
        self._backward = backward
        tape._record(self)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Tensor({label}, shape={self.values.shape})"

    # Operator sugar; all semantics live in the module-level functions.
    def __add__(self, other):
        return add_const(self, other) if isinstance(other, (int, float)) else add(self, other)

    def __radd__(self, other):
        return add_const(self, other)

    def __sub__(self, other):
        return add_const(self, -other) if isinstance(other, (int, float)) else subtract(self, other)

    def __mul__(self, other):
        return scale(self, other) if isinstance(other, (int, float)) else hadamard(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __truediv__(self, other):
        return scale(self, 1.0 / other) if isinstance(other, (int, float)) else divide(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _accumulate(t: Tensor, g: Array) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _same_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ContractError("operands recorded on different tapes")
    return tape


def _unary(x: Tensor, out: Array, op: str, back: Callable[[Array], Array]) -> Tensor:
    def backward(g: Array) -> None:
        _accumulate(x, back(g))

    return Tensor(_ensure_finite(out, op), x.tape, op=op, parents=(x,), backward=backward)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape(a, b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul mismatch: {a.shape} @ {b.shape}")
    out = _ensure_finite(a.values @ b.values, "matmul")

    def backward(g: Array) -> None:
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return Tensor(out, tape, op="matmul", parents=(a, b), backward=backward)


def spmm(mat: sp.spmatrix, x: Tensor) -> Tensor:
    """Multiply a constant sparse matrix by a tensor: out = mat @ x."""
    if mat.shape[1] != x.shape[0]:
        raise DimensionError(f"spmm mismatch: {mat.shape} @ {x.shape}")
    mat = mat.tocsr()
    out = _ensure_finite(np.asarray(mat @ x.values), "spmm")

    def backward(g: Array) -> None:
        _accumulate(x, np.asarray(mat.T @ g))

    return Tensor(out, x.tape, op="spmm", parents=(x,), backward=backward)


def transpose(x: Tensor) -> Tensor:
    return _unary(x, x.values.T.copy(), "transpose", lambda g: g.T)


def _binary_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    _same_tape(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"{op} needs equal shapes, got {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "add")
    out = _ensure_finite(a.values + b.values, "add")

    def backward(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return Tensor(out, a.tape, op="add", parents=(a, b), backward=backward)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "subtract")
    out = _ensure_finite(a.values - b.values, "subtract")

    def backward(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return Tensor(out, a.tape, op="subtract", parents=(a, b), backward=backward)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "hadamard")
    out = _ensure_finite(a.values * b.values, "hadamard")

    def backward(g: Array) -> None:
        _accumulate(a, g * b.values)
        _accumulate(b, g * a.values)

    return Tensor(out, a.tape, op="hadamard", parents=(a, b), backward=backward)


def divide(a: Tensor, b: Tensor) -> Tensor:
    _binary_same_shape(a, b, "divide")
    if np.any(b.values == 0.0):
        raise DomainError("divide by zero")
    out = _ensure_finite(a.values / b.values, "divide")

    def backward(g: Array) -> None:
        _accumulate(a, g / b.values)
        _accumulate(b, -g * a.values / (b.values * b.values))

    return Tensor(out, a.tape, op="divide", parents=(a, b), backward=backward)


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _unary(x, x.values * c, "scale", lambda g: g * c)


def add_const(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return _unary(x, x.values + c, "add-const", lambda g: g)


def broadcast_scale(x: Tensor, s: Tensor) -> Tensor:
    """Multiply a matrix by a 1x1 tensor (both receive gradients)."""
    _same_tape(x, s)
    if s.shape != (1, 1):
        raise DimensionError(f"broadcast_scale factor must be 1x1, got {s.shape}")
    out = _ensure_finite(x.values * s.values[0, 0], "broadcast-scale")

    def backward(g: Array) -> None:
        _accumulate(x, g * s.values[0, 0])
        _accumulate(s, np.array([[np.sum(g * x.values)]]))

    return Tensor(out, x.tape, op="broadcast-scale", parents=(x, s), backward=backward)


def broadcast_add(x: Tensor, s: Tensor) -> Tensor:
    """Add a 1x1 tensor to every entry of a matrix."""
    _same_tape(x, s)
    if s.shape != (1, 1):
        raise DimensionError(f"broadcast_add term must be 1x1, got {s.shape}")
    out = _ensure_finite(x.values + s.values[0, 0], "broadcast-add")

    def backward(g: Array) -> None:
        _accumulate(x, g)
        _accumulate(s, np.array([[np.sum(g)]]))

    return Tensor(out, x.tape, op="broadcast-add", parents=(x, s), backward=backward)


def colwise_scale(x: Tensor, s: Tensor) -> Tensor:
    """Scale row r of x by s[r, 0]; s must be a column vector of matching height."""
    _same_tape(x, s)
    if s.shape != (x.shape[0], 1):
        raise DimensionError(f"colwise_scale needs ({x.shape[0]},1) factors, got {s.shape}")
    out = _ensure_finite(x.values * s.values, "colwise-scale")

    def backward(g: Array) -> None:
        _accumulate(x, g * s.values)
        _accumulate(s, np.sum(g * x.values, axis=1, keepdims=True))

    return Tensor(out, x.tape, op="colwise-scale", parents=(x, s), backward=backward)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    if not parts:
        raise ContractError("concat_rows needs at least one tensor")
    tape = _same_tape(*parts)
    cols = parts[0].shape[1]
    for p in parts:
        if p.shape[1] != cols:
            raise DimensionError("concat_rows needs equal column counts")
    out = np.concatenate([p.values for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g: Array) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[lo:hi])

    return Tensor(out, tape, op="concat-rows", parents=tuple(parts), backward=backward)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[0]):
        raise DimensionError(f"slice [{start}:{stop}] out of range for {x.shape}")
    out = x.values[start:stop].copy()

    def back(g: Array) -> Array:
        gx = np.zeros_like(x.values)
        gx[start:stop] = g
        return gx

    return _unary(x, out, "slice-rows", back)


def gather_rows(x: Tensor, index: Array) -> Tensor:
    """Select rows by integer index (repeats allowed); backward scatter-adds."""
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise DimensionError("gather index must be 1-D")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise DimensionError("gather index out of range")
    out = x.values[index].copy()

    def back(g: Array) -> Array:
        gx = np.zeros_like(x.values)
        np.add.at(gx, index, g)
        return gx

    return _unary(x, out, "gather-rows", back)


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------


def sum_all(x: Tensor) -> Tensor:
    out = np.array([[np.sum(x.values)]])
    return _unary(x, out, "sum-all", lambda g: np.full_like(x.values, g[0, 0]))


def mean_all(x: Tensor) -> Tensor:
    n = x.values.size
    out = np.array([[np.sum(x.values) / n]])
    return _unary(x, out, "mean-all", lambda g: np.full_like(x.values, g[0, 0] / n))


def row_sum(x: Tensor) -> Tensor:
    """Sum each row to a column vector (n,k) -> (n,1)."""
    out = x.values.sum(axis=1, keepdims=True)
    return _unary(x, out, "row-sum", lambda g: np.repeat(g, x.shape[1], axis=1))


# ---------------------------------------------------------------------------
# Elementwise nonlinearities
# ---------------------------------------------------------------------------


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    v = x.values
    out = np.where(v > 0, v, slope * v)
    return _unary(x, out, "leaky-relu", lambda g: g * np.where(v > 0, 1.0, slope))


def elu(x: Tensor) -> Tensor:
    v = x.values
    out = np.where(v > 0, v, np.expm1(np.minimum(v, 0.0)))
    return _unary(x, out, "elu", lambda g: g * np.where(v > 0, 1.0, out + 1.0))


def sigmoid(x: Tensor) -> Tensor:
    v = x.values
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ez = np.exp(v[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _unary(x, out, "sigmoid", lambda g: g * out * (1.0 - out))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.values)
    return _unary(x, out, "exp", lambda g: g * out)


def log(x: Tensor) -> Tensor:
    if np.any(x.values <= 0.0):
        raise DomainError("log requires strictly positive inputs")
    out = np.log(x.values)
    return _unary(x, out, "log", lambda g: g / x.values)


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x) computed without overflow: max(x,0) + log1p(e^-|x|)."""
    v = x.values
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))

    def back(g: Array) -> Array:
        s = np.empty_like(v)
        pos = v >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
        ez = np.exp(v[~pos])
        s[~pos] = ez / (1.0 + ez)
        return g * s

    return _unary(x, out, "softplus", back)


def sqrt(x: Tensor) -> Tensor:
    """Elementwise square root; gradient is defined as 0 at exactly 0."""
    if np.any(x.values < 0.0):
        raise DomainError("sqrt requires nonnegative inputs")
    out = np.sqrt(x.values)

    def back(g: Array) -> Array:
        gx = np.zeros_like(out)
        nz = out > 0
        gx[nz] = g[nz] / (2.0 * out[nz])
        return gx

    return _unary(x, out, "sqrt", back)


# ---------------------------------------------------------------------------
# Segment operations (grouped rows, used by attention and pooling)
# ---------------------------------------------------------------------------


def _check_segments(segments: Array, num_segments: int, rows: int) -> Array:
    segments = np.asarray(segments, dtype=np.int64)
    if segments.ndim != 1 or segments.size != rows:
        raise DimensionError("segments must be 1-D with one id per row")
    if segments.size and (segments.min() < 0 or segments.max() >= num_segments):
        raise DimensionError("segment id out of range")
    return segments


def segment_softmax(x: Tensor, segments: Array, num_segments: int) -> Tensor:
    """Softmax of a column vector within each segment (max-shifted for stability)."""
    if x.shape[1] != 1:
        raise DimensionError("segment_softmax expects a column vector")
    segments = _check_segments(segments, num_segments, x.shape[0])
    v = x.values[:, 0]
    seg_max = np.full(num_segments, -np.inf)
    np.maximum.at(seg_max, segments, v)
    shifted = np.exp(v - seg_max[segments])
    denom = np.bincount(segments, weights=shifted, minlength=num_segments)
    out = (shifted / denom[segments])[:, None]

    def back(g: Array) -> Array:
        y = out[:, 0]
        gy = g[:, 0]
        seg_dot = np.bincount(segments, weights=y * gy, minlength=num_segments)
        return (y * (gy - seg_dot[segments]))[:, None]

    return _unary(x, _ensure_finite(out, "segment-softmax"), "segment-softmax", back)


def segment_sum(x: Tensor, segments: Array, num_segments: int) -> Tensor:
    """Sum rows that share a segment id: (m,k) -> (num_segments,k)."""
    segments = _check_segments(segments, num_segments, x.shape[0])
    out = np.zeros((num_segments, x.shape[1]))
    np.add.at(out, segments, x.values)
    return _unary(x, out, "segment-sum", lambda g: g[segments])


# ---------------------------------------------------------------------------
# Fused sparse quadratic form
# ---------------------------------------------------------------------------


def quadratic_pair_form(z: Tensor, rows: Array, cols: Array, weights: Array) -> Tensor:
    """sum_p w_p * ||z[i_p] - z[j_p]||_2^2 over unordered pairs, as a scalar.

    With symmetric weights this equals Tr(Z^T L Z) for the graph Laplacian
    L = D - S built from the same pairs; the gradient 2 L Z is accumulated
    pair-by-pair so the dense Laplacian is never materialized.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if not (rows.shape == cols.shape == weights.shape) or rows.ndim != 1:
        raise DimensionError("pair arrays must be 1-D and equal length")
    n = z.shape[0]
    if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
        raise DimensionError("pair index out of range")
    diff = z.values[rows] - z.values[cols]
    out = np.array([[float(np.sum(weights * np.sum(diff * diff, axis=1)))]])

    def back(g: Array) -> Array:
        gz = np.zeros_like(z.values)
        contrib = (2.0 * g[0, 0]) * weights[:, None] * diff
        np.add.at(gz, rows, contrib)
        np.add.at(gz, cols, -contrib)
        return gz

    return _unary(z, _ensure_finite(out, "quadratic-pair-form"), "quadratic-pair-form", back)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing an analytic gradient against central differences."""

    max_rel_error: float
    worst_index: tuple[int, int]
    passed: bool
    analytic: Array
    numeric: Array


def finite_diff_check(
    evaluator: Callable[[Array], tuple[float, Array]],
    point: Array,
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Check an analytic gradient with central differences, coordinate by coordinate.

    evaluator(x) must return (loss value, analytic gradient at x). The relative
    error per coordinate is |analytic - numeric| / max(1, |analytic|); the
    check passes when the worst coordinate is within tolerance.
    """
    point = np.asarray(point, dtype=np.float64)
    if step <= 0:
        raise ContractError("step must be positive")
    _, analytic = evaluator(point)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != point.shape:
        raise DimensionError("analytic gradient shape does not match the point")
    numeric = np.zeros_like(point)
    for idx in np.ndindex(point.shape):
        bumped = point.copy()
        bumped[idx] += step
        f_plus, _ = evaluator(bumped)
        bumped[idx] = point[idx] - step
        f_minus, _ = evaluator(bumped)
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericalError("non-finite loss during finite differencing")
        numeric[idx] = (f_plus - f_minus) / (2.0 * step)
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    worst = np.unravel_index(np.argmax(rel), rel.shape) if rel.size else (0, 0)
    max_rel = float(rel[worst]) if rel.size else 0.0
    return GradCheckReport(
        max_rel_error=max_rel,
        worst_index=(int(worst[0]), int(worst[1])) if rel.size else (0, 0),
        passed=max_rel <= tolerance,
        analytic=analytic,
        numeric=numeric,
    )


def tape_evaluator(build: Callable[[Tensor], Tensor]) -> Callable[[Array], tuple[float, Array]]:
    """Lift build(leaf)->scalar into the (value, gradient) form finite_diff_check wants."""

    def evaluator(x: Array) -> tuple[float, Array]:
        tape = Tape()
        leaf = tape.leaf(x, "x")
        out = build(leaf)
        tape.backward(out)
        grad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.values)
        return float(out.values[0, 0]), grad.copy()

    return evaluator
