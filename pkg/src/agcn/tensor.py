"""Minimal dense matrix kernel with a reverse-mode gradient tape.

Everything the network needs is expressed through a small set of primitives
recorded on a :class:`Tape`; ``backward`` replays the records once in reverse
and accumulates vector-Jacobian products into each slot's ``grad``. Keeping
gradients local to primitives means each one can be checked against finite
differences in isolation.

Values are float64 by default (all gradient tolerances are specified for
64-bit); float32 is accepted for speed at the caller's risk. NaN/Inf are
rejected at the boundaries (matrix construction and tape inputs), not inside
every primitive.
"""

from __future__ import annotations

import numpy as np

from .errors import IncompleteTape, ShapeMismatch

_ALLOWED_DTYPES = (np.float32, np.float64)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains NaN or Inf")


class Matrix:
    """2-D real matrix; validates shape and finiteness on construction."""

    __slots__ = ("values",)

    def __init__(self, values, dtype=np.float64):
        if dtype not in _ALLOWED_DTYPES:
            raise ValueError(f"unsupported dtype {dtype}")
        arr = np.asarray(values, dtype=dtype)
        if arr.ndim != 2:
            raise ShapeMismatch(f"matrix must be 2-D, got shape {arr.shape}")
        _check_finite(arr, "matrix data")
        self.values = arr

    @classmethod
    def zeros(cls, rows: int, cols: int, dtype=np.float64) -> "Matrix":
        return cls(np.zeros((rows, cols), dtype=dtype), dtype=dtype)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view of the entries."""
        return self.values.reshape(-1)

    def __repr__(self):
        return f"Matrix({self.rows}x{self.cols})"


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, Matrix) else np.asarray(x, dtype=np.float64)


def matmul(a, b) -> Matrix:
    """Standard matrix product with shape validation."""
    av, bv = _values(a), _values(b)
    if av.shape[1] != bv.shape[0]:
        raise ShapeMismatch(f"matmul: {av.shape} x {bv.shape}")
    return Matrix(av @ bv)


def elementwise_mul(a, b) -> Matrix:
    """Hadamard product; shapes must match exactly."""
    av, bv = _values(a), _values(b)
    if av.shape != bv.shape:
        raise ShapeMismatch(f"elementwise_mul: {av.shape} vs {bv.shape}")
    return Matrix(av * bv)


class Slot:
    """One value on a tape. ``grad`` is filled by backward()."""

    __slots__ = ("value", "grad", "tape_id")

    def __init__(self, value: np.ndarray, tape_id: int):
        self.value = value
        self.grad = None
        self.tape_id = tape_id

    @property
    def shape(self):
        return self.value.shape


class Tape:
    """Wengert list: forward methods record ops, backward replays them."""

    _next_id = 0

    def __init__(self):
        Tape._next_id += 1
        self._id = Tape._next_id
        self._slots: list[Slot] = []
        # each record: (output slot, input slots, vjp) where vjp(grad_out)
        # returns one gradient array per input slot
        self._ops: list[tuple[Slot, tuple[Slot, ...], callable]] = []

    # -- slot management ------------------------------------------------

    def _new_slot(self, value: np.ndarray) -> Slot:
        s = Slot(value, self._id)
        self._slots.append(s)
        return s

    def _own(self, s: Slot) -> Slot:
        if not isinstance(s, Slot) or s.tape_id != self._id:
            raise IncompleteTape("slot does not belong to this tape")
        return s

    def input(self, value, copy: bool = False) -> Slot:
        """Register a leaf value (parameter or constant input)."""
        arr = value.values if isinstance(value, Matrix) else np.asarray(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatch(f"tape inputs must be 2-D, got shape {arr.shape}")
        _check_finite(arr, "tape input")
        return self._new_slot(arr.copy() if copy else arr)

    def _record(self, value: np.ndarray, inputs: tuple[Slot, ...], vjp) -> Slot:
        out = self._new_slot(value)
        self._ops.append((out, inputs, vjp))
        return out

    # -- primitives ------------------------------------------------------

    def matmul(self, a: Slot, b: Slot) -> Slot:
        a, b = self._own(a), self._own(b)
        if a.value.shape[1] != b.value.shape[0]:
            raise ShapeMismatch(f"matmul: {a.value.shape} x {b.value.shape}")
        av, bv = a.value, b.value
        return self._record(av @ bv, (a, b),
                            lambda g: (g @ bv.T, av.T @ g))

    def elementwise_mul(self, a: Slot, b: Slot) -> Slot:
        a, b = self._own(a), self._own(b)
        if a.value.shape != b.value.shape:
            raise ShapeMismatch(f"elementwise_mul: {a.value.shape} vs {b.value.shape}")
        av, bv = a.value, b.value
        return self._record(av * bv, (a, b), lambda g: (g * bv, g * av))

    def add(self, a: Slot, b: Slot) -> Slot:
        a, b = self._own(a), self._own(b)
        if a.value.shape != b.value.shape:
            raise ShapeMismatch(f"add: {a.value.shape} vs {b.value.shape}")
        return self._record(a.value + b.value, (a, b), lambda g: (g, g))

    def affine(self, a: Slot, scale: float, shift: float = 0.0) -> Slot:
        """scale * a + shift, entrywise, with constant coefficients."""
        a = self._own(a)
        return self._record(scale * a.value + shift, (a,),
                            lambda g: (scale * g,))

    def scale(self, a: Slot, s: float) -> Slot:
        return self.affine(a, s, 0.0)

    def row_scale(self, a: Slot, coeffs: np.ndarray) -> Slot:
        """Multiply row r by coeffs[r] (constant per-row factors)."""
        a = self._own(a)
        c = np.asarray(coeffs, dtype=a.value.dtype).reshape(-1, 1)
        if c.shape[0] != a.value.shape[0]:
            raise ShapeMismatch(f"row_scale: {c.shape[0]} coeffs for {a.value.shape[0]} rows")
        return self._record(a.value * c, (a,), lambda g: (g * c,))

    def gather_rows(self, a: Slot, indices) -> Slot:
        """out[k] = a[indices[k]]; duplicate indices accumulate on backward."""
        a = self._own(a)
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ShapeMismatch("gather_rows indices must be 1-D")
        if idx.size and (idx.min() < 0 or idx.max() >= a.value.shape[0]):
            raise ShapeMismatch("gather_rows index out of range")

        def vjp(g):
            da = np.zeros_like(a.value)
            np.add.at(da, idx, g)
            return (da,)

        return self._record(a.value[idx], (a,), vjp)

    def segment_sum(self, a: Slot, segments, num_segments: int) -> Slot:
        """out[s] = sum of rows k with segments[k] == s."""
        a = self._own(a)
        seg = np.asarray(segments, dtype=np.int64)
        if seg.shape != (a.value.shape[0],):
            raise ShapeMismatch("segment ids must match row count")
        if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
            raise ShapeMismatch("segment id out of range")
        out = np.zeros((num_segments, a.value.shape[1]), dtype=a.value.dtype)
        np.add.at(out, seg, a.value)
        return self._record(out, (a,), lambda g: (g[seg],))

    def spmm(self, operator, a: Slot) -> Slot:
        """Multiply by a constant sparse operator: out = operator @ a.

        The operator (scipy CSR/CSC) carries no gradient; the input's
        gradient is operator.T @ g. Gathers, scatter-sums and one-hot row
        selections are all instances of this with 0/1 operators.
        """
        a = self._own(a)
        if operator.shape[1] != a.value.shape[0]:
            raise ShapeMismatch(
                f"spmm: operator {operator.shape} x value {a.value.shape}")
        op_t = operator.T

        def vjp(g):
            return (op_t @ g,)

        return self._record(operator @ a.value, (a,), vjp)

    def add_bias(self, a: Slot, bias: Slot) -> Slot:
        """Add a 1-row bias to every row of a."""
        a, bias = self._own(a), self._own(bias)
        if bias.value.shape != (1, a.value.shape[1]):
            raise ShapeMismatch(
                f"add_bias: bias {bias.value.shape} for value {a.value.shape}")
        return self._record(a.value + bias.value, (a, bias),
                            lambda g: (g, g.sum(axis=0, keepdims=True)))

    def hconcat(self, parts: list[Slot]) -> Slot:
        parts = [self._own(p) for p in parts]
        rows = {p.value.shape[0] for p in parts}
        if len(rows) != 1:
            raise ShapeMismatch(f"hconcat: differing row counts {rows}")
        widths = [p.value.shape[1] for p in parts]
        splits = np.cumsum(widths)[:-1]

        def vjp(g):
            return tuple(np.hsplit(g, splits))

        return self._record(np.hstack([p.value for p in parts]), tuple(parts), vjp)

    def leaky_relu(self, a: Slot, slope: float = 0.01) -> Slot:
        a = self._own(a)
        mask = np.where(a.value > 0, 1.0, slope)
        return self._record(a.value * mask, (a,), lambda g: (g * mask,))

    def absval(self, a: Slot) -> Slot:
        a = self._own(a)
        sign = np.sign(a.value)
        return self._record(np.abs(a.value), (a,), lambda g: (g * sign,))

    def sigmoid(self, a: Slot) -> Slot:
        a = self._own(a)
        v = a.value
        out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                       np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

        def vjp(g):
            return (g * out * (1.0 - out),)

        return self._record(out, (a,), vjp)

    def log(self, a: Slot) -> Slot:
        a = self._own(a)
        if np.any(a.value <= 0):
            raise ValueError("log requires strictly positive input (clip first)")
        av = a.value
        return self._record(np.log(av), (a,), lambda g: (g / av,))

    def clip(self, a: Slot, lo: float, hi: float) -> Slot:
        """Clamp entries to [lo, hi]; gradient passes only strictly inside."""
        a = self._own(a)
        mask = ((a.value > lo) & (a.value < hi)).astype(a.value.dtype)
        return self._record(np.clip(a.value, lo, hi), (a,), lambda g: (g * mask,))

    def total_sum(self, a: Slot) -> Slot:
        a = self._own(a)
        shape = a.value.shape
        return self._record(np.array([[a.value.sum()]]), (a,),
                            lambda g: (np.full(shape, g[0, 0]),))

    # -- reverse pass ----------------------------------------------------

    def backward(self, loss: Slot) -> None:
        """Populate ``grad`` on every slot reachable from the loss.

        Every slot on the tape gets a gradient (zeros if it does not
        influence the loss). Running backward twice yields identical results.
        """
        loss = self._own(loss)
        if loss.value.shape != (1, 1):
            raise ShapeMismatch(f"loss slot must be 1x1, got {loss.value.shape}")
        for s in self._slots:
            s.grad = np.zeros_like(s.value)
        loss.grad = np.ones_like(loss.value)
        for out, inputs, vjp in reversed(self._ops):
            if not np.any(out.grad):
                continue
            for slot, g in zip(inputs, vjp(out.grad)):
                slot.grad += g


def backward(tape: Tape, loss: Slot) -> None:
    """Module-level alias for :meth:`Tape.backward`."""
    tape.backward(loss)
