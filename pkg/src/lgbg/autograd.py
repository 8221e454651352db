"""Reverse-mode automatic differentiation over dense float64 arrays.

A `Tape` records one backward closure per primitive operation, in execution
order; `Tape.backward` replays them in exact reverse order, accumulating
adjoints additively (a value consumed n times receives the sum of n
contributions). Operations executed with no tape active compute values only,
which is what evaluation paths use.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NumericError, ValidationError

# Finite checks on every op output; tests rely on NaN/Inf being an error state.
CHECK_FINITE = True

_ACTIVE: list["Tape"] = []


def active_tape() -> "Tape | None":
    return _ACTIVE[-1] if _ACTIVE else None


class Tape:
    """Ordered record of primitive operations for one backward pass."""

    def __init__(self):
        self._ops: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _ACTIVE.pop()
        return False

    def __len__(self) -> int:
        return len(self._ops)

    def record(self, op: Callable[[], None]) -> None:
        """Append a backward closure; exposed for test hooks."""
        self._ops.append(op)

    def backward(self, loss: "Tensor") -> None:
        """Seed d(loss)/d(loss) = 1 and replay recorded ops in reverse."""
        if loss.data.size != 1:
            raise DimensionError("backward requires a scalar loss")
        if loss.grad is None:
            raise ValidationError("loss does not require grad; nothing to do")
        loss.grad[...] = 1.0
        for op in reversed(self._ops):
            op()


class Tensor:
    """Dense row-major float64 value, optionally carrying a gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        # One reduction: any NaN/Inf in arr leaves the sum non-finite.
        if CHECK_FINITE and not np.isfinite(arr.sum()):
            raise NumericError("tensor holds non-finite values")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _result(data, *inputs: Tensor) -> tuple[Tensor, bool]:
    """Wrap an op output; returns (tensor, record) where record says whether a
    backward closure should be pushed onto the active tape."""
    tape = active_tape()
    record = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=record)
    return out, record


def _push(op: Callable[[], None]) -> None:
    _ACTIVE[-1]._ops.append(op)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b) -> Tensor:
    b = _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"add shapes differ: {a.data.shape} vs {b.data.shape}")
    out, rec = _result(a.data + b.data, a, b)
    if rec:
        def bwd():
            if a.requires_grad:
                a.grad += out.grad
            if b.requires_grad:
                b.grad += out.grad
        _push(bwd)
    return out


def sub(a: Tensor, b) -> Tensor:
    b = _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise DimensionError(f"sub shapes differ: {a.data.shape} vs {b.data.shape}")
    out, rec = _result(a.data - b.data, a, b)
    if rec:
        def bwd():
            if a.requires_grad:
                a.grad += out.grad
            if b.requires_grad:
                b.grad -= out.grad
        _push(bwd)
    return out


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; `b` may be a python scalar."""
    if isinstance(b, (int, float)):
        out, rec = _result(a.data * b, a)
        if rec:
            def bwd():
                a.grad += b * out.grad
            _push(bwd)
        return out
    if a.data.shape != b.data.shape:
        raise DimensionError(f"mul shapes differ: {a.data.shape} vs {b.data.shape}")
    out, rec = _result(a.data * b.data, a, b)
    if rec:
        def bwd():
            if a.requires_grad:
                a.grad += b.data * out.grad
            if b.requires_grad:
                b.grad += a.data * out.grad
        _push(bwd)
    return out


def neg(a: Tensor) -> Tensor:
    out, rec = _result(-a.data, a)
    if rec:
        def bwd():
            a.grad -= out.grad
        _push(bwd)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """`a @ b` for 1-D/2-D operands (vector·vector gives a scalar)."""
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise DimensionError("matmul supports 1-D and 2-D operands only")
    if ad.shape[-1] != (bd.shape[0] if bd.ndim >= 1 else None):
        raise DimensionError(f"matmul inner dims differ: {ad.shape} vs {bd.shape}")
    out, rec = _result(ad @ bd, a, b)
    if rec:
        def bwd():
            g = out.grad
            if ad.ndim == 2 and bd.ndim == 2:
                if a.requires_grad:
                    a.grad += g @ bd.T
                if b.requires_grad:
                    b.grad += ad.T @ g
            elif ad.ndim == 2 and bd.ndim == 1:
                if a.requires_grad:
                    a.grad += np.outer(g, bd)
                if b.requires_grad:
                    b.grad += ad.T @ g
            elif ad.ndim == 1 and bd.ndim == 2:
                if a.requires_grad:
                    a.grad += bd @ g
                if b.requires_grad:
                    b.grad += np.outer(ad, g)
            else:
                if a.requires_grad:
                    a.grad += g * bd
                if b.requires_grad:
                    b.grad += g * ad
        _push(bwd)
    return out


def linear(x: Tensor, w: Tensor) -> Tensor:
    """y = W·x with W of shape (d_out, d_in) and x of shape (d_in,)."""
    if w.data.ndim != 2 or x.data.ndim != 1:
        raise DimensionError("linear expects a matrix W and a vector x")
    return matmul(w, x)


def matmul_t(a: Tensor, b: Tensor) -> Tensor:
    """`a @ b.T` fused, so (d_out, d_in) weight matrices apply to row-major
    state matrices without materializing transposes."""
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[1]:
        raise DimensionError(f"matmul_t shapes differ: {ad.shape} vs {bd.shape}")
    out, rec = _result(ad @ bd.T, a, b)
    if rec:
        def bwd():
            g = out.grad
            if a.requires_grad:
                a.grad += g @ bd
            if b.requires_grad:
                b.grad += g.T @ ad
        _push(bwd)
    return out


def const_matmul(c: np.ndarray, x: Tensor) -> Tensor:
    """`c @ x` with a non-differentiable left operand (e.g. adjacency weights)."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != x.data.shape[0]:
        raise DimensionError(f"const_matmul shapes differ: {c.shape} vs {x.data.shape}")
    out, rec = _result(c @ x.data, x)
    if rec:
        def bwd():
            x.grad += c.T @ out.grad
        _push(bwd)
    return out


# ---------------------------------------------------------------------------
# shape ops


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise DimensionError("concat of zero tensors")
    out, rec = _result(np.concatenate([p.data for p in parts], axis=axis), *parts)
    if rec:
        sizes = [p.data.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)
        def bwd():
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    idx = [slice(None)] * p.data.ndim
                    idx[axis] = slice(lo, hi)
                    p.grad += out.grad[tuple(idx)]
        _push(bwd)
    return out


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length into a matrix, one per row."""
    if not vectors:
        raise DimensionError("stack_rows of zero tensors")
    out, rec = _result(np.stack([v.data for v in vectors]), *vectors)
    if rec:
        def bwd():
            for i, v in enumerate(vectors):
                if v.requires_grad:
                    v.grad += out.grad[i]
        _push(bwd)
    return out


def gather_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    out, rec = _result(x.data[idx], x)
    if rec:
        def bwd():
            np.add.at(x.grad, idx, out.grad)
        _push(bwd)
    return out


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    # The output shares memory with x; tensors are immutable after
    # construction, so the view is safe.
    out, rec = _result(x.data[start:stop], x)
    if rec:
        def bwd():
            x.grad[start:stop] += out.grad
        _push(bwd)
    return out


def pick(x: Tensor, i: int) -> Tensor:
    """Select element i of a vector as a 0-d scalar."""
    if x.data.ndim != 1:
        raise DimensionError("pick expects a vector")
    out, rec = _result(x.data[i], x)
    if rec:
        def bwd():
            x.grad[i] += out.grad
        _push(bwd)
    return out


# ---------------------------------------------------------------------------
# reductions


def total(x: Tensor) -> Tensor:
    out, rec = _result(x.data.sum(), x)
    if rec:
        def bwd():
            x.grad += out.grad
        _push(bwd)
    return out


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    out, rec = _result(x.data.mean(), x)
    if rec:
        def bwd():
            x.grad += out.grad / n
        _push(bwd)
    return out


def col_sum(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("col_sum expects a matrix")
    out, rec = _result(x.data.sum(axis=0), x)
    if rec:
        def bwd():
            x.grad += out.grad[None, :]
        _push(bwd)
    return out


def col_mean(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("col_mean expects a matrix")
    n = x.data.shape[0]
    out, rec = _result(x.data.mean(axis=0), x)
    if rec:
        def bwd():
            x.grad += out.grad[None, :] / n
        _push(bwd)
    return out


def sub_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Subtract a row vector from every row of a matrix."""
    if x.data.ndim != 2 or v.data.ndim != 1 or x.data.shape[1] != v.data.shape[0]:
        raise DimensionError(f"sub_rowvec shapes differ: {x.data.shape} vs {v.data.shape}")
    out, rec = _result(x.data - v.data[None, :], x, v)
    if rec:
        def bwd():
            if x.requires_grad:
                x.grad += out.grad
            if v.requires_grad:
                v.grad -= out.grad.sum(axis=0)
        _push(bwd)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out, rec = _result(y, x)
    if rec:
        def bwd():
            x.grad += (1.0 - y * y) * out.grad
        _push(bwd)
    return out


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign to stay overflow-free on large |x|.
    d = x.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out, rec = _result(y, x)
    if rec:
        def bwd():
            x.grad += y * (1.0 - y) * out.grad
        _push(bwd)
    return out


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise NumericError("log of non-positive value")
    out, rec = _result(np.log(x.data), x)
    if rec:
        def bwd():
            x.grad += out.grad / x.data
        _push(bwd)
    return out


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient is zero in the clamped region."""
    mask = x.data > floor
    out, rec = _result(np.where(mask, x.data, floor), x)
    if rec:
        def bwd():
            x.grad += mask * out.grad
        _push(bwd)
    return out


def softmax(z: Tensor) -> Tensor:
    """Stable softmax over a vector; sums to 1 within 1e-12."""
    if z.data.ndim != 1 or z.data.shape[0] < 1:
        raise DimensionError("softmax expects a non-empty vector")
    shifted = z.data - z.data.max()
    e = np.exp(shifted)
    s = e / e.sum()
    out, rec = _result(s, z)
    if rec:
        def bwd():
            g = out.grad
            z.grad += s * (g - np.dot(s, g))
        _push(bwd)
    return out


def softmax_rows(z: Tensor) -> Tensor:
    """Row-wise stable softmax of a matrix."""
    if z.data.ndim != 2 or z.data.shape[1] < 1:
        raise DimensionError("softmax_rows expects a matrix with non-empty rows")
    shifted = z.data - z.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out, rec = _result(s, z)
    if rec:
        def bwd():
            g = out.grad
            z.grad += s * (g - (s * g).sum(axis=1, keepdims=True))
        _push(bwd)
    return out


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Bias-corrected adaptive moment optimizer; updates params in place."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        for p in params:
            if not p.requires_grad:
                raise ValidationError("Adam received a tensor without a gradient buffer")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for i, p in enumerate(self.params):
            g = p.grad
            if g.shape != p.data.shape:
                raise DimensionError("gradient/parameter shape mismatch")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / (1.0 - self.beta1 ** t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                      eps: float = 1e-5, coords_per_param: int | None = None,
                      seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    `f` evaluates the scalar loss from the current contents of `params`;
    it is re-invoked under perturbed parameter values. Relative error for a
    coordinate is |analytic - central| / max(1, |central|).
    """
    errs = finite_diff_errors(f, params, eps=eps,
                              coords_per_param=coords_per_param, seed=seed)
    return max(errs) if errs else 0.0


def finite_diff_errors(f: Callable[[], Tensor], params: Sequence[Tensor],
                       eps: float = 1e-5, coords_per_param: int | None = None,
                       seed: int = 0) -> list[float]:
    """Per-parameter max relative gradient error, in `params` order."""
    if not (1e-7 <= eps <= 1e-3):
        raise ValidationError(f"eps {eps} outside [1e-7, 1e-3]")
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = f()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is not finite")
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    rng = np.random.default_rng(seed)
    out = []
    for p, grad in zip(params, analytic):
        n = p.data.size
        if coords_per_param is None or n <= coords_per_param:
            coords = np.arange(n)
        else:
            coords = rng.choice(n, size=coords_per_param, replace=False)
            coords.sort()
        flat = p.data.reshape(-1)
        worst = 0.0
        for c in coords:
            keep = flat[c]
            flat[c] = keep + eps
            up = f().item()
            flat[c] = keep - eps
            down = f().item()
            flat[c] = keep
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("perturbed loss is not finite")
            central = (up - down) / (2.0 * eps)
            err = abs(grad.reshape(-1)[c] - central) / max(1.0, abs(central))
            worst = max(worst, err)
        out.append(worst)
    return out
