"""Reverse-mode tape with forward-mode jets layered on top.

``Var`` values are float64 numpy arrays, usually batched over training
points, recorded on a ``Tape``.  ``Jet`` carries input-derivatives whose
components are themselves ``Var`` (or constant arrays), so every
input-derivative stays differentiable with respect to the parameters and
one backward sweep per step is enough.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from functools import lru_cache

import numpy as np

MAX_ORDER = 4


class AutodiffError(Exception):
    pass


class TapeMismatch(AutodiffError):
    pass


class DomainError(AutodiffError, ArithmeticError):
    pass


class DivisionByZero(AutodiffError, ZeroDivisionError):
    pass


class OrderMismatch(AutodiffError):
    pass


class OrderUnsupported(AutodiffError):
    pass


class Tape:
    """Append-only record of operations.

    Node ``i`` stores its op name, the indices of its parents (all ``< i``)
    and one vector-Jacobian closure per parent.
    """

    _ids = itertools.count()

    def __init__(self):
        self.id = next(Tape._ids)
        self.ops: list[str] = []
        self.parents: list[list[int]] = []
        self.vjps: list[tuple] = []

    def __len__(self):
        return len(self.ops)

    def record(self, op, value, parents=(), vjps=()) -> "Var":
        index = len(self.ops)
        self.ops.append(op)
        self.parents.append([p.index for p in parents])
        self.vjps.append(vjps)
        return Var(self, index, value)

    def record_indices(self, op, value, parents, vjps) -> "Var":
        index = len(self.ops)
        self.ops.append(op)
        self.parents.append(parents)
        self.vjps.append(vjps)
        return Var(self, index, value)

    def var(self, value) -> "Var":
        return self.record("leaf", np.array(value, dtype=np.float64))

    def watch(self, arrays) -> list["Var"]:
        """Leaf ``Var`` for each array (copied, so later in-place updates
        of the arrays do not leak into this tape)."""
        return [self.var(a) for a in arrays]

    def op_counts(self) -> Counter:
        return Counter(self.ops)


def var(tape: Tape, value) -> "Var":
    return tape.var(value)


class Var:
    __slots__ = ("tape", "index", "value")
    __array_priority__ = 100.0

    def __init__(self, tape, index, value):
        self.tape = tape
        self.index = index
        self.value = value

    def __repr__(self):
        return f"Var(tape={self.tape.id}, index={self.index}, value={self.value!r})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return self.shape[0]

    def __float__(self):
        return float(self.value)

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def value_of(x):
    """Plain numeric value of a Var, Jet primal, or constant."""
    if isinstance(x, Var):
        return x.value
    if isinstance(x, Jet):
        return value_of(x.primal)
    return x


def _tape_of(*xs):
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeMismatch("operands live on different tapes")
    return tape


def _const(x):
    if isinstance(x, np.ndarray) and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g, shape):
    if np.shape(g) == shape:
        return g
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(op, a, b, value, da, db):
    """Record a broadcasting binary op; ``da``/``db`` map the output
    cotangent to the (unreduced) cotangent of each operand."""
    a_var = isinstance(a, Var)
    b_var = isinstance(b, Var)
    if not (a_var or b_var):
        return value
    tape = a.tape if a_var else b.tape
    if a_var and b_var and b.tape is not tape:
        raise TapeMismatch("operands live on different tapes")
    out_shape = np.shape(value)
    parents, vjps = [], []
    if a_var:
        parents.append(a.index)
        sa = a.value.shape
        vjps.append(da if sa == out_shape else lambda g: _unbroadcast(da(g), sa))
    if b_var:
        parents.append(b.index)
        sb = b.value.shape
        vjps.append(db if sb == out_shape else lambda g: _unbroadcast(db(g), sb))
    return tape.record_indices(op, value, parents, vjps)


def _unary(op, a, value, local):
    """Elementwise op with local partial ``local`` (array)."""
    if not isinstance(a, Var):
        return value
    return a.tape.record_indices(op, value, [a.index], [lambda g: g * local])


def add(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a + b if isinstance(a, Jet) else b.__radd__(a)
    return _binary("add", a, b, value_of(a) + value_of(b), lambda g: g, lambda g: g)


def sub(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a - b if isinstance(a, Jet) else b.__rsub__(a)
    return _binary("sub", a, b, value_of(a) - value_of(b), lambda g: g, lambda g: -g)


def mul(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a * b if isinstance(a, Jet) else b.__rmul__(a)
    av, bv = value_of(a), value_of(b)
    return _binary("mul", a, b, av * bv, lambda g: g * bv, lambda g: g * av)


def div(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a / b if isinstance(a, Jet) else b.__rtruediv__(a)
    av, bv = value_of(a), value_of(b)
    if np.any(np.asarray(bv) == 0):
        raise DivisionByZero("division by zero")
    out = av / bv
    return _binary("div", a, b, out, lambda g: g / bv, lambda g: -g * out / bv)


def neg(a):
    if isinstance(a, Jet):
        return -a
    if not isinstance(a, Var):
        return -a
    return a.tape.record("neg", -a.value, (a,), (lambda g: -g,))


def power(a, exponent):
    """``a ** exponent`` for a constant (non-differentiated) exponent."""
    if isinstance(exponent, (Var, Jet)):
        raise TypeError("only constant exponents are supported")
    p = float(exponent)
    if isinstance(a, Jet):
        return a.apply(_power_derivs(p))
    av = value_of(a)
    if not float(p).is_integer() and np.any(np.asarray(av) < 0):
        raise DomainError(f"negative base to non-integer power {p}")
    if p < 0 and np.any(np.asarray(av) == 0):
        raise DivisionByZero(f"zero to negative power {p}")
    if p == 0:
        return np.ones_like(av) if not isinstance(a, Var) else _unary("pow", a, np.ones_like(av), 0.0)
    out = av**p
    if not isinstance(a, Var):
        return out
    if p == 1:
        local = 1.0
    elif p == 2:
        local = 2.0 * av
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            local = p * av ** (p - 1)
    return _unary("pow", a, out, local)


def exp(a):
    if isinstance(a, Jet):
        return a.apply(_exp_derivs)
    out = np.exp(value_of(a))
    return _unary("exp", a, out, out)


def log(a):
    if isinstance(a, Jet):
        return a.apply(_log_derivs)
    av = value_of(a)
    if np.any(np.asarray(av) <= 0):
        raise DomainError("log of a non-positive number")
    return _unary("log", a, np.log(av), 1.0 / av)


def sin(a):
    if isinstance(a, Jet):
        return a.apply(_sin_derivs)
    av = value_of(a)
    return _unary("sin", a, np.sin(av), np.cos(av))


def cos(a):
    if isinstance(a, Jet):
        return a.apply(_cos_derivs)
    av = value_of(a)
    return _unary("cos", a, np.cos(av), -np.sin(av))


def tanh(a):
    if isinstance(a, Jet):
        return a.apply(_tanh_derivs)
    t = np.tanh(value_of(a))
    return _unary("tanh", a, t, 1.0 - t * t)


def _sigmoid_value(x):
    # split by sign so exp never overflows
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a):
    if isinstance(a, Jet):
        return a.apply(_sigmoid_derivs)
    s = _sigmoid_value(value_of(a))
    return _unary("sigmoid", a, s, s * (1.0 - s))


def sqrt(a):
    if isinstance(a, Jet):
        return a.apply(_power_derivs(0.5))
    av = value_of(a)
    if np.any(np.asarray(av) < 0):
        raise DomainError("sqrt of a negative number")
    out = np.sqrt(av)
    with np.errstate(divide="ignore"):
        local = 0.5 / out
    return _unary("sqrt", a, out, local)


def absolute(a):
    if isinstance(a, Jet):
        return a.apply(_abs_derivs)
    av = value_of(a)
    return _unary("abs", a, np.abs(av), np.sign(av))


def relu(a):
    if isinstance(a, Jet):
        return a.apply(_relu_derivs)
    av = value_of(a)
    return _unary("relu", a, np.maximum(av, 0.0), (np.asarray(av) > 0).astype(np.float64))


def polyval(coeffs, a, slope=None):
    """Evaluate the polynomial ``coeffs`` (highest degree first) at ``a``.

    ``slope`` optionally supplies the precomputed derivative coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=np.float64)
    av = value_of(a)
    out = _horner(coeffs, av)
    if not isinstance(a, Var):
        return out
    if slope is None:
        slope = np.polyder(coeffs) if len(coeffs) > 1 else np.zeros(1)
    return _unary("polyval", a, out, _horner(slope, av))


def _horner(coeffs, x):
    out = np.full(np.shape(x), coeffs[0])
    for c in coeffs[1:]:
        out = out * x + c
    return out


def matmul(a, b):
    if isinstance(a, Jet):
        return a.map(lambda c: matmul(c, b))
    if isinstance(b, Jet):
        return b.map(lambda c: matmul(a, c))
    av, bv = value_of(a), value_of(b)
    tape = _tape_of(a, b)
    out = av @ bv
    if tape is None:
        return out
    parents, vjps = [], []
    if isinstance(a, Var):
        parents.append(a)
        vjps.append(lambda g: g @ np.swapaxes(bv, -1, -2) if np.ndim(bv) > 1 else np.multiply.outer(g, bv))
    if isinstance(b, Var):
        parents.append(b)
        vjps.append(lambda g: np.swapaxes(av, -1, -2) @ g if np.ndim(av) > 1 else np.multiply.outer(av, g))
    return tape.record("matmul", out, parents, vjps)


def transpose(a):
    if isinstance(a, Jet):
        return a.map(transpose)
    if not isinstance(a, Var):
        return np.transpose(a)
    return a.tape.record("transpose", np.transpose(a.value), (a,), (np.transpose,))


def getitem(a, key):
    if isinstance(a, Jet):
        return a.map(lambda c: getitem(c, key))
    if not isinstance(a, Var):
        return np.asarray(a)[key]
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, key, g)
        return full

    return a.tape.record("getitem", a.value[key], (a,), (vjp,))


def reshape(a, shape):
    if isinstance(a, Jet):
        return a.map(lambda c: reshape(c, shape))
    if not isinstance(a, Var):
        return np.reshape(a, shape)
    old = a.shape
    return a.tape.record("reshape", np.reshape(a.value, shape), (a,), (lambda g: np.reshape(g, old),))


def reduce_sum(a, axis=None, keepdims=False):
    if isinstance(a, Jet):
        return a.map(lambda c: reduce_sum(c, axis, keepdims))
    if not isinstance(a, Var):
        return np.sum(a, axis=axis, keepdims=keepdims)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return a.tape.record("sum", np.sum(a.value, axis=axis, keepdims=keepdims), (a,), (vjp,))


def reduce_mean(a, axis=None, keepdims=False):
    size = np.size(value_of(a)) if axis is None else np.prod([np.shape(value_of(a))[i] for i in np.atleast_1d(axis)])
    return mul(reduce_sum(a, axis, keepdims), 1.0 / size)


def _join_jets(join, items, axis):
    """Apply a linear joining op (stack/concatenate) componentwise over jets."""
    jets = [x for x in items if isinstance(x, Jet)]
    order, dim = jets[0].order, jets[0].dim
    if any(j.order != order or j.dim != dim for j in jets):
        raise OrderMismatch("jets to join differ in order or input dimension")
    items = [x if isinstance(x, Jet) else Jet.constant(x, order, dim) for x in items]
    keys = sorted({k for j in items for k in j.partials}, key=lambda k: (len(k), k))
    partials = {}
    for k in keys:
        parts = [j.partials.get(k) for j in items]
        parts = [np.zeros(np.shape(value_of(j.primal))) if c is None else c for j, c in zip(items, parts)]
        partials[k] = join(parts, axis)
    return Jet(join([j.primal for j in items], axis), partials, order, dim)


def concatenate(items, axis=0):
    """Concatenate Vars and/or constant arrays along ``axis``."""
    if any(isinstance(x, Jet) for x in items):
        return _join_jets(concatenate, items, axis)
    values = [np.asarray(value_of(x), dtype=np.float64) for x in items]
    out = np.concatenate(values, axis=axis)
    tape = _tape_of(*items)
    if tape is None:
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in values])
    parents, vjps = [], []
    for x, lo, hi in zip(items, bounds[:-1], bounds[1:]):
        if isinstance(x, Var):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(lo, hi)
            parents.append(x)
            vjps.append(lambda g, sl=tuple(sl): g[sl])
    return tape.record("concatenate", out, parents, vjps)


def stack(items, axis=0):
    """Stack equally shaped Vars and/or constant arrays along a new axis."""
    if any(isinstance(x, Jet) for x in items):
        return _join_jets(stack, items, axis)
    values = [np.asarray(value_of(x), dtype=np.float64) for x in items]
    out = np.stack(values, axis=axis)
    tape = _tape_of(*items)
    if tape is None:
        return out
    parents, vjps = [], []
    for i, x in enumerate(items):
        if isinstance(x, Var):
            parents.append(x)
            vjps.append(lambda g, i=i: np.take(g, i, axis=axis))
    return tape.record("stack", out, parents, vjps)


def grad(loss: Var, targets: list[Var]) -> list:
    """Gradient of a scalar ``loss`` with respect to each of ``targets``.

    Targets the loss does not depend on get zeros.
    """
    for t in targets:
        if not isinstance(t, Var):
            raise TypeError("grad targets must be Var")
    if not isinstance(loss, Var):
        return [np.zeros(t.shape) if t.shape else 0.0 for t in targets]
    tape = loss.tape
    for t in targets:
        if t.tape is not tape:
            raise TapeMismatch("target is not on the loss tape")
    if np.size(loss.value) != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.shape}")
    lowest = min((t.index for t in targets), default=loss.index)
    cotangents: dict[int, np.ndarray] = {loss.index: np.ones(loss.shape)}
    parents, vjps = tape.parents, tape.vjps
    for i in range(loss.index, lowest - 1, -1):
        g = cotangents.get(i)
        if g is None:
            continue
        for p, vjp in zip(parents[i], vjps[i]):
            contribution = vjp(g)
            if p in cotangents:
                cotangents[p] = cotangents[p] + contribution
            else:
                cotangents[p] = contribution
    out = []
    for t in targets:
        g = cotangents.get(t.index)
        if g is None:
            g = np.zeros(t.shape)
        out.append(float(g) if t.shape == () else np.asarray(g, dtype=np.float64).reshape(t.shape))
    return out


# -- jets ---------------------------------------------------------------


def multi_indices(dim: int, order: int):
    """Canonical (sorted) multi-indices of order 1..``order`` over ``dim`` inputs."""
    out = []
    for k in range(1, order + 1):
        out.extend(itertools.combinations_with_replacement(range(dim), k))
    return out


def canonical(index) -> tuple:
    return tuple(sorted(index))


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


@lru_cache(maxsize=None)
def faa_di_bruno_terms(index: tuple) -> tuple:
    """Terms of the multivariate chain rule for ``∂_index g(u)``.

    Each term is ``(coefficient, blocks)``: the contribution is
    ``coefficient * g^(len(blocks))(u) * prod(∂_b u for b in blocks)``.
    """
    counts = Counter()
    for part in _set_partitions(list(range(len(index)))):
        blocks = tuple(sorted(canonical(index[p] for p in block) for block in part))
        counts[blocks] += 1
    return tuple((c, blocks) for blocks, c in sorted(counts.items(), key=lambda kv: (len(kv[0]), kv[0])))


@lru_cache(maxsize=None)
def leibniz_terms(index: tuple) -> tuple:
    """Terms ``(coefficient, left, right)`` of ``∂_index (u v)``."""
    k = len(index)
    counts = Counter()
    for mask in range(1 << k):
        left = canonical(index[i] for i in range(k) if mask >> i & 1)
        right = canonical(index[i] for i in range(k) if not mask >> i & 1)
        counts[(left, right)] += 1
    return tuple((c, left, right) for (left, right), c in sorted(counts.items()))


def _scale(c, x):
    return x if c == 1 else mul(float(c), x)


def _add_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return add(a, b)


class Jet:
    """Truncated multivariate Taylor data of a function of the model inputs.

    ``primal`` holds the value; ``partials[I]`` holds ``∂_I`` for canonical
    multi-indices ``I`` of order ``1..order``.  Missing keys are exact zeros.
    """

    __slots__ = ("primal", "partials", "order", "dim")
    __array_priority__ = 200.0

    def __init__(self, primal, partials, order, dim):
        if order > MAX_ORDER:
            raise OrderUnsupported(f"order {order} exceeds the engine maximum {MAX_ORDER}")
        self.primal = primal
        self.partials = partials
        self.order = order
        self.dim = dim

    @classmethod
    def seed(cls, points, order: int) -> "Jet":
        """Jet of the identity map at ``points`` of shape (N, n)."""
        points = _const(points)
        if points.ndim != 2:
            raise ValueError("points must have shape (N, n)")
        n = points.shape[1]
        partials = {}
        if order >= 1:
            for i in range(n):
                e = np.zeros_like(points)
                e[:, i] = 1.0
                partials[(i,)] = e
        return cls(points, partials, order, n)

    @classmethod
    def constant(cls, value, order, dim) -> "Jet":
        return cls(value, {}, order, dim)

    @property
    def shape(self):
        return np.shape(value_of(self.primal))

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Jet(order={self.order}, dim={self.dim}, shape={self.shape}, nonzero={sorted(self.partials)})"

    def __getitem__(self, key):
        return getitem(self, key)

    def __len__(self):
        return self.shape[0]

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def partial(self, index):
        """``∂_index`` of the primal; zero-valued constant when absent."""
        index = canonical(index)
        if not index:
            return self.primal
        if len(index) > self.order:
            raise OrderUnsupported(f"partial of order {len(index)} requested from an order-{self.order} jet")
        got = self.partials.get(index)
        if got is None:
            return np.zeros(self.shape)
        return got

    def _check(self, other: "Jet"):
        if other.order != self.order or other.dim != self.dim:
            raise OrderMismatch(
                f"jets of (order, dim) {(self.order, self.dim)} and {(other.order, other.dim)} cannot be combined"
            )

    def map(self, fn):
        """Apply a linear map to the primal and to every partial."""
        return Jet(fn(self.primal), {k: fn(v) for k, v in self.partials.items()}, self.order, self.dim)

    def apply(self, derivs) -> "Jet":
        """Compose a scalar function with this jet.

        ``derivs(u, k)`` returns ``[g(u), g'(u), ..., g^(k)(u)]`` with ``None``
        for identically-zero derivatives.
        """
        # a jet with no nonzero partials only needs the value
        g = derivs(self.primal, self.order if self.partials else 0)
        partials = {}
        for index in multi_indices(self.dim, self.order):
            total = None
            for coef, blocks in faa_di_bruno_terms(index):
                factor = g[len(blocks)]
                if factor is None:
                    continue
                pieces = [self.partials.get(b) for b in blocks]
                if any(p is None for p in pieces):
                    continue
                term = factor
                for p in pieces:
                    term = mul(term, p)
                total = _add_opt(total, _scale(coef, term))
            if total is not None:
                partials[index] = total
        return Jet(g[0], partials, self.order, self.dim)

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            partials = dict(self.partials)
            for k, v in other.partials.items():
                partials[k] = _add_opt(partials.get(k), v)
            return Jet(add(self.primal, other.primal), partials, self.order, self.dim)
        return Jet(add(self.primal, other), dict(self.partials), self.order, self.dim)

    def __radd__(self, other):
        return Jet(add(other, self.primal), dict(self.partials), self.order, self.dim)

    def __neg__(self):
        return self.map(neg)

    def __sub__(self, other):
        if isinstance(other, Jet):
            return self + (-other)
        return Jet(sub(self.primal, other), dict(self.partials), self.order, self.dim)

    def __rsub__(self, other):
        return (-self).__radd__(other)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return self.map(lambda c: mul(c, other))
        self._check(other)
        partials = {}
        for index in multi_indices(self.dim, self.order):
            total = None
            for coef, left, right in leibniz_terms(index):
                a = self.primal if not left else self.partials.get(left)
                b = other.primal if not right else other.partials.get(right)
                if a is None or b is None:
                    continue
                total = _add_opt(total, _scale(coef, mul(a, b)))
            if total is not None:
                partials[index] = total
        return Jet(mul(self.primal, other.primal), partials, self.order, self.dim)

    def __rmul__(self, other):
        return self.map(lambda c: mul(other, c))

    def reciprocal(self) -> "Jet":
        return self.apply(_power_derivs(-1.0))

    def __truediv__(self, other):
        if isinstance(other, Jet):
            self._check(other)
            return self * other.reciprocal()
        return self.map(lambda c: div(c, other))

    def __rtruediv__(self, other):
        return self.reciprocal().__rmul__(other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


# -- derivative tables for jet composition ---------------------------------


def _exp_derivs(u, k):
    e = exp(u)
    return [e] * (k + 1)


def _sin_derivs(u, k):
    s, c = sin(u), cos(u)
    cycle = [s, c, None, None]
    if k >= 2:
        cycle[2] = neg(s)
    if k >= 3:
        cycle[3] = neg(c)
    return [cycle[i % 4] for i in range(k + 1)]


def _cos_derivs(u, k):
    s, c = sin(u), cos(u)
    cycle = [c, None, None, s]
    if k >= 1:
        cycle[1] = neg(s)
    if k >= 2:
        cycle[2] = neg(c)
    return [cycle[i % 4] for i in range(k + 1)]


def _log_derivs(u, k):
    out = [log(u)]
    for j in range(1, k + 1):
        out.append(_scale((-1) ** (j - 1) * math.factorial(j - 1), power(u, -j)))
    return out


def _power_derivs(p):
    def derivs(u, k):
        out = [power(u, p)]
        coef = 1.0
        for j in range(1, k + 1):
            coef *= p - (j - 1)
            if coef == 0:
                out.append(None)
            elif p - j == 0:
                out.append(np.full(np.shape(value_of(u)), coef))
            else:
                out.append(_scale(coef, power(u, p - j)))
        return out

    return derivs


@lru_cache(maxsize=None)
def _chain_polys(kind: str, k: int) -> tuple:
    """Polynomials P_j with g^(j)(u) = P_j(g(u)) for tanh / sigmoid."""
    # derivative of g expressed in g: tanh' = 1 - t^2, sigmoid' = s - s^2
    dg = np.array([-1.0, 0.0, 1.0]) if kind == "tanh" else np.array([-1.0, 1.0, 0.0])
    polys = [np.array([1.0, 0.0])]
    for _ in range(k):
        polys.append(np.polymul(np.polyder(polys[-1]), dg))
    return tuple((p, np.polyder(p)) for p in polys)


def _poly_derivs(kind, fn):
    def derivs(u, k):
        t = fn(u)
        polys = _chain_polys(kind, k)
        return [t] + [polyval(polys[j][0], t, polys[j][1]) for j in range(1, k + 1)]

    return derivs


_tanh_derivs = _poly_derivs("tanh", tanh)
_sigmoid_derivs = _poly_derivs("sigmoid", sigmoid)


def _abs_derivs(u, k):
    out = [absolute(u)]
    if k >= 1:
        out.append(np.sign(value_of(u)))
    return out + [None] * (k - 1)


def _relu_derivs(u, k):
    out = [relu(u)]
    if k >= 1:
        out.append((np.asarray(value_of(u)) > 0).astype(np.float64))
    return out + [None] * (k - 1)
