"""Quadrature, vector-calculus operators and tensor helpers.

Operators take derivative-stack entries (or anything indexable the same
way: numpy arrays, ``Var``) and stay differentiable with respect to the
model parameters.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .sampling import Box
from .stack import StackEntry

SPEED_OF_LIGHT_M_S = 299_792_458.0

METHODS = ("left_riemann", "right_riemann", "trapezoid", "simpson", "boole", "romberg")


class DimensionMismatch(ValueError):
    pass


class AxisOutOfRange(ValueError):
    pass


class PointCountIncompatible(ValueError):
    pass


class NonUniformGrid(ValueError):
    pass


class QuadratureWarning(UserWarning):
    pass


# -- quadrature ---------------------------------------------------------------


def _grid(domain):
    if isinstance(domain, Box):
        if domain.dim != 1:
            raise DimensionMismatch("integration is only supported on 1-d domains")
        lo, hi, count = domain.axes[0]
        return count, (hi - lo) / (count - 1)
    x = np.asarray(ad.value_of(domain), dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise DimensionMismatch("integration is only supported on 1-d domains")
        x = x[:, 0]
    if x.ndim != 1 or len(x) < 2:
        raise DimensionMismatch("need at least two grid points")
    steps = np.diff(x)
    h = (x[-1] - x[0]) / (len(x) - 1)
    if not np.allclose(steps, h, rtol=1e-9, atol=1e-12 * max(1.0, abs(h))):
        raise NonUniformGrid("integration needs an equally spaced grid")
    return len(x), float(h)


def _trapezoid(n_points, h):
    w = np.full(n_points, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _simpson(n_points, h):
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _boole(n_points, h):
    w = np.zeros(n_points)
    for start in range(0, n_points - 1, 4):
        w[start : start + 5] += np.array([7.0, 32.0, 12.0, 32.0, 7.0])
    return w * (2.0 * h / 45.0)


def _romberg(n_points, h):
    levels = int(round(np.log2(n_points - 1)))
    rows = []
    for j in range(levels + 1):
        stride = 2 ** (levels - j)
        w = np.zeros(n_points)
        w[::stride] = _trapezoid(2**j + 1, h * stride)
        row = [w]
        for i in range(1, j + 1):
            prev = rows[j - 1][i - 1]
            row.append(row[i - 1] + (row[i - 1] - prev) / (4.0**i - 1.0))
        rows.append(row)
    return rows[-1][-1]


def _fits(method, intervals):
    if method == "simpson":
        return intervals % 2 == 0
    if method == "boole":
        return intervals % 4 == 0
    if method == "romberg":
        return intervals >= 1 and intervals & (intervals - 1) == 0
    return True


def _usable_intervals(method, intervals):
    if method == "simpson":
        return intervals - intervals % 2
    if method == "boole":
        return intervals - intervals % 4
    return 1 << (intervals.bit_length() - 1)  # romberg


def quadrature_weights(n_points: int, h: float, method: str = "trapezoid", strict: bool = False) -> np.ndarray:
    """Weights ``w`` with ``integral ≈ w @ values`` on an equally spaced grid.

    The returned array is shared between calls and read-only.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if n_points < 2:
        raise PointCountIncompatible("need at least two points")
    intervals = n_points - 1
    if method in ("simpson", "boole", "romberg") and not _fits(method, intervals):
        if strict:
            raise PointCountIncompatible(f"{method} cannot use {n_points} points")
        warnings.warn(
            f"{method} with {n_points} points: last {intervals - _usable_intervals(method, intervals)} "
            "interval(s) integrated with trapezoid",
            QuadratureWarning,
            stacklevel=3,
        )
    return _weights(n_points, h, method)


@lru_cache(maxsize=256)
def _weights(n_points, h, method):
    if method == "left_riemann":
        w = np.full(n_points, h)
        w[-1] = 0.0
    elif method == "right_riemann":
        w = np.full(n_points, h)
        w[0] = 0.0
    elif method == "trapezoid":
        w = _trapezoid(n_points, h)
    else:
        rule = {"simpson": _simpson, "boole": _boole, "romberg": _romberg}[method]
        intervals = n_points - 1
        if _fits(method, intervals):
            w = rule(n_points, h)
        else:
            head = _usable_intervals(method, intervals)
            w = np.zeros(n_points)
            if head:
                w[: head + 1] += rule(head + 1, h)
            w[head:] += _trapezoid(intervals - head + 1, h)
    w.flags.writeable = False
    return w


def integral(values, domain, method="trapezoid", strict=False):
    """Composite-rule integral of ``values`` (N,) or (N, m) over a 1-d grid.

    ``domain`` is a 1-d ``Box`` or the grid coordinates themselves.
    """
    n_points, h = _grid(domain)
    if isinstance(values, StackEntry):
        values = values.tensor()
    shape = np.shape(ad.value_of(values))
    if not shape or shape[0] != n_points:
        raise DimensionMismatch(f"values of shape {shape} do not match {n_points} grid points")
    w = quadrature_weights(n_points, h, method, strict)
    return ad.matmul(w, values)


# -- differential operators ----------------------------------------------------


def derivative(function, domain, order):
    """Order-``order`` derivatives of ``function`` at the domain points.

    ``function`` maps an (N, n) batch to (N, m) using the engine's ops; a
    ``Model`` qualifies.  Returns a ``StackEntry`` of shape
    (N,) + (n,)*order + (m,).
    """
    points = domain.points if isinstance(domain, Box) else np.asarray(domain, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if order > ad.MAX_ORDER:
        raise ad.OrderUnsupported(f"order {order} exceeds the engine maximum {ad.MAX_ORDER}")
    out = function(ad.Jet.seed(points, order))
    if not isinstance(out, ad.Jet):
        out = ad.Jet.constant(np.broadcast_to(ad.value_of(out), (len(points),) + np.shape(ad.value_of(out))[-1:]), order, points.shape[1])
    primal = ad.value_of(out.primal)
    if np.ndim(primal) == 1:
        out = out.map(lambda c: ad.reshape(c, (-1, 1)) if isinstance(c, ad.Var) else np.reshape(c, (-1, 1)))
    m = np.shape(ad.value_of(out.primal))[-1]
    n = points.shape[1]
    if order == 0:
        return StackEntry(0, {(): out.primal}, len(points), n, m)
    comps = {k: v for k, v in out.partials.items() if len(k) == order}
    return StackEntry(order, comps, len(points), n, m)


def _shape(x):
    return tuple(x.shape)


def divergence(first_derivative):
    """Σ_i ∂_i y_i per point from an (N, n, n) first-derivative entry."""
    shape = _shape(first_derivative)
    if len(shape) != 3 or shape[1] != shape[2]:
        raise DimensionMismatch(f"divergence needs shape (N, n, n), got {shape}")
    total = first_derivative[:, 0, 0]
    for i in range(1, shape[1]):
        total = ad.add(total, first_derivative[:, i, i])
    return total


def curl(first_derivative):
    shape = _shape(first_derivative)
    if len(shape) != 3 or shape[1:] != (3, 3):
        raise DimensionMismatch(f"curl needs shape (N, 3, 3), got {shape}")
    d = first_derivative
    return ad.stack(
        [
            ad.sub(d[:, 1, 2], d[:, 2, 1]),
            ad.sub(d[:, 2, 0], d[:, 0, 2]),
            ad.sub(d[:, 0, 1], d[:, 1, 0]),
        ],
        axis=1,
    )


class Metric:
    """Constant metric: ``"euclidean"``, ``"mostlyminus"`` (+ - - -),
    ``"mostlyplus"`` (- + + +) or an explicit symmetric matrix."""

    KINDS = ("euclidean", "mostlyminus", "mostlyplus")

    def __init__(self, kind="euclidean", time_axis=0):
        if isinstance(kind, str):
            if kind not in self.KINDS:
                raise ValueError(f"unknown metric {kind!r}; choose from {self.KINDS}")
            self.kind = kind
            self.explicit = None
        else:
            g = np.asarray(kind, dtype=np.float64)
            if g.ndim != 2 or g.shape[0] != g.shape[1] or not np.array_equal(g, g.T):
                raise DimensionMismatch("an explicit metric must be a symmetric square matrix")
            self.kind = "explicit"
            self.explicit = g
        self.time_axis = time_axis

    def matrix(self, n) -> np.ndarray:
        if self.explicit is not None:
            if self.explicit.shape != (n, n):
                raise DimensionMismatch(f"metric is {self.explicit.shape}, domain has {n} dimensions")
            return self.explicit
        if self.kind == "euclidean":
            return np.eye(n)
        if not 0 <= self.time_axis < n:
            raise AxisOutOfRange(f"time axis {self.time_axis} outside 0..{n - 1}")
        sign = -1.0 if self.kind == "mostlyminus" else 1.0
        g = np.diag(np.full(n, sign))
        g[self.time_axis, self.time_axis] = -sign
        return g


def _contract(second_derivative, g):
    total = None
    n = g.shape[0]
    for i in range(n):
        for j in range(n):
            c = g[i, j]
            if c == 0:
                continue
            term = second_derivative[:, i, j]
            if total is None:
                total = term if c == 1 else ad.neg(term) if c == -1 else ad.mul(c, term)
            elif c == 1:
                total = ad.add(total, term)
            elif c == -1:
                total = ad.sub(total, term)
            else:
                total = ad.add(total, ad.mul(c, term))
    if total is None:
        shape = _shape(second_derivative)
        return np.zeros((shape[0], shape[-1]))
    return total


def laplace_beltrami(second_derivative, metric="euclidean", time_axis=0):
    """Σ_ij g_ij ∂_i ∂_j f_k for a constant metric, shape (N, m).

    No √|g| density factor is applied.
    """
    shape = _shape(second_derivative)
    if len(shape) != 4 or shape[1] != shape[2]:
        raise DimensionMismatch(f"need a second-derivative entry (N, n, n, m), got {shape}")
    if not isinstance(metric, Metric):
        metric = Metric(metric, time_axis)
    return _contract(second_derivative, metric.matrix(shape[1]))


def laplacian(second_derivative):
    return laplace_beltrami(second_derivative, "euclidean")


def dalembertian(second_derivative, time_axis=0, c=1.0):
    """(1/c²) ∂_t² f − Σ_{i≠t} ∂_i² f, shape (N, m)."""
    shape = _shape(second_derivative)
    if len(shape) != 4 or shape[1] != shape[2]:
        raise DimensionMismatch(f"need a second-derivative entry (N, n, n, m), got {shape}")
    n = shape[1]
    if not 0 <= time_axis < n:
        raise AxisOutOfRange(f"time axis {time_axis} outside 0..{n - 1}")
    total = second_derivative[:, time_axis, time_axis]
    if c != 1.0:
        total = ad.mul(1.0 / (c * c), total)
    for i in range(n):
        if i != time_axis:
            total = ad.sub(total, second_derivative[:, i, i])
    return total


def diagonals(derivative_entry, reduce="list"):
    """Pure-direction derivatives ``∂_i^K f`` for each input axis ``i``.

    For K >= 2 each item is (N, m).  For K == 1 the item is the Jacobian
    diagonal ``∂_i y_i`` shaped (N, 1), which needs n == m.
    ``reduce="trace"`` sums the list.
    """
    shape = _shape(derivative_entry)
    order = len(shape) - 2
    if order < 1:
        raise DimensionMismatch("diagonals needs a derivative entry of order >= 1")
    n = shape[1]
    if order == 1:
        if shape[2] != n:
            raise DimensionMismatch("first-order diagonals need as many outputs as inputs")
        items = [derivative_entry[:, i, i : i + 1] for i in range(n)]
    else:
        items = [derivative_entry[(slice(None),) + (i,) * order] for i in range(n)]
    if reduce == "list":
        return items
    if reduce != "trace":
        raise ValueError("reduce must be 'list' or 'trace'")
    total = items[0]
    for item in items[1:]:
        total = ad.add(total, item)
    return total


def unstack(tensor):
    """Split an (N, d) tensor into d column tensors of shape (N, 1)."""
    if isinstance(tensor, StackEntry):
        tensor = tensor.tensor()
    shape = np.shape(ad.value_of(tensor))
    if len(shape) != 2:
        raise DimensionMismatch(f"unstack needs an (N, d) tensor, got {shape}")
    if shape[1] == 1:
        return [tensor]
    return [ad.getitem(tensor, (slice(None), slice(i, i + 1))) for i in range(shape[1])]
