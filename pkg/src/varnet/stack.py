"""All input-derivatives of a model up to some order, at every training point."""

from __future__ import annotations

import itertools

import numpy as np

from . import autodiff as ad
from .autodiff import OrderUnsupported


class StackEntry:
    """Order-``k`` derivatives, logically shaped (N, n, ..., n, m).

    Each distinct partial is one tensor of shape (N, m) stored under its
    sorted multi-index, so permuted indices return the very same object.
    Indexing follows numpy: the leading axis selects points, the next ``k``
    select derivative directions, the last selects outputs.
    """

    def __init__(self, order, components, n_points, input_dim, output_dim):
        self.order = order
        self.components = components
        self.n_points = n_points
        self.input_dim = input_dim
        self.output_dim = output_dim
        self._zero = None

    @property
    def shape(self):
        return (self.n_points,) + (self.input_dim,) * self.order + (self.output_dim,)

    @property
    def ndim(self):
        return self.order + 2

    def __len__(self):
        return self.n_points

    def __repr__(self):
        return f"StackEntry(order={self.order}, shape={self.shape})"

    def component(self, index):
        """``∂_index f`` over all points and outputs, shape (N, m)."""
        index = ad.canonical(index)
        if len(index) != self.order:
            raise IndexError(f"order-{self.order} entry indexed with {len(index)} directions")
        got = self.components.get(index)
        if got is None:
            if self._zero is None:
                self._zero = np.zeros((self.n_points, self.output_dim))
            return self._zero
        return got

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis or k is None for k in key):
            return ad.getitem(self.tensor(), key)
        if len(key) > self.ndim:
            raise IndexError(f"too many indices for entry of shape {self.shape}")
        point = key[0] if key else slice(None)
        directions = list(key[1 : 1 + self.order])
        rest = key[1 + self.order :]
        directions += [slice(None)] * (self.order - len(directions))
        if all(isinstance(d, (int, np.integer)) for d in directions):
            norm = []
            for d in directions:
                if not -self.input_dim <= d < self.input_dim:
                    raise IndexError(f"direction {d} out of range for {self.input_dim} inputs")
                norm.append(d % self.input_dim)
            comp = self.component(norm)
            sub = (point,) + tuple(rest)
            if all(isinstance(s, slice) and s == slice(None) for s in sub):
                return comp
            return ad.getitem(comp, sub)
        return ad.getitem(self.tensor(), key)

    def tensor(self):
        """The full (N, n, ..., n, m) tensor, assembled on the tape."""
        if self.order == 0:
            return self.component(())

        def build(prefix):
            if len(prefix) == self.order:
                return self.component(prefix)
            return ad.stack([build(prefix + (i,)) for i in range(self.input_dim)], axis=1)

        return build(())

    @property
    def value(self) -> np.ndarray:
        return np.asarray(ad.value_of(self.tensor()))

    # arithmetic acts on the full tensor, so entries drop into formulas
    def _full(self):
        return self.tensor()

    def __add__(self, other):
        return ad.add(self._full(), other)

    def __radd__(self, other):
        return ad.add(other, self._full())

    def __sub__(self, other):
        return ad.sub(self._full(), other)

    def __rsub__(self, other):
        return ad.sub(other, self._full())

    def __mul__(self, other):
        return ad.mul(self._full(), other)

    def __rmul__(self, other):
        return ad.mul(other, self._full())

    def __truediv__(self, other):
        return ad.div(self._full(), other)

    def __neg__(self):
        return ad.neg(self._full())

    def __pow__(self, exponent):
        return ad.power(self._full(), exponent)


class DerivativeStack:
    """``entries[k]`` holds the order-``k`` derivatives at every point.

    Also remembers the model, tape and tape-bound parameters it was built
    with so boundary terms can run further passes on the same tape.
    """

    def __init__(self, entries, points, model, tape, params):
        self.entries = entries
        self.points = points
        self.model = model
        self.tape = tape
        self.params = params

    def __getitem__(self, k):
        return self.entries[k]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def max_order(self):
        return len(self.entries) - 1

    def values(self) -> list[np.ndarray]:
        """Plain numpy arrays of every entry."""
        return [e.value for e in self.entries]


def derivative_stack(model, points, max_order, tape=None, params=None) -> DerivativeStack:
    """One jet forward pass over all ``points`` (N, n) up to ``max_order``."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    if max_order > ad.MAX_ORDER:
        raise OrderUnsupported(f"order {max_order} exceeds the engine maximum {ad.MAX_ORDER}")
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if not np.all(np.isfinite(points)):
        raise ValueError("training points must be finite")
    if params is None:
        tape = tape if tape is not None else ad.Tape()
        params = tape.watch(model.parameters())
    elif tape is None:
        tape = next((p.tape for p in params if isinstance(p, ad.Var)), None)
    out = model(ad.Jet.seed(points, max_order), params)
    n_points, n = points.shape
    m = np.shape(ad.value_of(out.primal))[-1]
    entries = [StackEntry(0, {(): out.primal}, n_points, n, m)]
    for k in range(1, max_order + 1):
        comps = {}
        for index in itertools.combinations_with_replacement(range(n), k):
            got = out.partials.get(index)
            if got is not None:
                comps[index] = got
        entries.append(StackEntry(k, comps, n_points, n, m))
    return DerivativeStack(entries, points, model, tape, params)


def hessian_view(stack: DerivativeStack, t: int):
    """Nested ``view[i][j]`` of length-m tensors at point ``t``; the symmetric
    pair ``(i, j)``/``(j, i)`` share one object."""
    if stack.max_order < 2:
        raise OrderUnsupported("hessian_view needs a stack of order >= 2")
    entry = stack.entries[2]
    n = entry.input_dim
    cache = {}
    view = []
    for i in range(n):
        row = []
        for j in range(n):
            key = (min(i, j), max(i, j))
            if key not in cache:
                cache[key] = ad.getitem(entry.component(key), t)
            row.append(cache[key])
        view.append(row)
    return view
