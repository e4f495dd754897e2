"""Scalar losses from equations and boundary conditions, or from a functional
plus hyperweighted constraints."""

from __future__ import annotations

import inspect
import math
from functools import partial

import numpy as np

from . import autodiff as ad
from .sampling import Box
from .stack import DerivativeStack, derivative_stack


class EmptyLoss(ValueError):
    pass


class NonScalarFunctional(ValueError):
    pass


def residual_order(fn, order=None) -> int:
    """Derivative order a residual needs, read from its arity.

    ``fn(x, y, dy, d2y, ...)`` has arity ``order + 2``.  Variadic callables
    must pass ``order`` explicitly.
    """
    if order is not None:
        if order < 0:
            raise ValueError("order must be non-negative")
        return int(order)
    params = inspect.signature(fn).parameters.values()
    if any(p.kind is p.VAR_POSITIONAL for p in params):
        raise ValueError(f"cannot infer the order of variadic {fn!r}; pass order=")
    arity = sum(1 for p in params if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD))
    if arity < 2:
        raise ValueError(f"{fn!r} must take at least (x, y)")
    return arity - 2


def _call(fn, order, stack: DerivativeStack):
    args = [stack.points, stack.entries[0].component(())]
    args += stack.entries[1 : order + 1]
    return fn(*args)


def _columns(residual, n_points):
    """Residual reshaped to (N, r)."""
    shape = np.shape(ad.value_of(residual))
    if len(shape) == 0:
        return ad.reshape(residual, (1, 1)) if isinstance(residual, ad.Var) else np.reshape(residual, (1, 1))
    if shape[0] != n_points:
        raise ValueError(f"residual of shape {shape} does not have one row per point ({n_points})")
    if len(shape) == 2:
        return residual
    target = (n_points, int(np.prod(shape[1:])) if len(shape) > 1 else 1)
    return ad.reshape(residual, target) if isinstance(residual, ad.Var) else np.reshape(residual, target)


def _square_sum(x):
    return ad.reduce_sum(ad.mul(x, x))


class BC:
    """Boundary condition: ``residual(x, y, dy, ...)`` evaluated at ``anchor`` only."""

    def __init__(self, anchor, residual, order=None):
        self.anchor = np.atleast_1d(np.asarray(anchor, dtype=np.float64))
        if self.anchor.ndim != 1 or not np.all(np.isfinite(self.anchor)):
            raise ValueError("anchor must be a finite point")
        self.residual = residual
        self.order = residual_order(residual, order)

    def __repr__(self):
        return f"BC(anchor={self.anchor.tolist()}, order={self.order})"

    def evaluate(self, model, params, local=None):
        """Residual at the anchor, shape (1, r).

        ``local`` is an existing one-point stack at this anchor of at least
        this order; otherwise a fresh pass is run.
        """
        if local is None:
            local = derivative_stack(model, self.anchor[None, :], self.order, params=params)
        return _columns(_call(self.residual, self.order, local), 1)


def evaluate_bcs(bcs, model, params):
    """Residuals of ``bcs``, with one pass per distinct anchor."""
    needed = {}
    for bc in bcs:
        key = tuple(bc.anchor)
        needed[key] = max(needed.get(key, 0), bc.order)
    stacks = {
        key: derivative_stack(model, np.array([key]), order, params=params) for key, order in needed.items()
    }
    return [bc.evaluate(model, params, stacks[tuple(bc.anchor)]) for bc in bcs]


class Constraint:
    """``weight * C(x, y, dy, ...)**2`` added to a functional."""

    def __init__(self, fn, weight, order=None, name=None):
        weight = float(weight)
        if not (math.isfinite(weight) and weight > 0):
            raise ValueError(f"hyperweight must be finite and positive, got {weight}")
        self.fn = fn
        self.weight = weight
        self.order = residual_order(fn, order)
        self.name = name

    def __repr__(self):
        return f"Constraint(weight={self.weight}, order={self.order})"


# -- combinators --------------------------------------------------------------


def _check(equation_residuals, boundary_residuals):
    if not equation_residuals and not boundary_residuals:
        raise EmptyLoss("no equations and no boundary conditions")


def _density(equation_residuals):
    """Per-point Σ_i Σ_r res_i², shape (N,)."""
    total = None
    for res in equation_residuals:
        sq = ad.reduce_sum(ad.mul(res, res), axis=1)
        total = sq if total is None else ad.add(total, sq)
    return total


def loss_density(equation_residuals, boundary_residuals=()):
    """Density over training points followed by one entry per boundary anchor."""
    parts = []
    dens = _density(equation_residuals)
    if dens is not None:
        parts.append(dens)
    for bc in boundary_residuals:
        parts.append(ad.reshape(_square_sum(bc), (1,)) if isinstance(bc, ad.Var) else np.reshape(_square_sum(bc), (1,)))
    if len(parts) == 1:
        return parts[0]
    return ad.concatenate(parts)


def weighted_sum_combinator(equation_residuals, boundary_residuals, weights=None):
    """Mean square of each equation plus the squared boundary residuals."""
    _check(equation_residuals, boundary_residuals)
    total = None
    for i, res in enumerate(equation_residuals):
        term = ad.reduce_mean(ad.mul(res, res))
        if weights is not None and weights[i] != 1:
            term = ad.mul(float(weights[i]), term)
        total = term if total is None else ad.add(total, term)
    for bc in boundary_residuals:
        term = _square_sum(bc)
        total = term if total is None else ad.add(total, term)
    return total


def one_to_one_combinator(equation_residuals, boundary_residuals, reduce="mean"):
    """Reduce the loss density (training points plus boundary anchors)."""
    _check(equation_residuals, boundary_residuals)
    if reduce not in ("mean", "sum"):
        raise ValueError("reduce must be 'mean' or 'sum'")
    dens = loss_density(equation_residuals, boundary_residuals)
    return ad.reduce_sum(dens) if reduce == "sum" else ad.reduce_mean(dens)


def sum_combinator(equation_residuals, boundary_residuals):
    """Plain sum of every squared residual."""
    _check(equation_residuals, boundary_residuals)
    return ad.reduce_sum(loss_density(equation_residuals, boundary_residuals))


COMBINATORS = {
    "weighted_sum": weighted_sum_combinator,
    "sum": sum_combinator,
    "one_to_one": one_to_one_combinator,
    "one_to_one_mean": partial(one_to_one_combinator, reduce="mean"),
    "one_to_one_sum": partial(one_to_one_combinator, reduce="sum"),
}


def get_combinator(name_or_fn):
    if callable(name_or_fn):
        return name_or_fn
    try:
        return COMBINATORS[name_or_fn]
    except KeyError:
        raise ValueError(f"unknown combinator {name_or_fn!r}; choose from {sorted(COMBINATORS)}") from None


# -- losses -------------------------------------------------------------------


def _points(domain):
    if isinstance(domain, Box):
        return domain.points
    points = np.asarray(domain, dtype=np.float64)
    return points[:, None] if points.ndim == 1 else points


class Solver:
    """Differential equations with boundary conditions on a set of points."""

    def __init__(self, equations, bcs, domain, combinator="weighted_sum", weights=None, order=None):
        if callable(equations):
            equations = [equations]
        self.equations = list(equations)
        self.equation_orders = [residual_order(eq, order) for eq in self.equations]
        self.bcs = [bcs] if isinstance(bcs, BC) else list(bcs)
        self.domain = domain
        self.points = _points(domain)
        self.combinator = get_combinator(combinator)
        self.weights = weights
        if weights is not None and len(weights) != len(self.equations):
            raise ValueError("need one weight per equation")
        _check(self.equations, self.bcs)
        self.order = max(self.equation_orders + [bc.order for bc in self.bcs])

    def residuals(self, stack):
        n_points = len(stack.points)
        eqs = [_columns(_call(eq, k, stack), n_points) for eq, k in zip(self.equations, self.equation_orders)]
        bcs = evaluate_bcs(self.bcs, stack.model, stack.params)
        return eqs, bcs

    def loss(self, stack):
        """Scalar loss and the named contributions that make it up."""
        eqs, bcs = self.residuals(stack)
        if self.weights is None:
            total = self.combinator(eqs, bcs)
        else:
            total = self.combinator(eqs, bcs, weights=self.weights)
        terms = {}
        for i, res in enumerate(eqs):
            terms[f"equation_{i}"] = ad.reduce_mean(ad.mul(res, res))
        for i, res in enumerate(bcs):
            terms[f"bc_{i}"] = _square_sum(res)
        return total, terms

    def density(self, stack) -> np.ndarray:
        """Per-training-point equation density (no boundary terms)."""
        eqs, _ = self.residuals(stack)
        return np.asarray(ad.value_of(_density(eqs)), dtype=np.float64)


def solver_loss(equations, bcs, stack, combinator="weighted_sum", weights=None):
    problem = Solver(equations, bcs, stack.points, combinator, weights)
    if stack.max_order < problem.order:
        raise ad.OrderUnsupported(f"stack of order {stack.max_order} cannot feed residuals of order {problem.order}")
    return problem.loss(stack)[0]


def _scalar(value, what):
    if np.size(ad.value_of(value)) != 1:
        raise NonScalarFunctional(f"{what} must be scalar, got shape {np.shape(ad.value_of(value))}")
    if np.shape(ad.value_of(value)) == ():
        return value
    return ad.reduce_sum(value)


class Minimizer:
    """A functional of the model plus hyperweighted constraints."""

    def __init__(self, functional, domain, constraints=(), order=None):
        self.functional = functional
        self.functional_order = residual_order(functional, order)
        self.constraints = list(constraints)
        self.domain = domain
        self.points = _points(domain)
        self.order = max([self.functional_order] + [c.order for c in self.constraints])

    def loss(self, stack):
        f = _scalar(_call(self.functional, self.functional_order, stack), "functional")
        terms = {"functional": f}
        total = f
        for i, c in enumerate(self.constraints):
            value = _scalar(_call(c.fn, c.order, stack), "constraint")
            term = ad.mul(c.weight, ad.mul(value, value))
            terms[c.name or f"constraint_{i}"] = term
            total = ad.add(total, term)
        return total, terms

    def density(self, stack):
        return None


def minimizer_loss(functional, constraints, stack):
    problem = Minimizer(functional, stack.points, constraints)
    if stack.max_order < problem.order:
        raise ad.OrderUnsupported(f"stack of order {stack.max_order} cannot feed a functional of order {problem.order}")
    return problem.loss(stack)[0]
