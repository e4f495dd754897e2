"""Registered problems with their analytic reference solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import hermite

from . import autodiff as ad
from . import math as vmath
from .loss import BC, Constraint, Minimizer, Solver
from .sampling import box


class UnknownProblem(LookupError):
    pass


class RootFindFailure(RuntimeError):
    pass


# -- quantum harmonic oscillator -----------------------------------------------


@dataclass(frozen=True)
class QHOParams:
    hbar: float = 1.0
    mass: float = 1.0
    omega: float = 0.5
    energy: float = 2.75
    quantum_number: int = 5
    lo: float = -10.0
    hi: float = 10.0
    points: int = 100
    phi_at_zero: float = 0.0
    slope_at_zero: float = 0.86

    @property
    def eigenvalue(self):
        return self.hbar * self.omega * (self.quantum_number + 0.5)


QHO = QHOParams()


def make_qho_residual(params: QHOParams = QHO):
    kinetic = -(params.hbar**2) / (2.0 * params.mass)

    def qho_residual(x, phi, dphi, d2phi):
        potential = 0.5 * params.mass * params.omega**2 * x**2
        return kinetic * d2phi[:, 0, 0] + (potential - params.energy) * phi

    return qho_residual


qho_residual = make_qho_residual()


def qho_analytic(x, params: QHOParams = QHO):
    """Normalized eigenfunction psi_n of the oscillator (H_n physicists' Hermite)."""
    x = np.asarray(x, dtype=np.float64)
    n = params.quantum_number
    k = params.mass * params.omega / params.hbar
    norm = (k / math.pi) ** 0.25 / math.sqrt(2.0**n * math.factorial(n))
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    return norm * hermite.hermval(math.sqrt(k) * x, coeffs) * np.exp(-0.5 * k * x**2)


def qho_problem(params: QHOParams = QHO, combinator="weighted_sum"):
    bcs = [
        BC(0.0, lambda x, phi, dphi, d2phi: phi - params.phi_at_zero),
        BC(0.0, lambda x, phi, dphi, d2phi: dphi[:, 0] - params.slope_at_zero),
    ]
    domain = box((params.lo, params.hi, params.points))
    return Solver(make_qho_residual(params), bcs, domain, combinator=combinator)


# -- catenary --------------------------------------------------------------------


@dataclass(frozen=True)
class CatenaryParams:
    x0: float = 0.0
    x1: float = 3.0
    y0: float = 1.0
    y1: float = 0.0
    length: float = 5.0
    w_bc: float = 1e2
    w_length: float = 1e4
    points: int = 100
    method: str = "simpson"


CATENARY = CatenaryParams()


def _arc(dy_dx):
    return ad.power(ad.add(1.0, ad.mul(dy_dx, dy_dx)), 0.5)


def make_catenary_loss(params: CatenaryParams = CATENARY):
    """Energy plus hyperweighted endpoint and length penalties, as one function."""

    def catenary_loss(x, y, dy_dx):
        dy_dx = dy_dx[:, 0]
        energy = vmath.integral(ad.mul(y, _arc(dy_dx)), x, params.method)
        current_length = vmath.integral(_arc(dy_dx), x, params.method)
        bcs = (ad.sub(y[0], params.y0), ad.sub(y[-1], params.y1))
        total = ad.add(energy, ad.mul(params.w_bc, ad.add(ad.mul(bcs[0], bcs[0]), ad.mul(bcs[1], bcs[1]))))
        stretch = ad.sub(current_length, params.length)
        return ad.reduce_sum(ad.add(total, ad.mul(params.w_length, ad.mul(stretch, stretch))))

    return catenary_loss


catenary_loss = make_catenary_loss()


def catenary_problem(params: CatenaryParams = CATENARY):
    """Same loss as ``catenary_loss``, split into named constraints."""
    domain = box((params.x0, params.x1, params.points))

    def energy(x, y, dy_dx):
        return vmath.integral(ad.mul(y, _arc(dy_dx[:, 0])), x, params.method)

    def length(x, y, dy_dx):
        return ad.sub(vmath.integral(_arc(dy_dx[:, 0]), x, params.method), params.length)

    constraints = [
        Constraint(lambda x, y: ad.sub(y[0], params.y0), params.w_bc, name="bc_start"),
        Constraint(lambda x, y: ad.sub(y[-1], params.y1), params.w_bc, name="bc_end"),
        Constraint(length, params.w_length, name="length_constraint"),
    ]
    return Minimizer(energy, domain, constraints)


@dataclass(frozen=True)
class Catenary:
    """y = a cosh((x - b)/a) + c"""

    a: float
    b: float
    c: float

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a * np.cosh((x - self.b) / self.a) + self.c

    def slope(self, x):
        return np.sinh((np.asarray(x, dtype=np.float64) - self.b) / self.a)

    def curvature(self, x):
        return np.cosh((np.asarray(x, dtype=np.float64) - self.b) / self.a) / self.a

    def arclength(self, lo, hi):
        return self.a * (np.sinh((hi - self.b) / self.a) - np.sinh((lo - self.b) / self.a))

    def energy(self, lo, hi):
        """Closed form of the integral of y * sqrt(1 + y'^2)."""
        a, b, c = self.a, self.b, self.c

        def antiderivative(x):
            u = (x - b) / a
            return a * a * (u / 2 + np.sinh(2 * u) / 4) + c * a * np.sinh(u)

        return antiderivative(hi) - antiderivative(lo)


def solve_catenary(params: CatenaryParams = CATENARY, tol=1e-12, max_iter=200) -> Catenary:
    """Damped Newton on (a, b) with c eliminated through y(x0) = y0."""
    x0, x1, dh, length = params.x0, params.x1, params.y1 - params.y0, params.length
    span = x1 - x0
    if length <= math.hypot(span, dh):
        raise RootFindFailure("chain is not longer than the straight chord")

    def residual(a, b):
        u0, u1 = (x0 - b) / a, (x1 - b) / a
        return np.array([
            a * (math.cosh(u1) - math.cosh(u0)) - dh,
            a * (math.sinh(u1) - math.sinh(u0)) - length,
        ])

    def jacobian(a, b):
        u0, u1 = (x0 - b) / a, (x1 - b) / a
        return np.array([
            [(math.cosh(u1) - u1 * math.sinh(u1)) - (math.cosh(u0) - u0 * math.sinh(u0)),
             -math.sinh(u1) + math.sinh(u0)],
            [(math.sinh(u1) - u1 * math.cosh(u1)) - (math.sinh(u0) - u0 * math.cosh(u0)),
             -math.cosh(u1) + math.cosh(u0)],
        ])

    # sinh(z)/z ≈ 1 + z²/6 gives a starting scale
    z = math.sqrt(6.0 * (math.sqrt(length**2 - dh**2) / span - 1.0))
    a, b = span / (2.0 * z), x0 + 0.5 * span
    f = residual(a, b)
    for _ in range(max_iter):
        if np.max(np.abs(f)) < tol:
            break
        step = np.linalg.solve(jacobian(a, b), -f)
        t = 1.0
        while t > 1e-10:
            na, nb = a + t * step[0], b + t * step[1]
            if na > 0:
                try:
                    nf = residual(na, nb)
                except OverflowError:
                    nf = None
                if nf is not None and np.linalg.norm(nf) < np.linalg.norm(f):
                    break
            t *= 0.5
        else:
            raise RootFindFailure("line search stalled")
        a, b, f = na, nb, nf
    else:
        raise RootFindFailure(f"no convergence after {max_iter} iterations")
    c = params.y0 - a * math.cosh((x0 - b) / a)
    return Catenary(a, b, c)


def catenary_analytic(x, params: CatenaryParams = CATENARY):
    return solve_catenary(params)(x)


def catenary_length(model, params: CatenaryParams = CATENARY, points=None):
    """Length integral of ``model`` over the training grid."""
    domain = box((params.x0, params.x1, params.points)) if points is None else points
    d1 = vmath.derivative(model, domain, 1)
    slope = d1.value[:, 0]
    return float(np.squeeze(vmath.integral(np.sqrt(1.0 + slope**2), domain, params.method)))


# -- calibration problems --------------------------------------------------------


def exp_decay_problem(points=50, combinator="weighted_sum"):
    domain = box((0.0, 2.0, points))
    return Solver(
        lambda x, y, dy: dy[:, 0] + y,
        [BC(0.0, lambda x, y, dy: y - 1.0)],
        domain,
        combinator=combinator,
    )


def linear_data(points=20):
    x = np.linspace(0.0, 1.0, points)[:, None]
    return x, 2.0 * x + 1.0


def fit_linear_problem(points=20):
    """Least squares as a functional F = 0 with one constraint per sample."""
    x, y = linear_data(points)

    def sample(s):
        return lambda X, Y: ad.sub(Y[s, 0], y[s, 0])

    constraints = [Constraint(sample(s), 1.0, name=f"sample_{s}") for s in range(points)]
    return Minimizer(lambda X, Y: 0.0, x, constraints)


# -- registry ----------------------------------------------------------------------


@dataclass
class ProblemDef:
    name: str
    description: str
    build: Callable[..., object]
    defaults: dict
    true_function: Callable | None = None
    report: Callable | None = None
    tags: list = field(default_factory=list)


def _catenary_report(model, problem):
    return {"length": catenary_length(model, points=problem.points[:, 0])}


REGISTRY = {
    "qho": ProblemDef(
        "qho",
        "Schrödinger equation, harmonic oscillator, n = 5 (E = 2.75, ω = 0.5) on [-10, 10]",
        lambda points=100, combinator="weighted_sum": qho_problem(QHOParams(points=points), combinator),
        dict(epochs=60000, lr=1e-3, dims=[1, 10, 1], activation="sigmoid", combinator="weighted_sum", points=100),
        true_function=lambda x: qho_analytic(x),
    ),
    "catenary": ProblemDef(
        "catenary",
        "hanging chain of length 5 between (0, 1) and (3, 0); W_BC = 1e2, W_L = 1e4",
        lambda points=100, combinator=None: catenary_problem(CatenaryParams(points=points)),
        dict(epochs=50000, lr=1e-3, dims=[1, 10, 1], activation="sigmoid", combinator=None, points=100),
        true_function=lambda x: catenary_analytic(x),
        report=_catenary_report,
    ),
    "exp-decay": ProblemDef(
        "exp-decay",
        "y' = -y, y(0) = 1 on [0, 2]",
        lambda points=50, combinator="weighted_sum": exp_decay_problem(points, combinator),
        dict(epochs=20000, lr=1e-3, dims=[1, 10, 1], activation="sigmoid", combinator="weighted_sum", points=50),
        true_function=lambda x: np.exp(-np.asarray(x)),
    ),
    "fit-linear": ProblemDef(
        "fit-linear",
        "least-squares fit of y = 2x + 1 from 20 samples on [0, 1]",
        lambda points=20, combinator=None: fit_linear_problem(points),
        dict(epochs=10000, lr=1e-2, dims=[1, 8, 1], activation="sigmoid", combinator=None, points=20),
        true_function=lambda x: 2.0 * np.asarray(x) + 1.0,
    ),
}


def get_problem(name) -> ProblemDef:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownProblem(f"unknown problem {name!r}; registered: {', '.join(sorted(REGISTRY))}") from None
