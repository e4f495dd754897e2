"""Neural-network solvers for differential equations and constrained functionals.

A small numpy engine: a reverse-mode tape for parameter gradients, Taylor
jets for input derivatives, dense networks, quadrature and vector calculus,
losses built from residuals or functionals, and an Adam training loop.

>>> import varnet
>>> domain = varnet.box((0.0, 2.0, 50))
>>> problem = varnet.Solver(
...     lambda x, y, dy: dy[:, 0] + y,
...     varnet.BC(0.0, lambda x, y, dy: y - 1.0),
...     domain,
... )
>>> result = varnet.fit(problem, varnet.nn([1, 10, 1]), epochs=10)
>>> len(result.loss_history)
10
"""

from . import autodiff, loss, math, network, problems, sampling, stack, training
from .loss import BC, Constraint, Minimizer, Solver
from .network import Model, build
from .sampling import Box, box
from .stack import derivative_stack
from .training import (
    MSE,
    Adam,
    ControlLossSTD,
    EarlyStopping,
    ExponentialLRDecay,
    InverseTimeDecay,
    PolynomialDecay,
    ReduceLROnPlateau,
    SaveModel,
    TerminateIf,
    WatchLR,
    fit,
)

nn = build

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "BC",
    "Box",
    "Constraint",
    "ControlLossSTD",
    "EarlyStopping",
    "ExponentialLRDecay",
    "InverseTimeDecay",
    "MSE",
    "Minimizer",
    "Model",
    "PolynomialDecay",
    "ReduceLROnPlateau",
    "SaveModel",
    "Solver",
    "TerminateIf",
    "WatchLR",
    "autodiff",
    "box",
    "build",
    "derivative_stack",
    "fit",
    "loss",
    "math",
    "network",
    "nn",
    "problems",
    "sampling",
    "stack",
    "training",
]
