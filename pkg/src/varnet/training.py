"""Adam, learning-rate schedulers, callbacks, metrics and the fit loop."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .stack import derivative_stack


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not lr > 0:
            raise ValueError("learning rate must be positive")
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = None
        self.v = None
        self.t = 0

    def step(self, params, grads):
        """Update ``params`` (list of arrays) in place."""
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(self.m):
            raise ValueError("parameter list changed length between steps")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.epsilon)


@dataclass
class TrainState:
    initial_lr: float
    lr: float
    epoch: int = 0
    total_epochs: int = 0
    loss_history: list = field(default_factory=list)
    seed: int | None = None
    prediction: np.ndarray | None = None


# -- schedulers ---------------------------------------------------------------


class Scheduler:
    """Called after each epoch; returns the learning rate for the next one."""

    def __call__(self, state: TrainState) -> float:
        raise NotImplementedError


class ExponentialLRDecay(Scheduler):
    """lr = lr0 * R**(n/N)"""

    def __init__(self, decay_rate, decay_steps):
        if not decay_rate > 0 or not decay_steps > 0:
            raise ValueError("decay_rate and decay_steps must be positive")
        self.decay_rate = decay_rate
        self.decay_steps = decay_steps

    def rate(self, n, initial_lr):
        return initial_lr * self.decay_rate ** (n / self.decay_steps)

    def __call__(self, state):
        return self.rate(state.epoch, state.initial_lr)


class InverseTimeDecay(Scheduler):
    """lr = lr0 / (1 + R**(n/N))"""

    def __init__(self, decay_rate, decay_steps):
        if not decay_rate > 0 or not decay_steps > 0:
            raise ValueError("decay_rate and decay_steps must be positive")
        self.decay_rate = decay_rate
        self.decay_steps = decay_steps

    def rate(self, n, initial_lr):
        return initial_lr / (1.0 + self.decay_rate ** (n / self.decay_steps))

    def __call__(self, state):
        return self.rate(state.epoch, state.initial_lr)


class PolynomialDecay(Scheduler):
    """lr = (lr0 - lr_min) * (1 - n/N)**p + lr_min, with n clamped to N."""

    def __init__(self, min_lr, decay_steps, power=1.0):
        if not min_lr > 0 or not decay_steps > 0:
            raise ValueError("min_lr and decay_steps must be positive")
        self.min_lr = min_lr
        self.decay_steps = decay_steps
        self.power = power

    def rate(self, n, initial_lr):
        n = min(n, self.decay_steps)
        return (initial_lr - self.min_lr) * (1.0 - n / self.decay_steps) ** self.power + self.min_lr

    def __call__(self, state):
        return self.rate(state.epoch, state.initial_lr)


class ReduceLROnPlateau(Scheduler):
    def __init__(self, patience=100, min_delta=0.0, factor=0.5, min_lr=1e-12):
        if not 0 < factor < 1:
            raise ValueError("factor must lie in (0, 1)")
        self.patience = patience
        self.min_delta = min_delta
        self.factor = factor
        self.min_lr = min_lr
        self.best = math.inf
        self.wait = 0

    def __call__(self, state):
        loss = state.loss_history[-1]
        if loss < self.best - self.min_delta:
            self.best = loss
            self.wait = 0
            return state.lr
        self.wait += 1
        if self.wait >= self.patience:
            self.wait = 0
            return max(state.lr * self.factor, self.min_lr)
        return state.lr


class ControlLossSTD(Scheduler):
    """Scale the rate down while the recent losses fluctuate too much.

    Over the last ``window`` losses, when std/|mean| exceeds ``threshold``
    the rate is multiplied by ``scale``; then at least ``window`` epochs
    pass before the next check.
    """

    def __init__(self, window=100, threshold=0.1, scale=0.5, min_lr=1e-12):
        if window < 2:
            raise ValueError("window must be at least 2")
        if not 0 < scale < 1:
            raise ValueError("scale must lie in (0, 1)")
        self.window = window
        self.threshold = threshold
        self.scale = scale
        self.min_lr = min_lr
        self.last_change = 0

    def __call__(self, state):
        history = state.loss_history
        if len(history) < self.window or state.epoch - self.last_change < self.window:
            return state.lr
        recent = np.asarray(history[-self.window :])
        mean = abs(recent.mean())
        if mean == 0 or not np.all(np.isfinite(recent)):
            return state.lr
        if recent.std() / mean > self.threshold:
            self.last_change = state.epoch
            return max(state.lr * self.scale, self.min_lr)
        return state.lr


# -- callbacks ----------------------------------------------------------------


class Callback:
    """``on_epoch_end`` sees the model at the parameters that produced the
    latest loss; returning a string halts training with that reason."""

    def on_epoch_end(self, state: TrainState, model):
        return None

    def on_train_end(self, state: TrainState, model):
        pass


class SaveModel(Callback):
    def __init__(self, path, best_only=True, flush_every=1000):
        self.path = path
        self.best_only = best_only
        self.flush_every = flush_every
        self.best_loss = math.inf
        self.snapshot = None
        self._dirty = False

    def on_epoch_end(self, state, model):
        loss = state.loss_history[-1]
        if not self.best_only or (math.isfinite(loss) and loss < self.best_loss):
            self.best_loss = min(self.best_loss, loss) if math.isfinite(loss) else self.best_loss
            self.snapshot = model.copy()
            self._dirty = True
        if self._dirty and self.flush_every and state.epoch % self.flush_every == 0:
            self._flush()
        return None

    def on_train_end(self, state, model):
        if self._dirty:
            self._flush()

    def _flush(self):
        if self.path is not None:
            self.snapshot.save(self.path)
        self._dirty = False


class EarlyStopping(Callback):
    def __init__(self, patience=1000, min_delta=0.0, target_loss=None):
        self.patience = patience
        self.min_delta = min_delta
        self.target_loss = target_loss
        self.best = math.inf
        self.wait = 0

    def on_epoch_end(self, state, model):
        loss = state.loss_history[-1]
        if self.target_loss is not None and loss <= self.target_loss:
            return f"loss {loss:.3e} reached target {self.target_loss:.3e}"
        if loss < self.best - self.min_delta:
            self.best = loss
            self.wait = 0
            return None
        self.wait += 1
        if self.patience is not None and self.wait >= self.patience:
            return f"no improvement for {self.patience} epochs"
        return None


class TerminateIf(Callback):
    def __init__(self, nan=True, inf=True, strictly_increasing=None):
        self.nan = nan
        self.inf = inf
        self.strictly_increasing = strictly_increasing

    def on_epoch_end(self, state, model):
        loss = state.loss_history[-1]
        if self.nan and math.isnan(loss):
            return "loss is NaN"
        if self.inf and math.isinf(loss):
            return "loss is infinite"
        window = self.strictly_increasing
        if window and len(state.loss_history) > window:
            recent = state.loss_history[-window - 1 :]
            if all(b > a for a, b in zip(recent, recent[1:])):
                return f"loss increased for {window} consecutive epochs"
        return None


# -- metrics ------------------------------------------------------------------


class WatchLR:
    name = "lr_watch"

    def __call__(self, state):
        return state.lr


class MSE:
    """Mean square error of the prediction at the training points against
    ``reference`` (array of shape (N, m), or a callable of the points)."""

    name = "mse"

    def __init__(self, reference, points=None):
        self.reference = reference
        self.points = points

    def __call__(self, state):
        ref = self.reference
        if callable(ref):
            ref = ref(self.points)
        pred = state.prediction
        ref = np.reshape(np.asarray(ref, dtype=np.float64), np.shape(pred))
        return float(np.mean((pred - ref) ** 2))


# -- fit ----------------------------------------------------------------------


def evaluate(problem, model):
    """Loss, parameter gradients, named terms and stack at the current parameters.

    Arithmetic failures inside user residuals (log of a negative number,
    division by zero) come back as a NaN loss with zero gradients.
    """
    tape = ad.Tape()
    params = tape.watch(model.parameters())
    stack = derivative_stack(model, problem.points, problem.order, tape, params)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            loss, terms = problem.loss(stack)
            grads = ad.grad(loss, params)
    except ArithmeticError:
        return math.nan, [np.zeros_like(p) for p in model.parameters()], {}, stack
    return float(ad.value_of(loss)), grads, terms, stack


def fit_step(problem, model, optimizer) -> float:
    """One full-batch Adam step; returns the loss before the update.

    A non-finite loss leaves the parameters untouched.
    """
    loss, grads, _, _ = evaluate(problem, model)
    if math.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads):
        optimizer.step(model.parameters(), grads)
    return loss


@dataclass
class Result:
    problem: object
    model: object
    optimizer: Adam
    state: TrainState
    schedulers: list = field(default_factory=list)
    callbacks: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    halted: tuple | None = None  # (callback class name, reason)

    @property
    def loss_history(self):
        return self.state.loss_history

    def fit(self, epochs, verbose=False, log_every=100, stream=None):
        """Continue training from the current state."""
        return fit(
            self.problem, self.model, epochs, self.optimizer, self.schedulers, self.callbacks, self.metrics,
            verbose=verbose, log_every=log_every, stream=stream, state=self.state,
        )

    def stack(self):
        return derivative_stack(self.model, self.problem.points, self.problem.order)

    def prediction(self) -> np.ndarray:
        return self.stack().entries[0].value

    def derivatives(self) -> list[np.ndarray]:
        return self.stack().values()

    def loss_breakdown(self) -> dict[str, float]:
        return loss_breakdown(self.problem, self.model)

    def loss_density(self):
        return self.problem.density(self.stack())


def loss_breakdown(problem, model) -> dict[str, float]:
    loss, _, terms, _ = evaluate(problem, model)
    out = {"loss": loss}
    out.update({k: float(ad.value_of(v)) for k, v in terms.items()})
    return out


def fit(
    problem,
    model,
    epochs,
    optimizer=None,
    schedulers=(),
    callbacks=(),
    metrics=(),
    verbose=False,
    log_every=100,
    stream=None,
    state=None,
    seed=None,
) -> Result:
    """Train ``model`` on ``problem`` for up to ``epochs`` full-batch steps.

    Each epoch evaluates the loss, runs callbacks (which see the evaluated
    parameters), applies the Adam update, then lets schedulers pick the
    next learning rate.  A callback returning a reason stops training
    before the update; the reason is kept in ``Result.halted``.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    optimizer = optimizer if optimizer is not None else Adam()
    schedulers, callbacks, metrics = list(schedulers), list(callbacks), list(metrics)
    if state is None:
        state = TrainState(initial_lr=optimizer.lr, lr=optimizer.lr, seed=seed)
    state.total_epochs += epochs
    stream = stream if stream is not None else sys.stdout
    if verbose:
        print(",".join(["epoch", "loss", "lr"] + [m.name for m in metrics]), file=stream)
    halted = None
    for _ in range(epochs):
        loss, grads, _, stack = evaluate(problem, model)
        state.epoch += 1
        state.loss_history.append(loss)
        if metrics:
            state.prediction = stack.entries[0].value
        for cb in callbacks:
            reason = cb.on_epoch_end(state, model)
            if reason is not None and halted is None:
                halted = (type(cb).__name__, reason)
        if verbose and (state.epoch % log_every == 0 or halted is not None or state.epoch == state.total_epochs):
            row = [str(state.epoch), f"{loss:.17g}", f"{state.lr:.17g}"] + [f"{m(state):.17g}" for m in metrics]
            print(",".join(row), file=stream)
        if halted is not None:
            break
        if math.isfinite(loss) and all(np.all(np.isfinite(g)) for g in grads):
            optimizer.step(model.parameters(), grads)
        for scheduler in schedulers:
            state.lr = float(scheduler(state))
        optimizer.lr = state.lr
    for cb in callbacks:
        cb.on_train_end(state, model)
    return Result(problem, model, optimizer, state, schedulers, callbacks, metrics, halted)
