import numpy as np


def central_diff(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def second_diff(f, x, h=1e-4):
    return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)


def rel_err(got, want, floor=1e-8):
    got, want = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    return float(np.max(np.abs(got - want) / np.maximum(np.abs(want), floor)))


def random_net_fd_stack(model, points, h1=1e-6, h2=1e-4):
    """Finite-difference first and second input-derivatives of a plain forward pass.

    Returns arrays of shape (N, n, m) and (N, n, n, m).
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[1]
    f = lambda p: np.asarray(model(p))
    f0 = f(points)
    m = f0.shape[1]
    d1 = np.zeros((len(points), n, m))
    d2 = np.zeros((len(points), n, n, m))
    eye = np.eye(n)
    for i in range(n):
        d1[:, i] = (f(points + h1 * eye[i]) - f(points - h1 * eye[i])) / (2 * h1)
        for j in range(n):
            ei, ej = h2 * eye[i], h2 * eye[j]
            d2[:, i, j] = (f(points + ei + ej) - f(points + ei - ej) - f(points - ei + ej) + f(points - ei - ej)) / (
                4 * h2 * h2
            )
    return d1, d2


class FnModel:
    """A parameter-free model wrapping a closed-form function of the input columns."""

    def __init__(self, fn, input_dim, output_dim=1):
        self.fn = fn
        self.input_dim = input_dim
        self.output_dim = output_dim

    def parameters(self):
        return []

    def __call__(self, x, params=None):
        return self.fn(x)
