"""Equally spaced training grids over boxes."""

from __future__ import annotations

import numpy as np


class InvalidRange(ValueError):
    pass


class InvalidCount(ValueError):
    pass


class OutOfBounds(ValueError):
    pass


class Box:
    """Closed box with ``count`` equally spaced points per axis.

    ``points`` is the row-major Cartesian product, shape (N, n).
    """

    def __init__(self, axes):
        axes = [tuple(a) for a in axes]
        if not axes:
            raise InvalidRange("a box needs at least one axis")
        for axis in axes:
            if len(axis) != 3:
                raise InvalidRange(f"axis must be (lo, hi, count), got {axis}")
            lo, hi, count = axis
            if not lo < hi:
                raise InvalidRange(f"need lo < hi, got {lo}, {hi}")
            if int(count) != count or count < 2:
                raise InvalidCount(f"need an integer count >= 2, got {count}")
        self.axes = [(float(lo), float(hi), int(count)) for lo, hi, count in axes]
        self.grids = [np.linspace(lo, hi, count) for lo, hi, count in self.axes]
        mesh = np.meshgrid(*self.grids, indexing="ij")
        self.points = np.stack([m.ravel() for m in mesh], axis=1)

    def __repr__(self):
        return f"Box({self.axes})"

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return len(self.axes)

    @property
    def spacing(self):
        return [(hi - lo) / (count - 1) for lo, hi, count in self.axes]

    def nearest_index(self, x) -> int:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if x.shape != (self.dim,):
            raise OutOfBounds(f"point must have {self.dim} coordinates")
        for xi, (lo, hi, _) in zip(x, self.axes):
            if not lo <= xi <= hi:
                raise OutOfBounds(f"{xi} outside [{lo}, {hi}]")
        d2 = np.sum((self.points - x) ** 2, axis=1)
        return int(np.argmin(d2))  # argmin returns the first of tied minima


def box(*axes) -> Box:
    """``box((lo, hi, count), ...)``; a single list of axes is also accepted."""
    if len(axes) == 1 and isinstance(axes[0], list):
        axes = axes[0]
    return Box(axes)


def nearest_index(domain: Box, x) -> int:
    return domain.nearest_index(x)
