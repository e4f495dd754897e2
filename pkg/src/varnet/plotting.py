"""Figures for solver reports.

matplotlib is optional: it is imported on first use so the rest of the
package works without it.
"""

from __future__ import annotations

import os
import tempfile

import numpy as np

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("plotting needs matplotlib; install it or the package's 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def report_panels(x, y_pred, y_true=None, density=None):
    """Panels to draw for a 1-d report: prediction, squared error, density."""
    panels = [("prediction", [("prediction", y_pred, "-")] + ([("reference", y_true, "--")] if y_true is not None else []))]
    if y_true is not None:
        panels.append(("squared error", [("", (y_pred - y_true) ** 2, "-")]))
    if density is not None:
        panels.append(("loss density", [("", density, "-")]))
    return panels


def plot_report(path, x, y_pred, y_true=None, density=None, title=None, dpi=150):
    """Write a row of panels for a 1-d solution to ``path`` (format from the suffix).

    ``y_pred`` and ``y_true`` hold the first output column.  The error and
    density panels use a log scale.
    """
    plt = _pyplot()
    x = np.asarray(x, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    y_true = None if y_true is None else np.asarray(y_true, dtype=np.float64).ravel()
    density = None if density is None else np.asarray(density, dtype=np.float64).ravel()
    panels = report_panels(x, y_pred, y_true, density)

    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 2.8), squeeze=False)
        for ax, (ylabel, curves) in zip(axes[0], panels):
            for label, values, style in curves:
                if ylabel == "prediction":
                    ax.plot(x, values, style, label=label)
                else:
                    ax.semilogy(x, np.maximum(values, np.finfo(float).tiny), style)
            ax.set_xlabel("x")
            ax.set_ylabel(ylabel)
            if len(curves) > 1:
                ax.legend(loc="best", frameon=False)
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path, dpi)
        plt.close(fig)
    return path


def _save(fig, path, dpi):
    # render to a sibling temp file, then rename into place
    path = os.fspath(path)
    suffix = os.path.splitext(path)[1] or ".png"
    fd, tmp = tempfile.mkstemp(suffix=suffix, dir=os.path.dirname(os.path.abspath(path)))
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=dpi)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
