"""PNG figures for reports (Agg backend). CSV files remain the data of record."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import GridFunction  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_functions(funcs: Sequence[GridFunction], labels: Sequence[str], path, title: str = "") -> Path:
    """Overlay 1-D functions, or show the first 2-D function as an image."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    dom = funcs[0].domain
    if dom.N == 1:
        x = dom.centers()[0]
        for f, lab in zip(funcs, labels):
            ax.plot(x, f.values[0], lw=1, label=lab)
        ax.set_xlabel("x")
        ax.legend(fontsize=7)
    else:
        sl = (0,) + tuple([slice(None)] * 2) + (dom.shape[2] // 2,) * (dom.N - 2)
        im = ax.imshow(funcs[0].values[sl].T, origin="lower", cmap="viridis")
        fig.colorbar(im, ax=ax)
    ax.set_title(title)
    return _save(fig, path)


def plot_curves(curves: dict[str, Sequence[float]], path, title: str = "", xlabel: str = "n", log: bool = True) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, ys in curves.items():
        ys = np.asarray(ys, float)
        xs = np.arange(1, len(ys) + 1)
        if log:
            ax.semilogy(xs, np.where(ys > 0, ys, np.nan), marker=".", lw=1, label=name)
        else:
            ax.plot(xs, ys, marker=".", lw=1, label=name)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_modulus(curve, path) -> Path:
    """Sup over the sequence of a modulus against its parameter."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(curve.params, np.maximum(curve.sup(), 1e-300), marker="o")
    ax.set_xlabel("parameter")
    ax.set_ylabel(f"sup_n {curve.kind}")
    ax.set_title(f"{curve.kind} modulus, r={curve.r:g}, order {curve.alpha}")
    return _save(fig, path)
