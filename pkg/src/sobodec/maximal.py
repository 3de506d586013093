"""Discrete Hardy-Littlewood maximal operator and exact distance transform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .grid import GridDomain, GridFunction

__all__ = ["RadiusSchedule", "ball_volume", "ball_offsets", "ball_sums", "maximal_function", "distance_to_complement"]


def ball_volume(N: int, r: float) -> float:
    """Volume of the continuum ball of radius ``r`` in ``R^N``."""
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1) * r**N


@dataclass(frozen=True)
class RadiusSchedule:
    """Increasing radii for the discrete sup; the first must be ``h/2``."""

    radii: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.radii:
            raise ValueError("empty radius schedule")
        if any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must be strictly increasing")

    @classmethod
    def default(cls, domain: GridDomain, ratio: float = 1.5) -> RadiusSchedule:
        """``h/2``, then ``(m + 1/2) h`` with ``m`` growing by ``ratio``.

        Half-integer radii never pass through a cell center (``(m + 1/2)^2``
        is not an integer), and in 1-D the ball of radius ``(m + 1/2) h``
        holds exactly ``2m + 1`` cells, its continuum length.
        """
        if ratio <= 1:
            raise ValueError("ratio must exceed 1")
        h = domain.h
        radii = [h / 2]
        m = 1
        while True:
            r = (m + 0.5) * h
            radii.append(r)
            if r >= domain.box_diameter:
                break
            m = max(m + 1, int(round(m * ratio)))
        return cls(tuple(radii))

    def check(self, domain: GridDomain) -> None:
        if self.radii[0] != domain.h / 2:
            raise ValueError("first radius must be h/2")
        if self.radii[-1] < domain.box_diameter / 2:
            raise ValueError("last radius must reach half the box diameter")


def ball_offsets(N: int, r: float, h: float) -> np.ndarray:
    """Boolean stencil of integer offsets ``k`` with ``|k| h <= r``."""
    m = int(math.floor(r / h + 1e-12))
    ax = np.arange(-m, m + 1)
    grids = np.meshgrid(*([ax] * N), indexing="ij")
    d = np.sqrt(sum((g * h) ** 2 for g in grids))
    return d <= r


def ball_sums(a: np.ndarray, r: float, h: float, method: str = "auto") -> np.ndarray:
    """``sum_{|y-x| <= r} a(y)`` for every cell ``x``, zero outside the array."""
    N = a.ndim
    if r < h:
        return a.copy()
    if N == 1 and method in ("auto", "prefix"):
        m = int(math.floor(r / h + 1e-12))
        c = np.concatenate([[0.0], np.cumsum(a)])
        n = a.shape[0]
        i = np.arange(n)
        hi = np.minimum(i + m + 1, n)
        lo = np.maximum(i - m, 0)
        return np.maximum(c[hi] - c[lo], 0.0)
    ker = ball_offsets(N, r, h).astype(float)
    if method == "direct" or (method == "auto" and ker.size <= 125):
        return ndimage.correlate(a, ker, mode="constant", cval=0.0)
    out = signal.fftconvolve(a, ker, mode="same")
    return np.maximum(out, 0.0)


def maximal_function(v: GridFunction, sched: RadiusSchedule | None = None, method: str = "auto") -> GridFunction:
    """Max over the schedule of ball averages of ``|v|`` with continuum ball volumes.

    Balls contain the cells whose centers lie within distance ``r``. The
    result lives on the whole index box.
    """
    dom = v.domain
    if sched is None:
        sched = RadiusSchedule.default(dom)
    a = np.abs(v.values[0]) if v.M == 1 else np.sqrt(np.sum(v.values**2, axis=0))
    vol = dom.cell_volume
    out = np.zeros(dom.shape)
    for r in sched.radii:
        avg = ball_sums(a, r, dom.h, method) * (vol / ball_volume(dom.N, r))
        np.maximum(out, avg, out=out)
    return GridFunction(dom, out, extended=True)


def distance_to_complement(dom: GridDomain) -> GridFunction:
    """Euclidean distance from masked cell centers to the nearest unmasked one.

    The nearest exterior cell comes from scipy's exact transform; the
    distance itself is recomputed from integer offsets so the value is the
    same float a brute-force search produces.
    """
    _, idx = ndimage.distance_transform_edt(dom.mask, return_indices=True)
    here = np.indices(dom.shape)
    sq = np.sum((idx - here) ** 2, axis=0)
    d = dom.h * np.sqrt(sq.astype(float))
    return GridFunction(dom, np.where(dom.mask, d, 0.0))
