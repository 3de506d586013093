"""Uniform Cartesian grids, zero-extended grid functions, gradients and norms.

Cells are indexed over a finite index box. The domain is the set of masked
cells; a one-cell collar of exterior cells always surrounds it, so the zero
extension of a function (and the jump of that extension at the boundary) is
representable on the box.

Cell ``i`` of the index box has center ``origin + (i + 1/2) h``.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy import ndimage

__all__ = [
    "GridDomain",
    "GridFunction",
    "ExponentConfig",
    "build_domain",
    "box_domain",
    "gradient",
    "magnitude",
    "lp_norm",
    "sobolev_norm",
    "x_norm",
    "w1inf_norm",
    "sum_space_norm",
    "level_set_measure",
]

DOMAIN_KINDS = ("box", "exterior_ball", "strip", "custom")


@dataclass(eq=False)
class GridDomain:
    """Discretized domain on a uniform grid.

    Attributes:
        mask: Boolean array over the index box, True on cells of the domain.
        h: Uniform spacing.
        origin: Coordinates of the lower corner of the index box.
        kind: One of ``box``, ``exterior_ball``, ``strip``, ``custom``.
        meta: Free-form metadata. Lipschitz parameters ``rho`` and ``L``
            are read from here by the boundary clamp of the truncation.
    """

    mask: np.ndarray
    h: float
    origin: np.ndarray
    kind: str = "custom"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.mask = np.ascontiguousarray(self.mask, dtype=bool)
        self.origin = np.asarray(self.origin, dtype=float).reshape(-1)
        self.h = float(self.h)
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"spacing must be positive and finite, got {self.h}")
        if self.mask.ndim not in (1, 2, 3):
            raise ValueError("only dimensions 1, 2, 3 are supported")
        if self.origin.shape != (self.mask.ndim,):
            raise ValueError("origin must have one entry per axis")
        if self.kind not in DOMAIN_KINDS:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if not self.mask.any():
            raise ValueError("empty mask")
        for ax in range(self.mask.ndim):
            edge = np.take(self.mask, [0, -1], axis=ax)
            if edge.any():
                raise ValueError("masked cell touches the index box edge; a one-cell collar is required")
        _, ncomp = ndimage.label(self.mask)
        if ncomp != 1:
            raise ValueError(f"disconnected mask ({ncomp} components)")
        self.mask.flags.writeable = False
        self._dist: np.ndarray | None = None
        self._centers: np.ndarray | None = None

    @property
    def N(self) -> int:
        return self.mask.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape

    @property
    def cell_volume(self) -> float:
        return self.h**self.N

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.cell_volume

    @property
    def box_diameter(self) -> float:
        return self.h * math.sqrt(sum(n * n for n in self.shape))

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``(N, *shape)``."""
        if self._centers is None:
            axes = [self.origin[a] + (np.arange(n) + 0.5) * self.h for a, n in enumerate(self.shape)]
            c = np.stack(np.meshgrid(*axes, indexing="ij"))
            c.flags.writeable = False
            self._centers = c
        return self._centers

    def radius(self) -> np.ndarray:
        """Distance of each cell center from the coordinate origin."""
        return np.sqrt(np.sum(self.centers() ** 2, axis=0))

    def distance(self) -> np.ndarray:
        """Distance to the complement (zero off the mask), cached."""
        if self._dist is None:
            from .maximal import distance_to_complement

            self._dist = distance_to_complement(self).values[0]
            self._dist.flags.writeable = False
        return self._dist

    def to_spec(self) -> dict[str, Any]:
        """JSON-ready description that rebuilds this domain exactly."""
        return {
            "kind": "custom",
            "h": self.h,
            "origin": self.origin.tolist(),
            "shape": list(self.shape),
            "mask_cells": np.argwhere(self.mask).tolist(),
            "meta": dict(self.meta, source_kind=self.kind),
        }


def box_domain(lower, upper, h: float, **meta) -> GridDomain:
    """Axis-aligned box ``[lower, upper]`` discretized with spacing ``h``."""
    return build_domain({"kind": "box", "lower": list(np.atleast_1d(lower)), "upper": list(np.atleast_1d(upper)), "h": h, "meta": meta})


def build_domain(spec: dict[str, Any]) -> GridDomain:
    """Build a domain from a JSON-style description.

    Keys: ``kind``, ``h``, and either ``lower``/``upper`` (box extent of the
    domain; the collar is added around it) or, for ``custom``, ``origin``,
    ``shape`` and ``mask_cells`` / ``mask``. ``exterior_ball`` takes
    ``radius`` and optional ``center``; ``strip`` takes ``width`` (the
    domain is ``|x_1| < width/2`` inside the box). ``meta`` is passed
    through.
    """
    kind = spec.get("kind", "box")
    h = float(spec["h"])
    if not h > 0:
        raise ValueError("h must be positive")
    meta = dict(spec.get("meta", {}))
    if kind == "custom":
        shape = tuple(int(n) for n in spec["shape"])
        if any(n <= 0 for n in shape):
            raise ValueError("shape must be positive")
        if "mask" in spec:
            mask = np.asarray(spec["mask"], dtype=bool).reshape(shape)
        else:
            mask = np.zeros(shape, dtype=bool)
            cells = np.asarray(spec.get("mask_cells", []), dtype=int).reshape(-1, len(shape))
            mask[tuple(cells.T)] = True
        kind_tag = meta.pop("source_kind", "custom")
        return GridDomain(mask, h, np.asarray(spec["origin"], float), kind=kind_tag, meta=meta)

    lower = np.atleast_1d(np.asarray(spec["lower"], dtype=float))
    upper = np.atleast_1d(np.asarray(spec["upper"], dtype=float))
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise ValueError("box extents must satisfy lower < upper with matching dimensions")
    counts = np.rint((upper - lower) / h).astype(int)
    if np.any(counts <= 0):
        raise ValueError("box too small for the spacing")
    shape = tuple(int(c) + 2 for c in counts)
    origin = lower - h
    mask = np.zeros(shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape)] = True
    dom_kind = "box"
    if kind in ("exterior_ball", "strip"):
        probe = GridDomain(mask, h, origin, kind="box")
        x = probe.centers()
        if kind == "exterior_ball":
            center = np.asarray(spec.get("center", np.zeros(len(shape))), float).reshape((-1,) + (1,) * len(shape))
            radius = float(spec["radius"])
            mask = mask & (np.sqrt(np.sum((x - center) ** 2, axis=0)) > radius)
            meta.setdefault("ball_radius", radius)
        else:
            width = float(spec["width"])
            mask = mask & (np.abs(x[0]) < width / 2)
        dom_kind = kind
    elif kind != "box":
        raise ValueError(f"unknown domain kind {kind!r}")
    return GridDomain(mask, h, origin, kind=dom_kind, meta=meta)


@dataclass(eq=False)
class GridFunction:
    """Cell data on a grid domain.

    ``values`` has shape ``(C, *domain.shape)`` over the whole index box.
    For an ordinary function (``extended=False``) the values are forced to
    zero off the mask, which is the zero Dirichlet extension. Gradients are
    returned with ``extended=True``: they live on the whole box, since the
    extension jumps across the boundary.
    """

    domain: GridDomain
    values: np.ndarray
    extended: bool = False
    comp_shape: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        shape = self.domain.shape
        if vals.shape == shape:
            vals = vals[None]
        if vals.shape[1:] != shape:
            raise ValueError(f"values shape {vals.shape} does not match domain {shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function values must be finite")
        if not self.extended:
            vals = np.where(self.domain.mask, vals, 0.0)
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        self.values = vals
        if self.comp_shape is None:
            self.comp_shape = (vals.shape[0],)
        self._grad: GridFunction | None = None

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def grad(self) -> GridFunction:
        if self._grad is None:
            self._grad = gradient(self)
        return self._grad

    def component(self, i: int) -> GridFunction:
        return GridFunction(self.domain, self.values[i : i + 1], extended=self.extended)

    @classmethod
    def zeros(cls, domain: GridDomain, M: int = 1) -> GridFunction:
        return cls(domain, np.zeros((M,) + domain.shape))

    @classmethod
    def from_callable(cls, domain: GridDomain, f: Callable[[np.ndarray], np.ndarray]) -> GridFunction:
        """Sample ``f`` at cell centers; ``f`` receives an ``(N, *shape)`` array."""
        return cls(domain, np.asarray(f(domain.centers()), dtype=float))

    @classmethod
    def stack(cls, parts: list[GridFunction]) -> GridFunction:
        return cls(parts[0].domain, np.concatenate([p.values for p in parts]))

    def _new(self, values: np.ndarray) -> GridFunction:
        return GridFunction(self.domain, values, extended=self.extended, comp_shape=self.comp_shape)

    def __add__(self, other: GridFunction) -> GridFunction:
        return self._new(self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        return self._new(self.values - other.values)

    def __neg__(self) -> GridFunction:
        return self._new(-self.values)

    def __mul__(self, c) -> GridFunction:
        return self._new(self.values * c)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return not np.any(self.values)


def gradient(u: GridFunction) -> GridFunction:
    """Forward differences of the zero extension, on the whole index box.

    Component ``(m, a)`` at cell ``i`` is ``(u_m(i + e_a) - u_m(i)) / h``;
    reads beyond the box edge are 0. The result has ``M * N`` components
    ordered row-major as ``(m, a)``.
    """
    dom = u.domain
    M, N = u.M, dom.N
    out = np.zeros((M, N) + dom.shape)
    for a in range(N):
        shifted = np.zeros_like(u.values)
        src = [slice(None)] * (N + 1)
        dst = [slice(None)] * (N + 1)
        src[a + 1] = slice(1, None)
        dst[a + 1] = slice(None, -1)
        shifted[tuple(dst)] = u.values[tuple(src)]
        out[:, a] = (shifted - u.values) / dom.h
    return GridFunction(dom, out.reshape((M * N,) + dom.shape), extended=True, comp_shape=(M, N))


def magnitude(u: GridFunction | np.ndarray) -> np.ndarray:
    """Pointwise Euclidean norm over components."""
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u)
    if vals.shape[0] == 1:
        return np.abs(vals[0])
    return np.sqrt(np.sum(vals * vals, axis=0))


def _region_mask(domain: GridDomain, region) -> np.ndarray | None:
    if region is None:
        return None
    if callable(region):
        return np.asarray(region(domain.centers()), dtype=bool)
    return np.asarray(region, dtype=bool)


def lp_norm(u: GridFunction, r: float, region=None) -> float:
    """``(sum |u|^r h^N)^(1/r)`` over the region, max for ``r = inf``.

    ``region`` is a boolean cell mask or a predicate on cell centers. By
    default all cells of the index box are summed; for ordinary functions
    this is the same as summing over the domain, for gradients it also
    counts the boundary jump of the zero extension.
    """
    mag = magnitude(u)
    sel = _region_mask(u.domain, region)
    if sel is not None:
        mag = mag[sel]
    if mag.size == 0:
        return 0.0
    if math.isinf(r):
        return float(mag.max())
    if r <= 0:
        raise ValueError("r must be positive")
    peak = float(mag.max())
    if peak == 0.0:
        return 0.0
    # scale out the peak so large exponents do not overflow
    s = np.sum((mag / peak) ** r) * u.domain.cell_volume
    return peak * float(s) ** (1.0 / r)


def sobolev_norm(u: GridFunction, r: float, region=None) -> float:
    """``||u||_r + ||grad u||_r``."""
    return lp_norm(u, r, region) + lp_norm(u.grad, r, region)


def x_norm(u: GridFunction, p: float, q: float) -> float:
    """Norm of the intersection space: ``sobolev(p) + sobolev(q)``."""
    return sobolev_norm(u, p) + sobolev_norm(u, q)


def w1inf_norm(u: GridFunction, region=None) -> float:
    """``||u||_inf + ||grad u||_inf``."""
    return lp_norm(u, math.inf, region) + lp_norm(u.grad, math.inf, region)


def sum_space_norm(u: GridFunction, r: float, s: float, region=None) -> float:
    """Norm on ``L^r + L^s`` (``r < s``) or ``L^r`` intersected with ``L^s``.

    For ``r >= s`` this is ``||u||_r + ||u||_s``. For ``r < s`` the infimum
    over splittings is replaced by the split at ``|u| = 1``: large values
    are measured in ``L^r``, small ones in ``L^s``. That split is within a
    factor 2 of the infimum norm.
    """
    if r >= s:
        return lp_norm(u, r, region) + lp_norm(u, s, region)
    big = magnitude(u) > 1.0
    hi = GridFunction(u.domain, np.where(big, u.values, 0.0), extended=True)
    lo = GridFunction(u.domain, np.where(big, 0.0, u.values), extended=True)
    return lp_norm(hi, r, region) + lp_norm(lo, s, region)


_OPS = {">": operator.gt, ">=": operator.ge, "≥": operator.ge, "<": operator.lt, "<=": operator.le, "≤": operator.le}


def level_set_measure(f: GridFunction | np.ndarray, op: str, c: float, domain: GridDomain | None = None) -> float:
    """``h^N`` times the number of masked cells where ``f op c`` holds."""
    if isinstance(f, GridFunction):
        domain = f.domain
        vals = f.values[0] if f.M == 1 else magnitude(f)
    else:
        if domain is None:
            raise ValueError("a domain is needed for raw arrays")
        vals = np.asarray(f)
    hit = _OPS[op](vals, c) & domain.mask
    return float(np.count_nonzero(hit)) * domain.cell_volume


@dataclass
class ExponentConfig:
    """Exponents ``1 < q <= p`` in dimension ``N`` and the critical ``p*``.

    When ``p < N``, ``p*`` defaults to ``pN/(N-p)``; otherwise it must be
    supplied and be at least ``p``. Weight fields are optional box arrays;
    see :func:`sobodec.operators.default_weights`.
    """

    q: float
    p: float
    N: int
    p_star: float | None = None
    h_q: np.ndarray | None = None
    h_p: np.ndarray | None = None
    h_pstar: np.ndarray | None = None
    h_inf: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (1.0 < self.q <= self.p):
            raise ValueError(f"need 1 < q <= p, got q={self.q}, p={self.p}")
        if self.p < self.N:
            crit = self.p * self.N / (self.N - self.p)
            if self.p_star is None:
                self.p_star = crit
        elif self.p_star is None:
            raise ValueError("p >= N: the critical exponent p_star must be supplied")
        if self.p_star < self.p:
            raise ValueError("p_star must be at least p")
        for name in ("h_q", "h_p", "h_pstar", "h_inf"):
            w = getattr(self, name)
            if w is not None and (np.any(np.asarray(w) < 0) or not np.all(np.isfinite(w))):
                raise ValueError(f"weight {name} must be nonnegative and finite")

    @property
    def conj(self) -> tuple[float, float, float]:
        """Conjugates ``(p', q', p*')``."""
        c = lambda t: t / (t - 1.0)  # noqa: E731
        return c(self.p), c(self.q), c(self.p_star)

    def to_dict(self) -> dict[str, float]:
        return {"q": self.q, "p": self.p, "N": self.N, "p_star": self.p_star}
