"""Truncation operators: outer cutoff, Lipschitz truncation above, and below.

The scalar Lipschitz truncation follows a four-step pipeline:

1. ``v = |u| + |grad u|`` and the good set ``R = {M(v) <= lam}`` over the box;
2. symmetric McShane extension of ``u|R`` with Lipschitz factor ``K = cbar*lam``;
3. clamp into ``[-h_lam, h_lam]`` with ``h_lam = cbar * lam * c_omega * dist``,
   which forces the output to vanish off the domain;
4. ``R_hat = R`` intersected with ``{|ubar| <= h_lam}`` and the domain.

On ``R`` the extension is defined as ``u`` itself, so the output agrees with
the input on ``R_hat`` exactly even when ``u|R`` is not ``K``-Lipschitz on
the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridDomain, GridFunction, magnitude, x_norm
from .maximal import RadiusSchedule, maximal_function

__all__ = [
    "CBAR",
    "nu",
    "nu_prime",
    "eta",
    "ball_indicator",
    "cutoff_outer",
    "mcshane_extension",
    "TruncationResult",
    "lipschitz_truncate_scalar",
    "truncate_above",
    "truncate_below",
    "apply_family",
    "tail_difference",
    "tail_criteria",
    "geometric_ladder",
    "verify_truncation",
]

CBAR = 2.0  # Lipschitz factor of the extension step
_CHUNK = 1 << 22  # pair budget per McShane block


def nu(r):
    """Quintic smoothstep: 1 for ``r <= 0``, 0 for ``r >= 1``, C^2 in between."""
    t = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def nu_prime(r):
    t = np.asarray(r, dtype=float)
    inside = (t > 0) & (t < 1)
    return np.where(inside, -30.0 * t * t * (1.0 - t) ** 2, 0.0)


def eta(lam: float, t):
    """Clamp of ``t`` into ``[-lam, lam]``."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    out = np.clip(t, -lam, lam)
    return float(out) if np.ndim(out) == 0 else out


def ball_indicator(domain: GridDomain, n: float) -> GridFunction:
    """1 on domain cells whose center lies in the open ball ``B_n(0)``."""
    return GridFunction(domain, (domain.radius() < n).astype(float))


def cutoff_outer(u: GridFunction, n: float) -> GridFunction:
    """Multiply by ``nu(|x| - n)``; linear in ``u``, supported in ``B_{n+1}``."""
    w = nu(u.domain.radius() - n)
    return GridFunction(u.domain, u.values * w)


def mcshane_extension(values: np.ndarray, good: np.ndarray, centers: np.ndarray, K: float) -> np.ndarray:
    """Symmetric McShane extension of ``values`` from the ``good`` cells.

    Returns ``values`` on good cells and
    ``(min_y (u(y) + K|x-y|) + max_y (u(y) - K|x-y|)) / 2`` elsewhere, the
    optimization running over good cells ``y``. With no good cells the
    result is 0.
    """
    out = np.where(good, values, 0.0)
    if not good.any() or good.all():
        return out
    N = centers.shape[0]
    g_pts = centers[:, good].T  # (nG, N)
    g_val = values[good]
    b_idx = np.flatnonzero(~good.ravel())
    b_pts = centers.reshape(N, -1)[:, b_idx].T
    step = max(1, _CHUNK // max(1, g_pts.shape[0]))
    flat = out.ravel()
    for s in range(0, b_idx.size, step):
        diff = b_pts[s : s + step, None, :] - g_pts[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        Kd = K * d
        lo = np.min(g_val[None, :] + Kd, axis=1)
        hi = np.max(g_val[None, :] - Kd, axis=1)
        flat[b_idx[s : s + step]] = 0.5 * (lo + hi)
    return flat.reshape(values.shape)


@dataclass
class TruncationResult:
    """Output of a truncation together with its good set and audit numbers.

    Attributes:
        function: Truncated function.
        good_set: Cells (inside the domain) where the truncation agrees
            with the input for ``above``, or vanishes for ``below``.
        level: The level ``lam`` (for ``below`` the inner level ``1/n``).
        family: ``above``, ``below`` or ``outer``.
        audit: Measured quantities: ``sup_ratio`` is
            ``max(|u_hat| + |grad u_hat|) / lam``, ``bad_measure`` is the
            measure of the domain outside the good set.
    """

    function: GridFunction
    good_set: np.ndarray
    level: float
    family: str
    audit: dict[str, float] = field(default_factory=dict)
    raw_good: np.ndarray | None = None
    max_fn: np.ndarray | None = None

    def sidecar(self) -> dict:
        return {
            "level": self.level,
            "family": self.family,
            "audit": self.audit,
            "good_cells": np.argwhere(self.good_set).tolist(),
        }


def _c_omega(domain: GridDomain) -> float:
    L = float(domain.meta.get("L", 1.0))
    rho = float(domain.meta.get("rho", 1.0))
    return L * L * max(1.0, 1.0 / rho)


def lipschitz_truncate_scalar(
    u: GridFunction,
    lam: float,
    *,
    cbar: float = CBAR,
    c_omega: float | None = None,
    sched: RadiusSchedule | None = None,
) -> TruncationResult:
    """Boundary-preserving Lipschitz truncation of a scalar function at level ``lam``."""
    if u.M != 1:
        raise ValueError("lipschitz_truncate_scalar needs a scalar function")
    if not lam > 0:
        raise ValueError("level must be positive")
    dom = u.domain
    if c_omega is None:
        c_omega = _c_omega(dom)
    vals = u.values[0]
    v = np.abs(vals) + magnitude(u.grad)
    if not v.any():
        good = np.ones(dom.shape, dtype=bool)
        mf = np.zeros(dom.shape)
    else:
        mf = maximal_function(GridFunction(dom, v, extended=True), sched).values[0]
        good = mf <= lam
    K = cbar * lam
    ubar = mcshane_extension(vals, good, dom.centers(), K)
    cap = cbar * lam * c_omega * dom.distance()
    uhat = np.clip(ubar, -cap, cap)
    rhat = good & (np.abs(ubar) <= cap) & dom.mask
    out = GridFunction(dom, uhat[None])
    sup = float(np.max(np.abs(out.values[0]) + magnitude(out.grad)))
    audit = {
        "sup_ratio": sup / lam,
        "bad_measure": float(np.count_nonzero(dom.mask & ~rhat)) * dom.cell_volume,
    }
    return TruncationResult(out, rhat, lam, "scalar", audit, raw_good=good, max_fn=mf)


def truncate_above(u: GridFunction, n: float, **kw) -> TruncationResult:
    """Componentwise Lipschitz truncation at level ``n``; good sets intersect."""
    parts = [lipschitz_truncate_scalar(u.component(i), n, **kw) for i in range(u.M)]
    good = np.logical_and.reduce([p.good_set for p in parts])
    raw = np.logical_and.reduce([p.raw_good for p in parts])
    f = GridFunction.stack([p.function for p in parts])
    dom = u.domain
    sup = float(np.max(magnitude(f) + magnitude(f.grad)))
    audit = {
        "sup_ratio": sup / n,
        "bad_measure": float(np.count_nonzero(dom.mask & ~good)) * dom.cell_volume,
    }
    mf = np.max([p.max_fn for p in parts], axis=0)
    return TruncationResult(f, good, float(n), "above", audit, raw_good=raw, max_fn=mf)


def truncate_below(u: GridFunction, n: float, **kw) -> TruncationResult:
    """``u`` minus its truncation at level ``1/n``, componentwise."""
    inner = truncate_above(u, 1.0 / n, **kw)
    f = GridFunction(u.domain, u.values - inner.function.values)
    audit = dict(inner.audit)
    audit["small_part_w1inf"] = float(np.max(magnitude(inner.function)) + np.max(magnitude(inner.function.grad)))
    return TruncationResult(f, inner.good_set, 1.0 / n, "below", audit, raw_good=inner.raw_good, max_fn=inner.max_fn)


def apply_family(u: GridFunction, family: str, level: float, **kw) -> GridFunction:
    """Evaluate one member of a truncation family.

    ``level`` is the radius for ``outer``, the truncation level for
    ``above`` and the index ``n`` (inner level ``1/n``) for ``below``.
    """
    if family == "outer":
        return cutoff_outer(u, level)
    if family == "above":
        return truncate_above(u, level, **kw).function
    if family == "below":
        return truncate_below(u, level, **kw).function
    raise ValueError(f"unknown family {family!r}")


def tail_difference(
    u_seq: Sequence[GridFunction],
    family: str,
    j: int,
    n: int,
    p: float,
    q: float,
    ladder: Sequence[float] | None = None,
) -> float:
    """X-norm of ``(phi_n - phi_j)(u_n)`` with 1-based indices ``j < n``.

    ``ladder[k-1]`` is the level of the ``k``-th family member; by default
    the level equals the index.
    """
    if not j < n:
        raise ValueError("tail_difference needs j < n")
    level = (lambda k: float(k)) if ladder is None else (lambda k: float(ladder[k - 1]))
    u = u_seq[n - 1]
    d = apply_family(u, family, level(n)) - apply_family(u, family, level(j))
    return x_norm(d, p, q)


def _tail_laws(n: int, j0: int) -> dict[str, int]:
    return {
        "n-1": n - 1,
        "n/2": max(j0, n // 2),
        "sqrt": max(j0, math.isqrt(n)),
        "log": max(j0, int(math.log2(n))),
    }


def tail_criteria(
    u_seq: Sequence[GridFunction],
    family: str,
    p: float,
    q: float,
    ladder: Sequence[float] | None = None,
    j0: int | None = None,
) -> dict:
    """Both forms of the tail condition on the same data.

    ``uniform[j]`` is ``sup_{n > i >= j} ||(phi_n - phi_i)(u_n)||_X``;
    ``sequential[law]`` lists ``||(phi_n - phi_{j(n)})(u_n)||_X`` for
    ``n > j0`` along index laws ``j(n) -> infinity`` with ``j0 <= j(n) < n``.
    The law ``worst`` picks the largest tail at each ``n``, so its sup equals
    ``uniform[j0]``; every other law is dominated by it.
    """
    K = len(u_seq)
    if K < 3:
        raise ValueError("need at least three members")
    j0 = j0 or max(1, K // 4)
    level = (lambda k: float(k)) if ladder is None else (lambda k: float(ladder[k - 1]))
    T = np.zeros((K + 1, K + 1))
    for n in range(2, K + 1):
        u = u_seq[n - 1]
        top = apply_family(u, family, level(n))
        for j in range(1, n):
            T[j, n] = x_norm(top - apply_family(u, family, level(j)), p, q)
    uniform = [max((float(T[jj:n, n].max()) for n in range(jj + 1, K + 1)), default=0.0) for jj in range(1, K + 1)]
    ns = list(range(j0 + 1, K + 1))
    seq: dict[str, list[float]] = {name: [] for name in _tail_laws(K, j0)}
    seq["worst"] = []
    for n in ns:
        for name, j in _tail_laws(n, j0).items():
            seq[name].append(float(T[min(j, n - 1), n]))
        seq["worst"].append(float(T[j0:n, n].max()))
    return {"family": family, "j0": j0, "n": ns, "uniform": uniform, "sequential": seq, "matrix": T[1:, 1:].tolist()}


def geometric_ladder(lo: float, hi: float, count: int) -> np.ndarray:
    """``count`` geometrically spaced levels from ``lo`` to ``hi``."""
    if count == 1:
        return np.array([float(lo)])
    return lo * (hi / lo) ** (np.arange(count) / (count - 1))



def verify_truncation(u: GridFunction, family: str, levels: Sequence[float], p: float = 2.5, constants: dict | None = None) -> dict:
    """Check the truncation contract of one function across a level ladder.

    ``above``: ``sup(|u_hat| + |grad u_hat|) <= C0 lam``, exact agreement on
    the good set, zero off the domain, and
    ``|Omega \\ R_hat| <= C3^p lam^-p ||u||^p_{W^{1,p}}``.
    ``below`` (level ``n``): the small part has ``W^{1,inf}`` norm at most
    ``C0 / n`` and the output vanishes on the good set.
    ``outer`` (radius ``n``): the output equals ``u`` inside ``B_n`` and
    vanishes outside ``B_{n+1}``.
    """
    from .calibration import FROZEN
    from .grid import sobolev_norm

    c = dict(FROZEN, **(constants or {}))
    dom = u.domain
    rows = []
    w1p = sobolev_norm(u, p)
    for lam in levels:
        lam = float(lam)
        row: dict = {"level": lam}
        if family == "above":
            res = truncate_above(u, lam)
            f = res.function
            agree = float(np.max(np.abs(f.values - u.values)[:, res.good_set], initial=0.0))
            bound = c["C3"] ** p * lam ** (-p) * w1p**p
            row.update(res.audit, agree_max=agree, bad_bound=bound, outside_max=float(np.max(np.abs(f.values[:, ~dom.mask]), initial=0.0)))
            row["pass"] = bool(res.audit["sup_ratio"] <= c["C0"] and agree == 0.0 and row["outside_max"] == 0.0 and res.audit["bad_measure"] <= bound)
        elif family == "below":
            res = truncate_below(u, lam)
            f = res.function
            on_good = float(np.max(np.abs(f.values)[:, res.good_set], initial=0.0))
            row.update(res.audit, good_max=on_good)
            row["pass"] = bool(res.audit["small_part_w1inf"] <= c["C0"] / lam and on_good == 0.0)
        elif family == "outer":
            f = cutoff_outer(u, lam)
            r = dom.radius()
            inner = float(np.max(np.abs(f.values - u.values)[:, r <= lam], initial=0.0))
            outer = float(np.max(np.abs(f.values)[:, r >= lam + 1], initial=0.0))
            row.update(inner_max=inner, outer_max=outer)
            row["pass"] = bool(inner == 0.0 and outer == 0.0)
        else:
            raise ValueError(f"unknown family {family!r}")
        rows.append(row)
    return {"family": family, "p": p, "constants": {k: c[k] for k in ("C0", "C3")}, "rows": rows, "pass": all(r["pass"] for r in rows)}
