"""Defect moduli, the Poincare bound, and finite subsequence-selection schemes.

Every modulus takes a finite sequence of grid functions and returns one value
per member. ``alpha`` selects the function (0) or its gradient (1). Masses
are sums of ``|D^alpha u|^r h^N`` over cells of the index box.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .grid import GridFunction, lp_norm, magnitude
from .maximal import ball_sums, ball_volume

__all__ = [
    "ModulusCurve",
    "density",
    "concentration_modulus",
    "concentration_value",
    "tightness_modulus",
    "spreading_modulus",
    "vanishing_modulus",
    "modulus_curve",
    "poincare_constant",
    "poincare_check",
    "vanishing_convergence_check",
    "SubsequenceSelection",
    "diagonal_select",
    "select_nonconcentrating",
    "select_tight",
    "select_nonspreading",
    "default_level_ladder",
]


def density(u: GridFunction, r: float, alpha: int = 0) -> np.ndarray:
    """Cellwise ``|D^alpha u|^r h^N`` over the index box."""
    f = u if alpha == 0 else u.grad
    return magnitude(f) ** r * u.domain.cell_volume


def concentration_value(a: np.ndarray, cell: float, delta: float) -> float:
    """Largest mass of ``a`` on a set of measure ``delta``.

    ``a`` holds per-cell masses; whole cells are taken greedily in
    decreasing order and the next cell contributes its mass times the
    leftover fraction. Sums are exactly rounded.
    """
    if delta <= 0:
        return 0.0
    flat = np.sort(np.ravel(a))[::-1]
    k = int(math.floor(delta / cell * (1 + 1e-12)))
    if k >= flat.size:
        return math.fsum(flat)
    frac = delta / cell - k
    frac = min(max(frac, 0.0), 1.0)
    return math.fsum(list(flat[:k]) + [frac * flat[k]])


def concentration_modulus(seq: Sequence[GridFunction], r: float, alpha: int, delta: float) -> np.ndarray:
    return np.array([concentration_value(density(u, r, alpha), u.domain.cell_volume, delta) for u in seq])


def tightness_modulus(seq: Sequence[GridFunction], r: float, alpha: int, R: float) -> np.ndarray:
    out = []
    for u in seq:
        far = u.domain.radius() >= R
        out.append(float(np.sum(density(u, r, alpha)[far])))
    return np.array(out)


def spreading_modulus(seq: Sequence[GridFunction], r: float, alpha: int, delta: float) -> np.ndarray:
    out = []
    for u in seq:
        vol = u.domain.cell_volume
        out.append(float(np.sum(np.minimum(delta, density(u, r, alpha) / vol)) * vol))
    return np.array(out)


def vanishing_modulus(seq: Sequence[GridFunction], r: float, alpha: int, radius: float = 1.0) -> np.ndarray:
    """Largest mass in a closed ball of the given radius centred at a cell center."""
    return np.array([float(ball_sums(density(u, r, alpha), radius, u.domain.h).max()) for u in seq])


_MODULI = {
    "concentration": concentration_modulus,
    "tightness": tightness_modulus,
    "spreading": spreading_modulus,
}


@dataclass
class ModulusCurve:
    """Per-(n, parameter) modulus values.

    ``values[i, k]`` belongs to sequence member ``i`` and ``params[k]``.
    For the vanishing modulus the parameter is the window radius.
    """

    kind: str
    params: np.ndarray
    values: np.ndarray
    r: float
    alpha: int

    def sup(self) -> np.ndarray:
        """Sup over the sequence, per parameter."""
        return self.values.max(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "parameter", "value"])
        for i in range(self.values.shape[0]):
            for k, t in enumerate(self.params):
                w.writerow([i + 1, repr(float(t)), repr(float(self.values[i, k]))])
        return buf.getvalue()


def modulus_curve(kind: str, seq: Sequence[GridFunction], r: float, alpha: int, params: Sequence[float]) -> ModulusCurve:
    params = np.asarray(params, dtype=float)
    if kind == "vanishing":
        cols = [vanishing_modulus(seq, r, alpha, t) for t in params]
    else:
        fn = _MODULI[kind]
        cols = [fn(seq, r, alpha, t) for t in params]
    return ModulusCurve(kind, params, np.stack(cols, axis=1), r, alpha)


def poincare_constant(N: int = 1, r: float = 2.0, cells: int = 4000) -> float:
    """Optimal constant ``S`` with ``||v||_r <= S^-1 ||grad v||_r`` on the unit ball.

    For ``N = 1`` and ``r = 2`` this is the square root of the first
    Dirichlet eigenvalue of ``(-1, 1)``, obtained from a tridiagonal
    eigensolve (second-order accurate in ``1/cells``). For ``N = 2, 3``
    and ``r = 2`` the closed forms are the first zeros of ``J_0`` and of
    the spherical Bessel function ``j_0``.
    """
    if r != 2:
        raise ValueError("only r = 2 is available; pass S explicitly")
    if N == 1:
        h = 2.0 / cells
        m = cells - 1
        w = eigh_tridiagonal(np.full(m, 2.0 / h**2), np.full(m - 1, -1.0 / h**2), select="i", select_range=(0, 0), eigvals_only=True)
        return float(math.sqrt(w[0]))
    if N == 2:
        from scipy.special import jn_zeros

        return float(jn_zeros(0, 1)[0])
    if N == 3:
        return math.pi
    raise ValueError("unsupported dimension")


def poincare_check(v: GridFunction, r: float = 2.0, S: float | None = None) -> tuple[float, float]:
    """``(||v||_r, S^-1 |B_1|^(-1/N) |{v != 0}|^(1/N) ||grad v||_r)``."""
    N = v.domain.N
    if S is None:
        S = poincare_constant(N, r)
    supp = float(np.count_nonzero(magnitude(v) != 0)) * v.domain.cell_volume
    rhs = (1.0 / S) * ball_volume(N, 1.0) ** (-1.0 / N) * supp ** (1.0 / N) * lp_norm(v.grad, r)
    return lp_norm(v, r), rhs


def vanishing_convergence_check(
    seq: Sequence[GridFunction],
    r: float = 2.0,
    *,
    small: float = 0.1,
    bound_factor: float = 4.0,
    tail: float = 0.25,
) -> dict:
    """Check the vanishing plus non-spreading implication on finite data.

    Per member: local mass (vanishing modulus), the proof's level
    ``delta_n = (local mass)^(1/(r+1))``, the spreading modulus at that
    level, the ``L^r`` norm and the ``W^{1,r}`` gradient norm. Over the last
    ``tail`` fraction of the sequence a quantity counts as small when it is
    at most ``small`` times the largest ``L^r`` mass. The gradient norm
    counts as bounded when its sup stays within ``bound_factor`` times its
    first value.
    """
    K = len(seq)
    mass = np.array([lp_norm(u, r) ** r for u in seq])
    norms = mass ** (1.0 / r)
    grads = np.array([lp_norm(u.grad, r) for u in seq])
    local = vanishing_modulus(seq, r, 0)
    delta_n = local ** (1.0 / (r + 1.0))
    spread = np.array([spreading_modulus([u], r, 0, d)[0] for u, d in zip(seq, delta_n)])
    start = min(K - 1, int(math.floor((1.0 - tail) * K)))
    scale = float(mass.max()) if K else 0.0
    tail_max = lambda a: float(np.max(a[start:])) if K else 0.0  # noqa: E731
    if scale == 0.0:
        vanishing = non_spreading = norm_small = bounded = True
    else:
        vanishing = tail_max(local) <= small * scale
        non_spreading = tail_max(spread) <= small * scale
        norm_small = tail_max(mass) <= small * scale
        bounded = bool(grads.max() <= bound_factor * max(grads[0], 1e-300))
    violated = []
    if not vanishing:
        violated.append("vanishing")
    if not non_spreading:
        violated.append("non_spreading")
    if not bounded:
        violated.append("bounded_in_W1r")
    return {
        "r": r,
        "norm": norms.tolist(),
        "grad_norm": grads.tolist(),
        "local_mass": local.tolist(),
        "delta_n": delta_n.tolist(),
        "spreading_at_delta_n": spread.tolist(),
        "vanishing": bool(vanishing),
        "non_spreading": bool(non_spreading),
        "bounded_in_W1r": bool(bounded),
        "norm_to_zero": bool(norm_small),
        "hypotheses_hold": bool(vanishing and non_spreading and bounded),
        "implication_holds": bool(norm_small or not (vanishing and non_spreading and bounded)),
        "violated_hypotheses": violated,
    }


@dataclass
class SubsequenceSelection:
    """Strictly increasing 1-based index map with its achieved tolerances.

    ``eps[j]`` is the variation of the selection functionals over the tail
    starting at position ``j + 1``; ``achieved`` is the smallest tail start
    (1-based) whose variation is below ``tol``, or ``None``.
    """

    K: int
    indices: list[int]
    eps: np.ndarray
    tol: float
    achieved: int | None
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("selection must be strictly increasing")
        if self.indices and (self.indices[0] < 1 or self.indices[-1] > self.K):
            raise ValueError("selection out of range")

    @property
    def reached(self) -> bool:
        return self.achieved is not None

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "indices": list(self.indices),
            "eps": self.eps.tolist(),
            "tol": self.tol,
            "achieved": self.achieved,
            "info": self.info,
        }


def _tail_variation(S: np.ndarray) -> np.ndarray:
    """``max_levels (max - min)`` of the columns from position j onwards."""
    K = S.shape[1]
    hi = np.maximum.accumulate(S[:, ::-1], axis=1)[:, ::-1]
    lo = np.minimum.accumulate(S[:, ::-1], axis=1)[:, ::-1]
    return (hi - lo).max(axis=0) if K else np.zeros(0)


def diagonal_select(S: np.ndarray, tol: float) -> SubsequenceSelection:
    """Finite diagonal scheme on the functionals ``S[level, member]``.

    The last member is kept; scanning backwards, a member is kept when its
    functionals differ from those of the most recently kept member by at most
    ``tol`` at every level. Slowly converging sequences therefore survive
    unchanged, while a sequence with several accumulation branches is thinned
    to the branch of its last member.
    """
    S = np.asarray(S, dtype=float)
    K = S.shape[1]
    keep = [K - 1]
    for j in range(K - 2, -1, -1):
        if np.max(np.abs(S[:, j] - S[:, keep[-1]])) <= tol:
            keep.append(j)
    keep.reverse()
    eps = _tail_variation(S[:, keep])
    ok = np.flatnonzero(eps < tol)
    achieved = int(ok[0]) + 1 if ok.size else None
    return SubsequenceSelection(K, [k + 1 for k in keep], eps, tol, achieved)


def default_level_ladder(seq: Sequence[GridFunction], count: int | None = None) -> np.ndarray:
    """Geometric levels from half the smallest sup to the geometric mean of the
    smallest and the largest sup, so levels grow slower than the data."""
    sups = np.array([magnitude(u).max() for u in seq])
    sups = sups[sups > 0]
    count = count or len(seq)
    if sups.size == 0:
        return np.ones(count)
    lo = 0.5 * sups.min()
    hi = max(math.sqrt(sups.min() * sups.max()), lo * (1 + 1e-9))
    return lo * (hi / lo) ** (np.arange(count) / max(count - 1, 1))


def select_nonconcentrating(
    seq: Sequence[GridFunction],
    r: float,
    tol: float,
    levels: Sequence[float] | None = None,
    delta_tol: float | None = None,
) -> SubsequenceSelection:
    """Selection along which the clamped masses ``||eta_level(v)||_r^r`` settle.

    ``S[i, j]`` is the mass of member ``j`` clamped at ``levels[i]``. After
    the diagonal scheme, the clamped members ``eta_{level(n)}(v_{k(n)})`` are
    checked for concentration at ``delta0 = tol / (2 level(n0)^r)``, with
    ``n0`` the first tail position reaching ``tol``. ``delta_tol`` is the
    target for that concentration (default ``tol``).
    """
    levels = default_level_ladder(seq) if levels is None else np.asarray(levels, float)
    mags = [magnitude(u) for u in seq]
    vol = seq[0].domain.cell_volume
    S = np.array([[float(np.sum(np.minimum(m, lev) ** r) * vol) for m in mags] for lev in levels])
    sel = diagonal_select(S, tol)
    n0 = sel.achieved or len(sel.indices)
    lev0 = levels[min(n0, len(levels)) - 1]
    delta0 = tol / (2.0 * lev0**r)
    conc = []
    for pos, k in enumerate(sel.indices):
        lev = levels[min(pos, len(levels) - 1)]
        a = np.minimum(mags[k - 1], lev) ** r * vol
        conc.append(concentration_value(a, vol, delta0))
    conc = np.array(conc)
    target = tol if delta_tol is None else delta_tol
    sel.info = {
        "levels": levels.tolist(),
        "delta0": delta0,
        "truncated_concentration": conc.tolist(),
        "post_bound_ok": bool(np.all(conc[n0 - 1 :] <= target)) if conc.size else True,
    }
    return sel


def select_tight(
    seq: Sequence[GridFunction],
    r: float,
    tol: float,
    radii: Sequence[float] | None = None,
) -> SubsequenceSelection:
    """Selection along which the localized masses ``||chi_R v||_r^r`` settle.

    After selection, ``chi_{R(n)} v_{k(n)}`` is checked for tightness: its
    mass outside ``B_{1/delta}`` with ``1/delta`` the radius at the first
    tail position reaching ``tol``.
    """
    dom = seq[0].domain
    if radii is None:
        top = 0.5 * dom.box_diameter
        radii = np.geomspace(max(dom.h, top / 64), top, len(seq))
    radii = np.asarray(radii, float)
    rad = dom.radius()
    dens = [density(u, r) for u in seq]
    S = np.array([[float(np.sum(d[rad < R])) for d in dens] for R in radii])
    sel = diagonal_select(S, tol)
    n0 = sel.achieved or len(sel.indices)
    R0 = radii[min(n0, len(radii)) - 1]
    outside = []
    for pos, k in enumerate(sel.indices):
        R = radii[min(pos, len(radii) - 1)]
        d = dens[k - 1]
        outside.append(float(np.sum(d[(rad < R) & (rad >= R0)])))
    outside = np.array(outside)
    sel.info = {
        "radii": radii.tolist(),
        "horizon": float(R0),
        "truncated_outside_mass": outside.tolist(),
        "post_bound_ok": bool(np.all(outside[n0 - 1 :] <= tol)) if outside.size else True,
    }
    return sel


def _distribution(a: np.ndarray, cell: float) -> tuple[np.ndarray, np.ndarray]:
    """Jump points and cumulative measure of ``t -> |{a >= t}|`` (a step function)."""
    vals = np.sort(a[a > 0])[::-1]
    return vals, cell * np.arange(1, vals.size + 1)


def _capped_layer_integral(vals: np.ndarray, meas: np.ndarray, cap: float, top: float) -> float:
    """``int_0^top min(cap, g(t)) dt`` for the step function ``g``.

    ``g(t) = meas[i]`` on ``(vals[i+1], vals[i]]`` and 0 above ``vals[0]``.
    """
    if vals.size == 0 or top <= 0:
        return 0.0
    edges = np.concatenate([vals, [0.0]])
    width = np.clip(np.minimum(edges[:-1], top) - edges[1:], 0.0, None)
    return math.fsum(width * np.minimum(cap, meas))


def select_nonspreading(
    seq: Sequence[GridFunction],
    r: float,
    tol: float,
    measures: Sequence[float] | None = None,
    deltas: Sequence[float] | None = None,
) -> SubsequenceSelection:
    """Selection along which the capped layer integrals settle.

    With ``g_m(t) = |{|v_m|^r >= t}|`` (exact, by sorting) the functionals
    are ``S[i, m] = int_0^inf min(measures[i], g_m(t)) dt``, i.e. the best
    mass of ``|v_m|^r`` on sets of measure ``measures[i]``. After selection
    the bound
    ``sup_{|E| <= kappa(n)} int_E min(delta, |v|^r) <= int_0^delta min(kappa(n), g(t)) dt``
    is evaluated on a delta ladder; it holds with equality for the discrete
    measure, which the info records.
    """
    dom = seq[0].domain
    cell = dom.cell_volume
    if measures is None:
        measures = np.geomspace(cell, max(cell, float(dom.mask.sum()) * cell), len(seq))
    measures = np.asarray(measures, float)
    dists = [_distribution(magnitude(u) ** r, cell) for u in seq]
    S = np.array([[_capped_layer_integral(v, m, kap, math.inf) for v, m in dists] for kap in measures])
    sel = diagonal_select(S, tol)
    sup_all = max((float(v[0]) for v, _ in dists if v.size), default=1.0)
    deltas = np.geomspace(sup_all * 1e-4, sup_all, 8) if deltas is None else np.asarray(deltas, float)
    lhs, rhs = [], []
    for pos, k in enumerate(sel.indices):
        kap = measures[min(pos, len(measures) - 1)]
        a = np.ravel(magnitude(seq[k - 1]) ** r)
        row_l, row_r = [], []
        for d in deltas:
            row_l.append(concentration_value(np.minimum(d, a) * cell, cell, kap))
            row_r.append(_capped_layer_integral(*dists[k - 1], kap, d))
        lhs.append(row_l)
        rhs.append(row_r)
    lhs, rhs = np.array(lhs), np.array(rhs)
    sel.info = {
        "measures": measures.tolist(),
        "deltas": deltas.tolist(),
        "capped_mass": lhs.tolist(),
        "layer_bound": rhs.tolist(),
        "post_bound_ok": bool(np.all(lhs <= rhs * (1 + 1e-12) + 1e-300)),
    }
    return sel
