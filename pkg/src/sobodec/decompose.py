"""Five-way splitting of a bounded sequence into its defect components.

With index maps ``k2``, ``k1``, ``k3`` and ``k(n) = k2(k1(k3(n)))``, and
writing ``A = phi2_{k1(k3(n))}``, ``B = phi1_{k3(n)}``, ``C = phi3_n``::

    U0 = B A u          U1 = B (I - A) u        U2 = (I - B)(I - A) u
    U3 = C (I - B) A u  U4 = (I - C)(I - B) A u      with u = u_{k(n)}

Indices are realized as rungs of level ladders: ``phi2`` at rung ``m`` is
the Lipschitz truncation at ``above[m]``, ``phi1`` at rung ``m`` is the
outer cutoff at radius ``radii[m]``, and ``phi3`` at rung ``m`` removes the
truncation at the small level ``below[m]``.

The index maps are picked greedily from the uniform-tail condition: at
position ``m`` the smallest unused candidate is taken whose tail
differences ``||(phi_m - phi_j)(v)||_X``, ``j0 <= j < m``, are at most the
tolerance. If none qualifies, the candidate with the smallest worst tail is
taken and the case is marked unreached.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import calibration
from .diagnostics import concentration_modulus, spreading_modulus, tightness_modulus
from .grid import ExponentConfig, GridFunction, magnitude, w1inf_norm, x_norm
from .truncation import cutoff_outer, geometric_ladder, truncate_above

__all__ = ["DecompositionConfig", "Decomposition", "decompose", "verify_properties", "support_vanishing_variant", "save_decomposition", "load_decomposition"]


@dataclass
class DecompositionConfig:
    """Settings for :func:`decompose`.

    Ladders are given either as explicit lists (one rung per position) or as
    ``[first, last]`` pairs expanded geometrically. ``None`` calibrates the
    ladder from the data (see :func:`default_ladders`).

    Attributes:
        q, p, p_star: Exponents; ``p_star`` is required when ``p >= N``.
        above: Levels of the truncation above, increasing.
        radii: Radii of the outer cutoff, increasing.
        below: Small levels of the truncation below, decreasing.
        tol_above, tol_outer, tol_below: Tail tolerances relative to the
            largest X-norm in the input.
        burn_in: Fraction of positions before the tail condition applies.
        threads: Worker threads for per-position work.
        thresholds: Overrides for :class:`PropertyThresholds`.
    """

    q: float = 1.5
    p: float = 2.5
    p_star: float | None = None
    above: list[float] | None = None
    radii: list[float] | None = None
    below: list[float] | None = None
    tol_above: float = 0.5
    tol_outer: float = 0.5
    tol_below: float = 0.5
    burn_in: float = 0.25
    threads: int = 1
    thresholds: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DecompositionConfig:
        names = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in d.items() if k in names})

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class PropertyThresholds:
    """Pass/fail thresholds of :func:`verify_properties`.

    Curves run over decomposition positions; ``tail`` is the last quarter.
    ``floor`` is an absolute allowance of ``floor_cells * h^N``.

    Attributes:
        small: A curve is small when its tail max is at most ``small`` times
            the matching mass of the input (plus the floor).
        decay: A curve tends to zero when its tail max is at most ``decay``
            times its overall max (plus the floor).
        delta_cells: Concentration is probed on sets of ``delta_cells``
            cells.
        spread_fraction: Spreading is probed at density ``spread_fraction``
            times the input mass divided by the domain measure, the density
            of that mass spread evenly.
        radii: Multiples of the horizon radius at which local norms of ``U2``
            are checked.
    """

    small: float = 0.1
    decay: float = 0.25
    floor_cells: float = 10.0
    delta_cells: float = 8.0
    spread_fraction: float = 1.0
    radii: tuple[float, ...] = (1.0, 2.0, 4.0)


def _ladder(spec, K: int, default: np.ndarray) -> np.ndarray:
    if spec is None:
        return default
    spec = [float(t) for t in spec]
    if len(spec) == 2 and K != 2:
        return geometric_ladder(spec[0], spec[1], K)
    if len(spec) < K:
        raise ValueError(f"ladder has {len(spec)} rungs, need {K}")
    return np.asarray(spec[:K])


def default_ladders(seq: Sequence[GridFunction]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ladders calibrated to the dynamic range of the data.

    With ``G`` the smallest positive sup of ``|u_n| + |grad u_n|`` over the
    sequence, levels above run from ``G`` to ``1.2 G``, small levels from
    ``G`` down to ``G / 10`` and radii from a tenth to a fifth of the box
    half-width. Members steeper than ``G`` are the ones the truncation above
    has to cut.
    """
    K = len(seq)
    dom = seq[0].domain
    G = np.array([float(np.max(magnitude(u) + magnitude(u.grad))) for u in seq])
    G = G[G > 0]
    g0 = float(G.min()) if G.size else 1.0
    above = geometric_ladder(g0, 1.2 * g0, K)
    below = geometric_ladder(g0, g0 / 10.0, K)
    half = 0.5 * dom.h * min(dom.shape)
    radii = geometric_ladder(0.1 * half, 0.2 * half, K)
    return above, radii, below


@dataclass
class Decomposition:
    """Index maps, ladders, the five component sequences and tolerances.

    Positions ``n`` are 0-based in the arrays and 1-based in the index maps
    (which select members of the input sequence).
    """

    k1: list[int]
    k2: list[int]
    k3: list[int]
    above: np.ndarray
    radii: np.ndarray
    below: np.ndarray
    components: list[list[GridFunction]]  # components[i][n] = U^i_n
    inputs: list[GridFunction]  # u_{k(n)}
    config: DecompositionConfig
    tolerances: dict[str, Any] = field(default_factory=dict)
    report: dict[str, Any] | None = None

    @property
    def k(self) -> list[int]:
        return [self.k2[self.k1[m - 1] - 1] for m in self.k3]

    @property
    def length(self) -> int:
        return len(self.k3)

    def reconstruction_error(self) -> float:
        """Largest relative cellwise error of ``U0 + ... + U4 - u_{k(n)}``."""
        worst = 0.0
        for n, u in enumerate(self.inputs):
            s = sum((c[n].values for c in self.components[1:]), self.components[0][n].values.copy())
            scale = max(float(np.max(np.abs(u.values))), 1e-300)
            worst = max(worst, float(np.max(np.abs(s - u.values))) / scale)
        return worst

    def manifest(self) -> dict[str, Any]:
        return {
            "k1": self.k1,
            "k2": self.k2,
            "k3": self.k3,
            "k": self.k,
            "above": self.above.tolist(),
            "radii": self.radii.tolist(),
            "below": self.below.tolist(),
            "config": self.config.to_dict(),
            "tolerances": self.tolerances,
            "reconstruction_error": self.reconstruction_error(),
            "report": self.report,
        }


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


class _Memo:
    """Cache of family evaluations keyed by (tag, member, rung)."""

    def __init__(self) -> None:
        self.store: dict[tuple, GridFunction] = {}

    def get(self, key: tuple, make: Callable[[], GridFunction]) -> GridFunction:
        val = self.store.get(key)
        if val is None:
            val = make()
            self.store[key] = val
        return val


def _greedy_tail_select(
    n_cand: int,
    n_pos: int,
    tail: Callable[[int, int, int], float],
    tol: float,
    j0: int,
) -> tuple[list[int], np.ndarray, bool]:
    """Pick candidates (1-based) for positions ``1..`` along the tail rule.

    ``tail(i, j, m)`` is the tail difference for candidate ``i`` placed at
    position ``m`` against rung ``j``. Returns the map, the achieved tail
    sup per start ``j >= j0`` and whether every position met ``tol``.
    """
    chosen: list[int] = []
    worst_at: list[list[float]] = []
    reached = True
    nxt = 1
    for m in range(1, n_pos + 1):
        if nxt > n_cand:
            break
        js = range(j0, m)
        best, best_val, best_row = None, math.inf, None
        for i in range(nxt, n_cand + 1):
            row = [tail(i, j, m) for j in js]
            val = max(row, default=0.0)
            if val <= tol:
                best, best_val, best_row = i, val, row
                break
            if val < best_val:
                best, best_val, best_row = i, val, row
            # remaining candidates must leave room for later positions
            if n_cand - i < 0:
                break
        if best_val > tol:
            reached = False
        chosen.append(best)
        worst_at.append(best_row or [])
        nxt = best + 1
    # eps[j - j0] = sup over positions m > j of the tail at j
    span = max(0, len(chosen) - j0)
    eps = np.zeros(span)
    for m_idx, row in enumerate(worst_at):
        for t, val in enumerate(row):
            eps[t] = max(eps[t], val)
    return chosen, eps, reached


def decompose(seq: Sequence[GridFunction], config: DecompositionConfig | dict | None = None) -> Decomposition:
    """Split ``seq`` into the five components, choosing the index maps."""
    if config is None:
        config = DecompositionConfig()
    elif isinstance(config, dict):
        config = DecompositionConfig.from_dict(config)
    if config.q <= 1:
        raise ValueError("q must exceed 1: for q = p = 1 neither the tail axiom of the small-level truncation nor the decomposition holds (Lipschitz truncation cannot prevent gradient concentration in W^{1,1})")
    K = len(seq)
    if K == 0:
        raise ValueError("empty sequence")
    dom = seq[0].domain
    ExponentConfig(q=config.q, p=config.p, N=dom.N, p_star=config.p_star)
    d_above, d_radii, d_below = default_ladders(seq)
    above = _ladder(config.above, K, d_above)
    radii = _ladder(config.radii, K, d_radii)
    below = _ladder(config.below, K, d_below)
    p, q = config.p, config.q
    xn = lambda f: x_norm(f, p, q)  # noqa: E731
    scale = max(xn(u) for u in seq)
    j0 = max(1, int(math.ceil(config.burn_in * K)))
    memo = _Memo()
    tol_info: dict[str, Any] = {"scale": scale, "burn_in_position": j0}

    def phi2(i: int, rung: int) -> GridFunction:
        return memo.get(("A", i, rung), lambda: truncate_above(seq[i - 1], float(above[rung - 1])).function)

    if scale == 0.0:
        k2 = list(range(1, K + 1))
        k1 = list(range(1, K + 1))
        k3 = list(range(1, K + 1))
        tol_info.update({c: {"eps": [], "reached": True, "tol": 0.0} for c in ("i", "ii_iii", "iv")})
    else:
        # case (i): tail of phi2 on u
        def tail_i(i, j, m):
            return xn(phi2(i, m) - phi2(i, j))

        k2, eps_i, ok_i = _greedy_tail_select(K, K, tail_i, config.tol_above * scale, j0)
        tol_info["i"] = {"eps": eps_i.tolist(), "reached": ok_i, "tol": config.tol_above * scale}

        # cases (ii), (iii): tail of phi1 on phi2 u and on (I - phi2) u
        def split(h: int) -> tuple[GridFunction, GridFunction]:
            a = phi2(k2[h - 1], h)
            return a, seq[k2[h - 1] - 1] - a

        def tail_ii(h, j, m):
            a, b = split(h)
            ra, rj = float(radii[m - 1]), float(radii[j - 1])
            return max(xn(cutoff_outer(a, ra) - cutoff_outer(a, rj)), xn(cutoff_outer(b, ra) - cutoff_outer(b, rj)))

        k1, eps_ii, ok_ii = _greedy_tail_select(len(k2), len(k2), tail_ii, config.tol_outer * scale, j0)
        tol_info["ii_iii"] = {"eps": eps_ii.tolist(), "reached": ok_ii, "tol": config.tol_outer * scale}

        # case (iv): tail of phi3 on (I - phi1_h) phi2 u
        def far(h: int) -> GridFunction:
            def make():
                a, _ = split(k1[h - 1])
                return a - cutoff_outer(a, float(radii[h - 1]))

            return memo.get(("F", h), make)

        def small_part(h: int, rung: int) -> GridFunction:
            return memo.get(("S", h, rung), lambda: truncate_above(far(h), float(below[rung - 1])).function)

        def tail_iv(h, j, m):
            # (phi3_m - phi3_j)(v) = S_j(v) - S_m(v) with S the small-level truncation
            return xn(small_part(h, j) - small_part(h, m))

        k3, eps_iv, ok_iv = _greedy_tail_select(len(k1), len(k1), tail_iv, config.tol_below * scale, j0)
        tol_info["iv"] = {"eps": eps_iv.tolist(), "reached": ok_iv, "tol": config.tol_below * scale}

    def assemble(n: int):
        h3 = k3[n - 1]
        h1 = k1[h3 - 1]
        u = seq[k2[h1 - 1] - 1]
        if scale == 0.0:
            z = GridFunction.zeros(dom, u.M)
            return [z] * 5, u
        a = phi2(k2[h1 - 1], h1)
        b = u - a
        R = float(radii[h3 - 1])
        ba = cutoff_outer(a, R)
        bb = cutoff_outer(b, R)
        fa = a - ba
        small = memo.get(("S", h3, n), lambda: truncate_above(fa, float(below[n - 1])).function)
        U0, U1, U2 = ba, bb, b - bb
        U3 = fa - small
        U4 = small
        return [U0, U1, U2, U3, U4], u

    parts = _pmap(assemble, list(range(1, len(k3) + 1)), config.threads)
    comps = [[pt[0][i] for pt in parts] for i in range(5)]
    inputs = [pt[1] for pt in parts]
    return Decomposition(k1, k2, k3, above, radii, below, comps, inputs, config, tol_info)


def _tail(curve: np.ndarray) -> float:
    """Max over the last quarter of the curve."""
    n = len(curve)
    return float(np.max(curve[n - max(1, n // 4) :])) if n else 0.0


def verify_properties(dec: Decomposition, thresholds: PropertyThresholds | dict | None = None) -> dict[str, Any]:
    """Desk-scale checks of the component properties (a) to (e).

    Every check records its curve over positions and a verdict; see
    :class:`PropertyThresholds` for the rules. The horizon radius is the
    outer radius at the end of the burn-in plus one; tightness is measured
    outside it and local norms inside it.
    """
    if isinstance(thresholds, PropertyThresholds):
        th = thresholds
    else:
        th = PropertyThresholds(**{**dec.config.thresholds, **(thresholds or {})})
    cfg = dec.config
    p, q = cfg.p, cfg.q
    if not dec.inputs:
        return {"pass": True, "groups": {}, "checks": {}}
    dom = dec.inputs[0].domain
    N = dom.N
    p_star = cfg.p_star if cfg.p_star is not None else p * N / (N - p)
    vol = dom.cell_volume
    floor = th.floor_cells * vol
    delta = th.delta_cells * vol
    U = dec.components
    ins = dec.inputs
    j0 = dec.tolerances.get("burn_in_position", 1)
    R_t = float(dec.radii[min(j0, len(dec.radii)) - 1]) + 1.0
    rad = dom.radius()

    def mass(r, a):
        return max(float(np.sum(magnitude(u if a == 0 else u.grad) ** r)) * vol for u in ins)

    checks: dict[str, Any] = {}

    def record(name, rule, curve, bound):
        tail = _tail(curve)
        ok = bool(tail <= bound)
        checks[name] = {"rule": rule, "curve": curve.tolist(), "tail": tail, "bound": bound, "pass": ok}
        return ok

    def small(name, curve, ref):
        return record(name, "small", curve, th.small * ref + floor)

    def decays(name, curve):
        return record(name, "decay", curve, th.decay * float(np.max(curve)) + floor)

    def support(seq):
        return np.array([np.count_nonzero(np.any(u.values != 0, axis=0) & dom.mask) * vol for u in seq])

    groups: dict[str, bool] = {}
    sobolev = ((p, 1, "W1p_grad"), (p, 0, "W1p_val"), (q, 1, "W1q_grad"), (q, 0, "W1q_val"), (p_star, 0, "Lpstar"))
    # (a) no concentration, tight
    ok = True
    for r, a, tag in sobolev:
        ok &= small(f"a_concentration_{tag}", concentration_modulus(U[0], r, a, delta), mass(r, a))
        ok &= small(f"a_tightness_{tag}", tightness_modulus(U[0], r, a, R_t), mass(r, a))
    groups["a"] = bool(ok)
    # (b) tight, support shrinking
    ok = True
    for r, a, tag in sobolev:
        ok &= small(f"b_tightness_{tag}", tightness_modulus(U[1], r, a, R_t), mass(r, a))
    ok &= decays("b_support", support(U[1]))
    groups["b"] = bool(ok)
    # (c) locally uniformly small, support shrinking
    ok = True
    for f in th.radii:
        R = f * R_t
        ok &= decays(f"c_w1inf_B{R:.4g}", np.array([w1inf_norm(u, region=rad < R) for u in U[2]]))
    ok &= decays("c_support", support(U[2]))
    groups["c"] = bool(ok)
    # (d) no spreading, locally uniformly small, no concentration
    ok = True
    for a, tag in ((1, "grad"), (0, "val")):
        ref = mass(q, a)
        ok &= small(f"d_spreading_W1q_{tag}", spreading_modulus(U[3], q, a, th.spread_fraction * ref / dom.measure), ref)
    ok &= decays(f"d_w1inf_B{R_t:.4g}", np.array([w1inf_norm(u, region=rad < R_t) for u in U[3]]))
    for r, a, tag in ((p, 1, "W1p_grad"), (p, 0, "W1p_val"), (p_star, 0, "Lpstar")):
        ok &= small(f"d_concentration_{tag}", concentration_modulus(U[3], r, a, delta), mass(r, a))
    groups["d"] = bool(ok)
    # (e) uniformly small
    groups["e"] = bool(decays("e_w1inf", np.array([w1inf_norm(u) for u in U[4]])))
    # boundedness with the frozen constant
    sup_in = max(x_norm(u, p, q) for u in ins)
    comp_sup = [max(x_norm(u, p, q) for u in c) for c in U]
    bound = calibration.FROZEN["component_bound"] * sup_in
    groups["bounded"] = bool(all(v <= bound for v in comp_sup))
    checks["bounded"] = {"rule": "bounded", "component_sup": comp_sup, "bound": bound, "pass": groups["bounded"]}
    report = {
        "pass": all(groups.values()),
        "groups": groups,
        "checks": checks,
        "thresholds": asdict(th),
        "horizon_radius": R_t,
        "reconstruction_error": dec.reconstruction_error(),
    }
    dec.report = report
    return report


def support_vanishing_variant(dec: Decomposition, c: int | None = None) -> Decomposition:
    """Move the part of ``U3`` near the origin into ``U4`` after re-indexing.

    Position ``n`` of the variant reads position ``n^(N+1)`` of ``dec``; when
    that runs past the available positions, ``c * n`` is used instead (``c``
    defaults to 2). The transferred term is
    ``phi1_{r_n}(U3)`` with ``r_n`` the ``n``-th outer radius.
    """
    L = dec.length
    N = dec.inputs[0].domain.N if dec.inputs else 1
    count = int(math.floor(L ** (1.0 / (N + 1))))
    if count >= 2:
        idx = [m ** (N + 1) for m in range(1, count + 1)]
        law = f"n^{N + 1}"
    else:
        c = c or 2
        count = L // c
        idx = [c * m for m in range(1, count + 1)]
        law = f"{c}*n"
    comps: list[list[GridFunction]] = [[] for _ in range(5)]
    moved_norms = []
    cfg = dec.config
    for m, src in enumerate(idx, start=1):
        u3 = dec.components[3][src - 1]
        moved = cutoff_outer(u3, float(dec.radii[m - 1]))
        for i in (0, 1, 2):
            comps[i].append(dec.components[i][src - 1])
        comps[3].append(u3 - moved)
        comps[4].append(dec.components[4][src - 1] + moved)
        moved_norms.append({"w1inf": w1inf_norm(moved), "W1p": x_norm(moved, cfg.p, cfg.p) / 2, "W1q": x_norm(moved, cfg.q, cfg.q) / 2})
    tol = dict(dec.tolerances)
    tol["variant"] = {"law": law, "source_positions": idx, "moved_norms": moved_norms}
    k3 = [dec.k3[s - 1] for s in idx]
    new = Decomposition(dec.k1, dec.k2, k3, dec.above, dec.radii, dec.below, comps, [dec.inputs[s - 1] for s in idx], cfg, tol)
    return new


def save_decomposition(dec: Decomposition, out: str | Path) -> Path:
    """Write SGF1 files per component and position plus ``manifest.json``."""
    from .io import write_json, write_sgf1

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, seq in enumerate(dec.components):
        for n, u in enumerate(seq, start=1):
            write_sgf1(out / f"U{i}_{n:03d}.sgf", u)
    for n, u in enumerate(dec.inputs, start=1):
        write_sgf1(out / f"input_{n:03d}.sgf", u)
    write_json(out / "manifest.json", dec.manifest())
    return out


def load_decomposition(path: str | Path) -> Decomposition:
    from .io import read_json, read_sgf1

    path = Path(path)
    man = read_json(path / "manifest.json")
    L = len(man["k3"])
    first = read_sgf1(path / "input_001.sgf")
    dom = first.domain
    comps = [[read_sgf1(path / f"U{i}_{n:03d}.sgf", domain=dom) for n in range(1, L + 1)] for i in range(5)]
    inputs = [read_sgf1(path / f"input_{n:03d}.sgf", domain=dom) for n in range(1, L + 1)]
    cfg = DecompositionConfig.from_dict(man["config"])
    return Decomposition(
        man["k1"], man["k2"], man["k3"], np.asarray(man["above"]), np.asarray(man["radii"]), np.asarray(man["below"]),
        comps, inputs, cfg, man["tolerances"], man.get("report"),
    )
