"""Sequence generators for the defect corpora.

Each generator returns ``K`` grid functions ``u_1 .. u_K`` on one domain.
Scale parameters run along ladders (``scale_n``, ``y_n``, ``rho_n``) whose
end points are configurable so that every member is resolved by the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .grid import ExponentConfig, GridDomain, GridFunction, build_domain, x_norm
from .truncation import nu

__all__ = ["CorpusSpec", "bump", "generate", "random_function", "random_corpus", "ladder", "GENERATORS"]


def bump(t):
    """C^2 profile ``(1 - t^2)^3`` on ``|t| < 1``, zero outside."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) < 1.0, (1.0 - t * t) ** 3, 0.0)


def _bump_nd(x: np.ndarray, center, width: float) -> np.ndarray:
    c = np.asarray(center, float).reshape((-1,) + (1,) * (x.ndim - 1))
    return bump(np.sqrt(np.sum((x - c) ** 2, axis=0)) / width)


def ladder(lo: float, hi: float, K: int, law: str = "geometric") -> np.ndarray:
    """Values ``s_1 .. s_K`` from ``lo`` to ``hi``; ``index`` gives ``1..K``."""
    if law == "index":
        return np.arange(1, K + 1, dtype=float)
    if K == 1:
        return np.array([float(lo)])
    t = np.arange(K) / (K - 1)
    if law == "linear":
        return lo + (hi - lo) * t
    if law == "geometric":
        return lo * (hi / lo) ** t
    raise ValueError(f"unknown ladder law {law!r}")


@dataclass
class CorpusSpec:
    """What to generate.

    Attributes:
        generator: Generator tag (see ``GENERATORS``).
        K: Number of members.
        domain: Domain description for :func:`sobodec.grid.build_domain`.
        params: Generator parameters.
        seed: Seed for randomized generators.
        exponents: ``{"q", "p", "N", "p_star"}``; used for default
            exponents and for the boundedness check.
    """

    generator: str
    K: int = 32
    domain: dict[str, Any] = field(default_factory=lambda: {"kind": "box", "lower": [-8.0], "upper": [8.0], "h": 1 / 64})
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    exponents: dict[str, Any] | None = None

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CorpusSpec:
        return cls(**{k: d[k] for k in ("generator", "K", "domain", "params", "seed", "exponents") if k in d})

    def to_dict(self) -> dict[str, Any]:
        return {"generator": self.generator, "K": self.K, "domain": self.domain, "params": self.params, "seed": self.seed, "exponents": self.exponents}

    def exponent_config(self) -> ExponentConfig | None:
        if not self.exponents:
            return None
        e = self.exponents
        return ExponentConfig(q=e["q"], p=e["p"], N=e.get("N", len(self.domain.get("lower", [0]))), p_star=e.get("p_star"))


def _sample(dom: GridDomain, f: Callable[[np.ndarray], np.ndarray], label: str) -> GridFunction:
    vals = np.asarray(f(dom.centers()), dtype=float)
    if vals.shape == dom.shape:
        vals = vals[None]
    leak = np.any(vals != 0, axis=0) & ~dom.mask
    if leak.any():
        need = float(dom.radius()[leak].max()) + 2 * dom.h
        raise ValueError(f"{label}: support escapes the domain; a box of half-width at least {need:.4g} is needed")
    return GridFunction(dom, vals)


def _axis0(N: int) -> np.ndarray:
    e = np.zeros(N)
    e[0] = 1.0
    return e


def _gen_zero(dom, K, prm, rng, exps):
    return [GridFunction.zeros(dom, prm.get("M", 1)) for _ in range(K)]


def _gen_constant(dom, K, prm, rng, exps):
    width = prm.get("width", 1.0)
    amp = prm.get("amplitude", 1.0)
    u = _sample(dom, lambda x: amp * _bump_nd(x, np.zeros(dom.N), width), "constant")
    return [u] * K


def _gen_bubble(dom, K, prm, rng, exps):
    p = prm.get("p", exps.p if exps else 2.0)
    N = dom.N
    s = ladder(prm.get("scale_min", 1.0), prm.get("scale_max", float(K)), K, prm.get("scale_law", "index"))
    width = prm.get("width", 1.0)
    amp = prm.get("amplitude", 1.0)
    center = np.asarray(prm.get("center", np.zeros(N)), float)
    out = []
    for sn in s:
        c = sn ** ((N - p) / p) * amp
        out.append(_sample(dom, lambda x, sn=sn, c=c: c * _bump_nd(sn * (x - center.reshape((-1,) + (1,) * N)), np.zeros(N), width), "bubble"))
    return out


def _positions(dom, K, prm, width):
    y_max = prm.get("y_max")
    if y_max is None:
        top = dom.origin[0] + dom.shape[0] * dom.h
        y_max = top - dom.h - width - dom.h
    y = ladder(prm.get("y_min", 0.0), y_max, K, prm.get("travel_law", "linear"))
    return y


def _gen_traveling(dom, K, prm, rng, exps):
    width = prm.get("width", 1.0)
    amp = prm.get("amplitude", 1.0)
    decay = prm.get("decay", 0.0)
    e = _axis0(dom.N)
    out = []
    for n, y in enumerate(_positions(dom, K, prm, width), start=1):
        c = amp * n ** (-decay)
        out.append(_sample(dom, lambda x, y=y, c=c: c * _bump_nd(x, y * e, width), "traveling-bump"))
    return out


def _gen_vanisher(dom, K, prm, rng, exps):
    prm = dict(prm)
    prm.setdefault("decay", 0.5)
    return _gen_traveling(dom, K, prm, rng, exps)


def _gen_spreader_ball(dom, K, prm, rng, exps):
    r = prm.get("r", exps.q if exps else 2.0)
    N = dom.N
    rho = ladder(prm.get("rho_min", 1.0), prm.get("rho_max", float(K)), K, prm.get("rho_law", "linear"))
    edge = prm.get("edge", 1.0)
    amp = prm.get("amplitude", 1.0)
    out = []
    for rn in rho:
        a = amp * rn ** (-N / r)
        out.append(_sample(dom, lambda x, rn=rn, a=a: a * nu((np.sqrt(np.sum(x * x, axis=0)) - rn) / edge), "spreader-ball"))
    return out


def _gen_spreader_slab(dom, K, prm, rng, exps):
    """Smoothed slab ``|x_1| <= rho_n``, ``|x_j| <= w_n`` (j > 1).

    ``amplitude="normalized"`` (default) scales the slab to constant
    ``L^r`` mass; a number gives a fixed height.
    """
    r = prm.get("r", exps.q if exps else 2.0)
    N = dom.N
    rho = ladder(prm.get("rho_min", 1.0), prm.get("rho_max", float(K)), K, prm.get("rho_law", "linear"))
    if "width_law" in prm and prm["width_law"] == "inverse":
        w = 1.0 / np.arange(1, K + 1)
    else:
        w = np.full(K, float(prm.get("width", 1.0)))
    edge_frac = prm.get("edge_fraction", 0.5)
    amp = prm.get("amplitude", "normalized")
    out = []
    for rn, wn in zip(rho, w):
        def f(x, rn=rn, wn=wn):
            prof = nu((np.abs(x[0]) - rn) / (edge_frac * max(wn, 1.0) if N == 1 else edge_frac))
            for j in range(1, N):
                prof = prof * nu((np.abs(x[j]) - wn) / (edge_frac * wn))
            return prof

        g = _sample(dom, f, "spreader-slab")
        if amp == "normalized":
            mass = float(np.sum(np.abs(g.values) ** r) * dom.cell_volume)
            g = g * (mass ** (-1.0 / r))
        else:
            g = g * float(amp)
        out.append(g)
    return out


def _gen_w11(dom, K, prm, rng, exps):
    ns = prm.get("n_values") or list(range(2, K + 2))
    out = []
    for n in ns[:K]:
        def f(x, n=n):
            t = x[0]
            inner = (n - 1) * t
            left = -t - 1
            right = -t + 1
            v = np.where(t < -1.0 / n, left, np.where(t > 1.0 / n, right, inner))
            return np.where(np.abs(t) < 1.0, v, 0.0)

        out.append(_sample(dom, f, "w11-counterexample"))
    return out


def random_function(dom: GridDomain, rng: np.random.Generator, M: int = 1, bumps: int = 4, steep: bool = True) -> GridFunction:
    """Sum of random bumps (some narrow and tall), damped near the boundary."""
    x = dom.centers()
    dist = dom.distance()
    lo = dom.origin + dom.h
    hi = dom.origin + (np.asarray(dom.shape) - 1) * dom.h
    span = float(np.min(hi - lo))
    vals = np.zeros((M,) + dom.shape)
    for m in range(M):
        for _ in range(bumps):
            c = rng.uniform(lo, hi)
            w = rng.uniform(0.08, 0.35) * span
            a = rng.normal() * rng.uniform(0.5, 2.0)
            vals[m] += a * _bump_nd(x, c, w)
        if steep and rng.random() < 0.7:
            c = rng.uniform(lo, hi)
            w = rng.uniform(3, 6) * dom.h
            vals[m] += rng.choice([-1, 1]) * rng.uniform(1.0, 4.0) * _bump_nd(x, c, w)
    damp = np.clip(dist / (3 * dom.h), 0.0, 1.0)
    return GridFunction(dom, vals * damp)


def _gen_random(dom, K, prm, rng, exps):
    M = prm.get("M", 1)
    return [random_function(dom, rng, M, prm.get("bumps", 4), prm.get("steep", True)) for _ in range(K)]


def _gen_composite(dom, K, prm, rng, exps):
    """Sum of several generators, given as ``parts: [{generator, params}]``."""
    seqs = [GENERATORS[p["generator"]](dom, K, p.get("params", {}), rng, exps) for p in prm["parts"]]
    out = []
    for members in zip(*seqs):
        acc = members[0]
        for g in members[1:]:
            acc = acc + g
        out.append(acc)
    return out


def _gen_file(dom, K, prm, rng, exps):
    from .io import read_sgf1

    files = prm["files"][:K]
    return [read_sgf1(f, domain=dom) for f in files]


GENERATORS: dict[str, Callable] = {
    "zero": _gen_zero,
    "constant": _gen_constant,
    "bubble": _gen_bubble,
    "traveling-bump": _gen_traveling,
    "vanisher": _gen_vanisher,
    "spreader-ball": _gen_spreader_ball,
    "spreader-slab": _gen_spreader_slab,
    "w11-counterexample": _gen_w11,
    "random": _gen_random,
    "composite": _gen_composite,
    "file": _gen_file,
}


def generate(spec: CorpusSpec, domain: GridDomain | None = None, check_bounded: float | None = 50.0) -> list[GridFunction]:
    """Generate the sequence; optionally check the X-norms stay within a factor."""
    if spec.generator not in GENERATORS:
        raise ValueError(f"unknown generator {spec.generator!r}")
    dom = domain or build_domain(spec.domain)
    exps = spec.exponent_config()
    rng = np.random.default_rng(spec.seed)
    seq = GENERATORS[spec.generator](dom, spec.K, spec.params, rng, exps)
    if check_bounded and exps is not None and spec.generator not in ("w11-counterexample", "random"):
        norms = np.array([x_norm(u, exps.p, exps.q) for u in seq])
        ref = norms[0] if norms[0] > 0 else norms.max()
        if ref > 0 and norms.max() > check_bounded * ref and not spec.params.get("allow_unbounded", False):
            raise ValueError(f"{spec.generator}: X-norm grows by a factor {norms.max() / ref:.3g} along the sequence")
    return seq



def random_corpus(seed: int, count: int = 50) -> list[GridFunction]:
    """Mixed corpus of random functions with ``N, M`` in ``{1, 2}``.

    1-D members live on ``[-1, 1]`` with ``h = 1/64``, 2-D members on
    ``[-1, 1]^2`` with ``h = 1/16``; the shape cycles through the four
    ``(N, M)`` combinations.
    """
    from .grid import box_domain

    rng = np.random.default_rng(seed)
    doms = {1: box_domain([-1.0], [1.0], 1 / 64), 2: box_domain([-1.0, -1.0], [1.0, 1.0], 1 / 16)}
    combos = [(1, 1), (1, 2), (2, 1), (2, 2)]
    out = []
    for i in range(count):
        N, M = combos[i % 4]
        out.append(random_function(doms[N], rng, M, bumps=int(rng.integers(1, 6))))
    return out
