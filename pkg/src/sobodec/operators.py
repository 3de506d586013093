"""Quasilinear operator, energy and their orthogonality residuals on the grid.

The operator is ``F(u)[phi] = sum Q(x,u,grad u) : grad phi + (g1 + g2)(x,u,grad u) . phi``
over all cells of the box (times ``h^N``); the energy is ``E(u) = sum W(x,u,grad u)``.
Fields are evaluated on the whole box so the forward-difference gradient
of the zero extension is included.

Functional norms are never computed exactly. Instead a pair is reported:
``lower`` is the largest pairing with a bank of normalized test functions,
``upper`` is the Hoelder bound by sum-space norms of the integrand fields.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .grid import ExponentConfig, GridDomain, GridFunction, lp_norm, sum_space_norm, x_norm
from .truncation import cutoff_outer, eta, nu, truncate_above, truncate_below

__all__ = [
    "default_weights",
    "Weights",
    "CoefficientFamily",
    "EnergyDensity",
    "envelope_H",
    "envelope_I",
    "envelope_J",
    "envelope_Ht",
    "envelope_Jt",
    "envelope_check",
    "nemytskii",
    "apply_F",
    "TestBank",
    "dual_residual_norm",
    "ResidualReport",
    "orthogonality_residual_F",
    "orthogonality_residual_E",
    "outer_truncate_integrand",
    "outer_truncate_functional",
    "compatibility_residual",
    "energy",
    "energy_field",
]


@dataclass
class Weights:
    """Nonnegative weight fields on the index box (arrays of the box shape)."""

    h_q: np.ndarray
    h_p: np.ndarray
    h_pstar: np.ndarray
    h_inf: np.ndarray


def default_weights(domain: GridDomain, exps: ExponentConfig | None = None) -> Weights:
    """``h_inf = 1/(1+|x|)``; ``h_q``, ``h_p``, ``h_p*`` zero unless set in ``exps``."""
    shape = domain.shape
    z = np.zeros(shape)

    def pick(name, default):
        w = getattr(exps, name, None) if exps is not None else None
        return np.broadcast_to(np.asarray(w, float), shape) if w is not None else default

    return Weights(
        h_q=pick("h_q", z),
        h_p=pick("h_p", z),
        h_pstar=pick("h_pstar", z),
        h_inf=pick("h_inf", 1.0 / (1.0 + domain.radius())),
    )


def _pw(base, e):
    """``base**e`` with ``0**0 = 1`` and ``0**e = 0`` for ``e > 0``."""
    base = np.asarray(base, float)
    if e == 0:
        return np.ones_like(base)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(base > 0, np.abs(base) ** e, 0.0 if e > 0 else np.inf)


# growth envelopes; w is a Weights-like object whose fields broadcast against s, t


def envelope_H(w, exps: ExponentConfig, C: float, alpha: float, s, t):
    p, q, ps = exps.p, exps.q, exps.p_star
    return C * _pw(w.h_q + s + t, q - 1 - alpha) + C * _pw(w.h_p + _pw(s, ps / p) + t, p - 1 - alpha)


def envelope_I(w, exps: ExponentConfig, C: float, alpha: float, s, t):
    p, q, ps = exps.p, exps.q, exps.p_star
    return C * _pw(w.h_q + s + t, q - 1 - alpha) + C * _pw(w.h_p + _pw(s, ps / p) + t, p - p / ps - alpha)


def envelope_J(w, exps: ExponentConfig, varrho: float, s, t):
    p, q, ps = exps.p, exps.q, exps.p_star
    return (
        w.h_inf * _pw(s + t, q - 1)
        + _pw(w.h_q, varrho) * _pw(w.h_q + s + t, q - 1 - varrho)
        + _pw(w.h_pstar, varrho) * _pw(w.h_pstar + s + _pw(t, p / ps), ps - 1 - varrho)
    )


def envelope_Ht(w, exps: ExponentConfig, C: float, alpha: float, s, t):
    p, q, ps = exps.p, exps.q, exps.p_star
    return C * _pw(w.h_q + s + t, q - alpha) + C * _pw(w.h_p + _pw(s, ps / p) + t, p - alpha)


def envelope_Jt(w, exps: ExponentConfig, varrho: float, s, t):
    p, q, ps = exps.p, exps.q, exps.p_star
    return (
        np.abs(w.h_inf) * _pw(s + t, q)
        + _pw(np.abs(w.h_q), varrho) * _pw(w.h_q + s + t, q - varrho)
        + _pw(np.abs(w.h_pstar), varrho) * _pw(w.h_pstar + s + _pw(t, p / ps), ps - varrho)
    )


def _norm_rows(a: np.ndarray, k: int) -> np.ndarray:
    """Euclidean norm over the first ``k`` axes."""
    return np.sqrt(np.sum(a * a, axis=tuple(range(k))))


@dataclass
class CoefficientFamily:
    """Coefficients ``Q``, ``g1``, ``g2`` of the operator.

    Built-in tags:

    * ``double-power``: ``Q = |xi|^(p-2) xi + |xi|^(q-2) xi``, no lower order terms;
    * ``weighted-gradient-g1``: double-power ``Q`` plus
      ``g1 = gamma |xi|^(p (p*-1)/p*)`` along the unit vector ``(1,..,1)/sqrt(M)``;
    * ``decaying-g2``: double-power ``Q`` plus ``g2 = h_inf (|mu|+|xi|)^(q-2) mu``;
    * ``natural-growth``: double-power ``Q`` plus ``g1 = |xi|^p mu``, which
      violates the growth bound for ``g1``;
    * ``zero``: everything zero;
    * ``custom``: callables ``Q(x, mu, xi)``, ``g1(...)``, ``g2(...)`` with
      ``x`` of shape ``(N, *S)``, ``mu`` of shape ``(M, *S)`` and ``xi`` of
      shape ``(M, N, *S)``.

    ``C`` and ``alpha`` are the declared envelope constants; ``varrho`` is the
    exponent in the bound on ``g2``.
    """

    tag: str
    exps: ExponentConfig
    C: float = 2.0
    alpha: float | None = None
    varrho: float | None = None
    gamma: float = 1.0
    weights: Weights | None = None
    Q: Callable | None = None
    g1: Callable | None = None
    g2: Callable | None = None

    def __post_init__(self) -> None:
        q = self.exps.q
        if self.alpha is None:
            self.alpha = q - 1.0
        if self.varrho is None:
            self.varrho = q - 1.0
        if not 0 < self.alpha <= q - 1 + 1e-12:
            raise ValueError("alpha must lie in (0, q-1]")
        if not 0 < self.varrho <= q - 1 + 1e-12:
            raise ValueError("varrho must lie in (0, q-1]")
        if self.tag not in ("double-power", "weighted-gradient-g1", "decaying-g2", "natural-growth", "zero", "custom"):
            raise ValueError(f"unknown family {self.tag!r}")
        if self.tag == "weighted-gradient-g1":
            e = self._g1_exponent()
            self.C = max(self.C, e * abs(self.gamma) + 1e-12)

    def _g1_exponent(self) -> float:
        p, ps = self.exps.p, self.exps.p_star
        return p * (ps - 1) / ps

    def _weights(self, domain: GridDomain) -> Weights:
        return self.weights if self.weights is not None else default_weights(domain, self.exps)

    # pointwise evaluation

    def eval_Q(self, x, mu, xi, w: Weights | None = None) -> np.ndarray:
        if self.tag == "custom":
            return np.zeros_like(xi) if self.Q is None else np.asarray(self.Q(x, mu, xi), float)
        if self.tag == "zero":
            return np.zeros_like(xi)
        p, q = self.exps.p, self.exps.q
        t = _norm_rows(xi, 2)  # Frobenius norm of the M x N matrix
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(t > 0, t ** (p - 2) + t ** (q - 2), 0.0)
        return coef * xi

    def eval_g(self, x, mu, xi, w: Weights | None = None) -> np.ndarray:
        """``g1 + g2``."""
        return self.eval_g1(x, mu, xi, w) + self.eval_g2(x, mu, xi, w)

    def eval_g1(self, x, mu, xi, w=None) -> np.ndarray:
        M = mu.shape[0]
        if self.tag == "custom":
            return np.zeros_like(mu) if self.g1 is None else np.asarray(self.g1(x, mu, xi), float)
        if self.tag == "weighted-gradient-g1":
            t = _norm_rows(xi, 2)
            return np.broadcast_to(self.gamma * _pw(t, self._g1_exponent()) / math.sqrt(M), mu.shape).copy()
        if self.tag == "natural-growth":
            t = _norm_rows(xi, 2)
            return _pw(t, self.exps.p) * mu
        return np.zeros_like(mu)

    def eval_g2(self, x, mu, xi, w=None) -> np.ndarray:
        if self.tag == "custom":
            return np.zeros_like(mu) if self.g2 is None else np.asarray(self.g2(x, mu, xi), float)
        if self.tag == "decaying-g2":
            if w is None:
                raise ValueError("decaying-g2 needs weight fields")
            s = _norm_rows(mu, 1) + _norm_rows(xi, 2)
            coef = np.where(s > 0, w.h_inf * _pw(s, self.exps.q - 2), 0.0)
            return coef * mu
        return np.zeros_like(mu)

    def to_dict(self) -> dict[str, Any]:
        return {"tag": self.tag, "exponents": self.exps.to_dict(), "C": self.C, "alpha": self.alpha, "varrho": self.varrho, "gamma": self.gamma}


@dataclass
class EnergyDensity:
    """``W = W1 + W2``; built-in ``W1 = |xi|^p/p + |xi|^q/q``, ``W2 = h_inf (|mu|+|xi|)^q``.

    ``tag="custom"`` takes callables ``W1(x, mu, xi)`` and ``W2(...)``
    returning arrays of the spatial shape.
    """

    exps: ExponentConfig
    tag: str = "double-power"
    C: float = 1.0
    alpha: float = 1.0
    varrho: float = 1.0
    weights: Weights | None = None
    W1: Callable | None = None
    W2: Callable | None = None

    def eval(self, x, mu, xi, w: Weights) -> tuple[np.ndarray, np.ndarray]:
        if self.tag == "custom":
            z = np.zeros(mu.shape[1:])
            a = z if self.W1 is None else np.asarray(self.W1(x, mu, xi), float)
            b = z if self.W2 is None else np.asarray(self.W2(x, mu, xi), float)
            return a, b
        p, q = self.exps.p, self.exps.q
        t = _norm_rows(xi, 2)
        s = _norm_rows(mu, 1)
        return _pw(t, p) / p + _pw(t, q) / q, w.h_inf * _pw(s + t, q)

    def _weights(self, domain: GridDomain) -> Weights:
        return self.weights if self.weights is not None else default_weights(domain, self.exps)


def _args(u: GridFunction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dom = u.domain
    mu = u.values
    xi = u.grad.values.reshape((u.M, dom.N) + dom.shape)
    return dom.centers(), mu, xi


def nemytskii(family: CoefficientFamily, component: str, u: GridFunction) -> GridFunction:
    """Pointwise field ``Q``, ``g1``, ``g2`` or ``g`` (= g1 + g2) of ``u`` on the box."""
    dom = u.domain
    x, mu, xi = _args(u)
    w = family._weights(dom)
    if component == "Q":
        vals = family.eval_Q(x, mu, xi, w)
        out = vals.reshape((u.M * dom.N,) + dom.shape)
        comp_shape = (u.M, dom.N)
    elif component in ("g1", "g2", "g"):
        fn = {"g1": family.eval_g1, "g2": family.eval_g2, "g": family.eval_g}[component]
        out = fn(x, mu, xi, w)
        comp_shape = None
    else:
        raise ValueError(f"unknown component {component!r}")
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(f"non-finite values in the {component} field")
    return GridFunction(dom, out, extended=True, comp_shape=comp_shape)


def _pair(Qf: np.ndarray, gf: np.ndarray, phi: GridFunction) -> float:
    vol = phi.domain.cell_volume
    return float(np.sum(Qf * phi.grad.values) + np.sum(gf * phi.values)) * vol


def apply_F(family: CoefficientFamily, u: GridFunction, phi: GridFunction) -> float:
    """``F(u)[phi]`` as a grid sum."""
    return _pair(nemytskii(family, "Q", u).values, nemytskii(family, "g", u).values, phi)


def _sample_envelope_points(exps, M, N, count, rng, lo=-3.0, hi=3.0):
    mag_mu = 10 ** rng.uniform(lo, hi, count)
    mag_xi = 10 ** rng.uniform(lo, hi, count)
    mu = rng.normal(size=(M, count))
    xi = rng.normal(size=(M, N, count))
    mu *= mag_mu / np.maximum(_norm_rows(mu, 1), 1e-300)
    xi *= mag_xi / np.maximum(_norm_rows(xi, 2), 1e-300)
    # some exact zeros
    mu[:, : count // 20] = 0.0
    xi[:, :, count // 20 : count // 10] = 0.0
    return mu, xi


def envelope_check(family: CoefficientFamily, samples: int = 4000, seed: int = 0, M: int = 1, domain: GridDomain | None = None) -> dict[str, Any]:
    """Scan random ``(x, mu, xi)`` and pairs against the growth and Hoelder bounds.

    Reports the worst ratio ``|value| / envelope`` for each bound and a
    witness point for the first violated one. Ratios up to ``1 + 1e-9``
    pass.
    """
    exps = family.exps
    N = exps.N
    rng = np.random.default_rng(seed)
    if domain is not None:
        w_all = family._weights(domain)
        cells = rng.integers(0, int(np.prod(domain.shape)), samples)
        x = domain.centers().reshape(N, -1)[:, cells]
        w = Weights(*(np.asarray(getattr(w_all, k)).ravel()[cells] for k in ("h_q", "h_p", "h_pstar", "h_inf")))
    else:
        x = rng.uniform(-10, 10, (N, samples))
        r = np.sqrt(np.sum(x * x, axis=0))
        z = np.zeros(samples)
        w = Weights(z, z, z, 1.0 / (1.0 + r))
    mu1, xi1 = _sample_envelope_points(exps, M, N, samples, rng)
    mu2, xi2 = _sample_envelope_points(exps, M, N, samples, rng)
    # half of the pairs are close
    close = rng.random(samples) < 0.5
    eps = 10 ** rng.uniform(-6, 0, samples)
    mu2 = np.where(close, mu1 + eps * rng.normal(size=mu1.shape) * (1 + np.abs(mu1)), mu2)
    xi2 = np.where(close, xi1 + eps * rng.normal(size=xi1.shape) * (1 + np.abs(xi1)), xi2)
    s1, t1 = _norm_rows(mu1, 1), _norm_rows(xi1, 2)
    s2, t2 = _norm_rows(mu2, 1), _norm_rows(xi2, 2)
    C, a, vr = family.C, family.alpha, family.varrho
    ps_p = exps.p_star / exps.p
    dmu = _norm_rows(mu1 - mu2, 1)
    dxi = _norm_rows(xi1 - xi2, 2)
    dist = _pw(dmu + _pw(dmu, ps_p) + dxi, a)

    Q1, Q2 = family.eval_Q(x, mu1, xi1, w), family.eval_Q(x, mu2, xi2, w)
    g11, g12 = family.eval_g1(x, mu1, xi1, w), family.eval_g1(x, mu2, xi2, w)
    g21 = family.eval_g2(x, mu1, xi1, w)
    checks = {
        "Q_growth": (_norm_rows(Q1, 2), envelope_H(w, exps, C, 0.0, s1, t1)),
        "g1_growth": (_norm_rows(g11, 1), envelope_I(w, exps, C, 0.0, s1, t1)),
        "g2_growth": (_norm_rows(g21, 1), envelope_J(w, exps, vr, s1, t1)),
        "Q_holder": (_norm_rows(Q1 - Q2, 2), envelope_H(w, exps, C, a, s1 + s2, t1 + t2) * dist),
        "g1_holder": (_norm_rows(g11 - g12, 1), envelope_I(w, exps, C, a, s1 + s2, t1 + t2) * dist),
    }
    report: dict[str, Any] = {"family": family.to_dict(), "samples": samples, "ratios": {}, "pass": True, "witness": None}
    for name, (val, env) in checks.items():
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(val == 0, 0.0, np.where(env > 0, val / env, np.inf))
        worst = int(np.argmax(ratio))
        report["ratios"][name] = float(ratio[worst])
        if ratio[worst] > 1 + 1e-9 and report["pass"]:
            report["pass"] = False
            report["witness"] = {
                "bound": name,
                "ratio": float(ratio[worst]),
                "x": x[:, worst].tolist(),
                "mu": mu1[:, worst].tolist(),
                "xi": xi1[..., worst].tolist(),
            }
    return report


class TestBank:
    """Test functions scaled to ``||phi||_X + ||phi||_{L^p*} <= 1``.

    The extra ``L^p*`` term makes the Hoelder bound for the lower order part
    valid without an embedding constant.
    """

    __test__ = False  # not a pytest class

    def __init__(self, exps: ExponentConfig, members: Sequence[GridFunction] = ()):
        self.exps = exps
        self.members: list[GridFunction] = []
        for m in members:
            self.add(m)

    def norm(self, phi: GridFunction) -> float:
        e = self.exps
        return x_norm(phi, e.p, e.q) + lp_norm(phi, e.p_star)

    def add(self, phi: GridFunction) -> None:
        n = self.norm(phi)
        if n > 0:
            self.members.append(phi * (1.0 / n))

    def extended(self, extra: Sequence[GridFunction]) -> TestBank:
        out = TestBank(self.exps)
        out.members = list(self.members)
        for m in extra:
            out.add(m)
        return out

    def __len__(self) -> int:
        return len(self.members)

    @classmethod
    def default(cls, domain: GridDomain, exps: ExponentConfig, widths: Sequence[float] = (0.125, 0.5, 2.0), spacing: float = 1.0, M: int = 1) -> TestBank:
        """Smooth bumps at lattice centers (``spacing`` times the width) and widths."""
        from .corpus import bump

        bank = cls(exps)
        x = domain.centers()
        lo = domain.origin + domain.h
        hi = domain.origin + (np.asarray(domain.shape) - 1) * domain.h
        for w in widths:
            step = max(spacing * w * 4, domain.h)
            axes = [np.arange(a + w, b - w + 1e-12, step) for a, b in zip(lo, hi)]
            for c in np.stack(np.meshgrid(*axes, indexing="ij")).reshape(domain.N, -1).T:
                prof = bump(np.sqrt(np.sum((x - c.reshape((-1,) + (1,) * domain.N)) ** 2, axis=0)) / w)
                for i in range(M):
                    vals = np.zeros((M,) + domain.shape)
                    vals[i] = prof
                    bank.add(GridFunction(domain, vals))
        return bank


def _fields(family: CoefficientFamily, combo: Sequence[tuple[float, GridFunction]]) -> tuple[GridFunction, GridFunction]:
    Qs = None
    gs = None
    for c, v in combo:
        Q = nemytskii(family, "Q", v)
        g = nemytskii(family, "g", v)
        Qs = Q * c if Qs is None else Qs + Q * c
        gs = g * c if gs is None else gs + g * c
    return Qs, gs


def _dual_pair(family: CoefficientFamily, Qf: GridFunction, gf: GridFunction, bank: TestBank) -> tuple[float, float]:
    pc, qc, psc = family.exps.conj
    upper = sum_space_norm(Qf, pc, qc) + sum_space_norm(gf, psc, qc)
    lower = max((abs(_pair(Qf.values, gf.values, phi)) for phi in bank.members), default=0.0)
    return lower, upper


def dual_residual_norm(family: CoefficientFamily, combo: Sequence[tuple[float, GridFunction]], bank: TestBank) -> tuple[float, float]:
    """``(lower, upper)`` for the functional ``sum c_i F(v_i)``.

    ``combo`` is a list of ``(coefficient, function)``. The Q field is
    measured in ``L^p' + L^q'`` and the g field in ``L^p*' + L^q'``.
    """
    if len(bank) == 0:
        raise ValueError("empty test bank")
    Qf, gf = _fields(family, combo)
    return _dual_pair(family, Qf, gf, bank)


@dataclass
class ResidualReport:
    """Residual curves over decomposition positions ``n`` (1-based)."""

    kind: str
    n: list[int]
    lower: list[float]
    upper: list[float]
    summands: dict[str, list[float]] = field(default_factory=dict)
    extra: dict[str, list[float]] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    def at(self, n: int) -> tuple[float, float]:
        i = self.n.index(n)
        return self.lower[i], self.upper[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        cols = list(self.summands) + list(self.extra)
        wr.writerow(["n", "lower", "upper"] + cols)
        for i, n in enumerate(self.n):
            row = [n, repr(self.lower[i]), repr(self.upper[i])]
            row += [repr(self.summands[c][i]) for c in self.summands]
            row += [repr(self.extra[c][i]) for c in self.extra]
            wr.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "meta": self.meta}, sort_keys=True, indent=2)


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def orthogonality_residual_F(dec, family: CoefficientFamily, bank: TestBank | None = None, threads: int = 1, enrich: bool = True) -> ResidualReport:
    """Dual-norm pair of ``[F(u) - F(U0)] + sum_i [F(0) - F(Ui)]`` per position.

    The five summands are reported by their upper bounds. With ``enrich``
    the bank is extended by normalized copies of the components at each
    position.
    """
    L = dec.length
    if L == 0:
        return ResidualReport("F", [], [], [])
    dom = dec.inputs[0].domain
    if bank is None:
        bank = TestBank.default(dom, family.exps, M=dec.inputs[0].M)
    zero = GridFunction.zeros(dom, dec.inputs[0].M)

    def one(n):
        u = dec.inputs[n]
        U = [c[n] for c in dec.components]
        combo = [(1.0, u), (-1.0, U[0])]
        for i in range(1, 5):
            combo += [(1.0, zero), (-1.0, U[i])]
        b = bank.extended([u] + U) if enrich else bank
        lo, up = dual_residual_norm(family, combo, b)
        parts = [dual_residual_norm(family, [(1.0, u), (-1.0, U[0])], b)[1]]
        parts += [dual_residual_norm(family, [(1.0, zero), (-1.0, U[i])], b)[1] for i in range(1, 5)]
        return lo, up, parts

    res = _pmap(one, range(L), threads)
    summ = {f"S{i}_upper": [r[2][i] for r in res] for i in range(5)}
    return ResidualReport("F", list(range(1, L + 1)), [r[0] for r in res], [r[1] for r in res], summ, meta={"family": family.to_dict(), "bank_size": len(bank)})


def energy_field(density: EnergyDensity, u: GridFunction) -> GridFunction:
    """Integrand ``W(x, u, grad u)`` on the box."""
    dom = u.domain
    x, mu, xi = _args(u)
    a, b = density.eval(x, mu, xi, density._weights(dom))
    return GridFunction(dom, (a + b)[None], extended=True)


def energy(density: EnergyDensity, u: GridFunction) -> float:
    return float(np.sum(energy_field(density, u).values)) * u.domain.cell_volume


def orthogonality_residual_E(dec, density: EnergyDensity, threads: int = 1) -> ResidualReport:
    """``L^1`` norm of ``[W(u) - W(U0)] + sum_i [W(0) - W(Ui)]`` per position.

    ``lower`` holds the scalar energy residual (absolute value), ``upper`` the
    ``L^1`` norm, which dominates it.
    """
    L = dec.length
    if L == 0:
        return ResidualReport("E", [], [], [])
    dom = dec.inputs[0].domain
    vol = dom.cell_volume
    w0 = energy_field(density, GridFunction.zeros(dom, dec.inputs[0].M)).values[0]

    def one(n):
        fu = energy_field(density, dec.inputs[n]).values[0]
        fU = [energy_field(density, c[n]).values[0] for c in dec.components]
        s = [fu - fU[0]] + [w0 - f for f in fU[1:]]
        tot = s[0] + s[1] + s[2] + s[3] + s[4]
        l1 = float(np.sum(np.abs(tot))) * vol
        scalar = abs(math.fsum(float(np.sum(t)) * vol for t in s))
        return scalar, l1, [float(np.sum(np.abs(t))) * vol for t in s]

    res = _pmap(one, range(L), threads)
    summ = {f"S{i}_L1": [r[2][i] for r in res] for i in range(5)}
    return ResidualReport("E", list(range(1, L + 1)), [r[0] for r in res], [r[1] for r in res], summ, meta={"density": density.tag})


# outer truncations


def outer_truncate_integrand(j: int, n: float, g: GridFunction) -> GridFunction:
    """Pointwise truncations of an integrand field.

    ``j=1`` multiplies by ``nu(|x| - n)``, ``j=2`` clamps into ``[-n, n]``,
    ``j=3`` subtracts the clamp at ``1/n``. Clamps act per component.
    """
    if j == 1:
        w = nu(g.domain.radius() - n)
        return GridFunction(g.domain, g.values * w, extended=True)
    if j == 2:
        return GridFunction(g.domain, eta(n, g.values), extended=True)
    if j == 3:
        return GridFunction(g.domain, g.values - eta(1.0 / n, g.values), extended=True)
    raise ValueError("j must be 1, 2 or 3")


def _test_truncation(j: int, n: float, phi: GridFunction) -> GridFunction:
    if j == 1:
        return cutoff_outer(phi, n)
    if j == 2:
        return truncate_above(phi, n).function
    if j == 3:
        return truncate_below(phi, n).function
    raise ValueError("j must be 1, 2 or 3")


@dataclass
class TruncatedFunctional:
    """``phi -> f[phi_n^(j)(phi)]`` for ``f = sum c_i F(v_i)``, or the complement
    ``phi -> f[phi - phi_n^(j)(phi)]`` when ``complement`` is set."""

    family: CoefficientFamily
    combo: list
    j: int
    n: float
    complement: bool = False

    def __call__(self, phi: GridFunction) -> float:
        t = _test_truncation(self.j, self.n, phi)
        if self.complement:
            t = phi - t
        Qf, gf = _fields(self.family, self.combo)
        return _pair(Qf.values, gf.values, t)


def outer_truncate_functional(j: int, n: float, family: CoefficientFamily, combo, complement: bool = False) -> TruncatedFunctional:
    """Wrap ``sum c_i F(v_i)`` so test functions are truncated first."""
    return TruncatedFunctional(family, list(combo), j, n, complement)


def _weighted_upper(family: CoefficientFamily, Qf: GridFunction, gf: GridFunction, wgt: np.ndarray) -> float:
    """Hoelder bound of ``phi -> f[wgt * phi]`` using the discrete product rule.

    ``grad(w phi)_k(x) = w(x + h e_k) grad phi_k(x) + phi(x) grad w_k(x)``.
    """
    dom = Qf.domain
    N, M = dom.N, gf.M
    h = dom.h
    pc, qc, psc = family.exps.conj
    Q = Qf.values.reshape((M, N) + dom.shape)
    shifted = np.empty((N,) + dom.shape)
    dw = np.empty((N,) + dom.shape)
    for k in range(N):
        nxt = np.roll(wgt, -1, axis=k)
        sl = [slice(None)] * N
        sl[k] = -1
        nxt[tuple(sl)] = 0.0
        shifted[k] = nxt
        dw[k] = (nxt - wgt) / h
    Qw = GridFunction(dom, (Q * shifted[None]).reshape(M * N, *dom.shape), extended=True)
    gw = GridFunction(dom, gf.values * wgt + np.sum(Q * dw[None], axis=1), extended=True)
    return sum_space_norm(Qw, pc, qc) + sum_space_norm(gw, psc, qc)


def compatibility_residual(
    family: CoefficientFamily,
    j: int,
    m: float,
    n_ladder: Sequence[float],
    corpus: Sequence[tuple[GridFunction, GridFunction]],
    bank: TestBank | None = None,
) -> dict[str, Any]:
    """Sup over pairs ``(v, w)`` of the two compatibility quantities along ``n``.

    ``first[n]``: ``psi_m[F(v + (I - phi_n) w)] - psi_m[F(v)]``;
    ``second[n]``: ``(I - psi_n)[F(v + phi_m w)] - (I - psi_n)[F(v)]``,
    with ``psi_n f[phi] = f[phi_n(phi)]``. Each is a ``(lower, upper)`` pair.
    For ``j = 1`` the functionals are linear and ``upper`` is the exact
    Hoelder bound; for ``j = 2, 3`` it is the frozen family constant times
    the dual bound of the field difference.
    """
    from .calibration import FROZEN

    if not corpus:
        raise ValueError("empty corpus")
    dom = corpus[0][0].domain
    if bank is None:
        bank = TestBank.default(dom, family.exps, M=corpus[0][0].M)
    c1 = {1: FROZEN["C1_outer"], 2: FROZEN["C1_above"], 3: FROZEN["C1_below"]}[j]
    trunc_bank: dict[tuple, list[GridFunction]] = {}

    def bank_through(level, complement):
        key = (level, complement)
        if key not in trunc_bank:
            out = []
            for phi in bank.members:
                t = _test_truncation(j, level, phi)
                out.append(phi - t if complement else t)
            trunc_bank[key] = out
        return trunc_bank[key]

    def quantity(level, complement, combos):
        lo = up = 0.0
        tb = bank_through(level, complement)
        if j == 1:
            wgt = nu(dom.radius() - level)
            wgt = 1.0 - wgt if complement else wgt
        for combo in combos:
            Qf, gf = _fields(family, combo)
            lo = max(lo, max((abs(_pair(Qf.values, gf.values, t)) for t in tb), default=0.0))
            if j == 1:
                up = max(up, _weighted_upper(family, Qf, gf, wgt))
            else:
                pc, qc, psc = family.exps.conj
                up = max(up, c1 * (sum_space_norm(Qf, pc, qc) + sum_space_norm(gf, psc, qc)))
        return lo, up

    first, second = [], []
    for n in n_ladder:
        c_first = [[(1.0, v + w - _test_truncation(j, n, w)), (-1.0, v)] for v, w in corpus]
        first.append(quantity(m, False, c_first))
        c_second = [[(1.0, v + _test_truncation(j, m, w)), (-1.0, v)] for v, w in corpus]
        second.append(quantity(n, True, c_second))
    return {
        "j": j,
        "m": m,
        "n": list(map(float, n_ladder)),
        "first_lower": [a for a, _ in first],
        "first_upper": [b for _, b in first],
        "second_lower": [a for a, _ in second],
        "second_upper": [b for _, b in second],
    }
