"""The ten acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL ...`` line which is printed
in the terminal summary and also to stdout.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, TIMINGS
from sobodec.calibration import FROZEN
from sobodec.corpus import CorpusSpec, bump, generate, random_corpus, random_function
from sobodec.decompose import decompose, verify_properties
from sobodec.diagnostics import concentration_modulus, concentration_value, poincare_check, poincare_constant, vanishing_convergence_check
from sobodec.grid import ExponentConfig, GridFunction, box_domain, lp_norm, magnitude, sobolev_norm, x_norm
from sobodec.maximal import maximal_function
from sobodec.operators import CoefficientFamily, EnergyDensity, orthogonality_residual_E, orthogonality_residual_F, outer_truncate_integrand
from sobodec.truncation import (
    cutoff_outer,
    eta,
    geometric_ladder,
    lipschitz_truncate_scalar,
    tail_criteria,
    truncate_above,
    truncate_below,
    verify_truncation,
)

import oracles

P, Q = 2.5, 1.5
LEVELS = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0]


def record(num, ok, detail):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE[num] = line
    print(line)
    assert ok, line


def test_criterion_01_truncation_contract():
    t0 = time.perf_counter()
    corpus = random_corpus(0, 50)
    assert {(u.domain.N, u.M) for u in corpus} == {(1, 1), (1, 2), (2, 1), (2, 2)}
    failures = 0
    for u in corpus:
        rep = verify_truncation(u, "above", LEVELS, p=P)
        norm_p = sobolev_norm(u, P) ** P
        for lam, row in zip(LEVELS, rep["rows"]):
            res = truncate_above(u, lam)
            f = res.function
            ok = float(np.max(magnitude(f) + magnitude(f.grad))) <= FROZEN["C0"] * lam
            ok &= bool(np.array_equal(f.values[:, res.good_set], u.values[:, res.good_set]))
            ok &= res.audit["bad_measure"] <= FROZEN["C3"] ** P * lam**-P * norm_p
            ok &= row["pass"]
            failures += not ok
    elapsed = time.perf_counter() - t0
    record(1, failures == 0 and elapsed < 60, f"{len(corpus)} functions x {len(LEVELS)} levels, {failures} failures, {elapsed:.1f} s")


def test_criterion_02_mcshane_oracle():
    rng = np.random.default_rng(2)
    cases = mismatches = 0
    domains = [box_domain([-1.0], [1.0], 1 / 64), box_domain([-1.0], [1.0], 1 / 400), box_domain([-1.0, -1.0], [1.0, 1.0], 1 / 12),
               box_domain([-1.0, -1.0], [1.0, 1.0], 1 / 14)]
    for dom in domains:
        assert int(np.prod(dom.shape)) <= 1000
        for _ in range(5):
            u = random_function(dom, rng)
            v = np.abs(u.values[0]) + magnitude(u.grad)
            for frac in (0.8, 0.4, 0.1):
                lam = frac * float(v.max())
                res = lipschitz_truncate_scalar(u, lam)
                uhat, good = oracles.truncate_scalar(u, lam)
                cases += 1
                mismatches += not (np.array_equal(res.function.values[0], uhat) and np.array_equal(res.good_set, good))
    record(2, mismatches == 0, f"{cases} instances up to 1000 cells, {mismatches} cell-level mismatches")


def test_criterion_03_greedy_modulus():
    rng = np.random.default_rng(3)
    cases = mismatches = 0
    for cells in range(1, 21):
        for _ in range(4):
            a = rng.integers(0, 64, cells) / 16.0
            cell = 1 / 8
            for budget in range(0, cells + 1, max(1, cells // 5)):
                delta = budget * cell + rng.uniform(0, cell)
                cases += 1
                mismatches += concentration_value(a, cell, delta) != oracles.concentration_exhaustive(a, cell, delta)
    record(3, mismatches == 0, f"{cases} instances up to 20 cells, {mismatches} differ from exhaustive search")


def test_criterion_04_decomposition(composite):
    cfg, seq, dec = composite
    errs = {"composite": dec.reconstruction_error()}
    dom = {"kind": "box", "lower": [-8.0], "upper": [8.0], "h": 1 / 32}
    exps = {"q": Q, "p": P, "N": 1, "p_star": 5.0}
    for name, params in [("bubble", {"scale_max": 32}), ("traveling-bump", {"y_min": 0, "y_max": 6}),
                         ("spreader-ball", {"rho_min": 1, "rho_max": 6}), ("vanisher", {"y_min": 0, "y_max": 6}), ("constant", {})]:
        s = generate(CorpusSpec(name, K=12, domain=dom, params=params, exponents=exps), check_bounded=None)
        errs[name] = decompose(s, {"p_star": 5.0}).reconstruction_error()
    rng = np.random.default_rng(4)
    d2 = box_domain([-2.0, -2.0], [2.0, 2.0], 1 / 8)
    errs["random-2d"] = decompose([random_function(d2, rng, M=2) for _ in range(6)], {"p": P, "q": Q, "p_star": 5.0}).reconstruction_error()
    rep = verify_properties(dec)
    worst = max(errs.values())
    ok = worst <= 1e-12 and rep["pass"] and len(seq) == 32
    groups = ", ".join(f"{g} {'ok' if v else 'fail'}" for g, v in rep["groups"].items())
    record(4, ok, f"worst reconstruction error {worst:.2e} over {len(errs)} corpora; composite checks: {groups}")


def test_criterion_05_poincare():
    S = poincare_constant(1, 2.0)
    assert S == pytest.approx(math.pi / 2, rel=1e-6)
    rng = np.random.default_rng(5)
    dom = box_domain([-4.0], [4.0], 1 / 64)
    x = dom.centers()[0]
    worst = 0.0
    for _ in range(100):
        a, b = np.sort(rng.uniform(-3.5, 3.5, 2))
        if b - a < 0.25:
            b = a + 0.25
        c, w = 0.5 * (a + b), 0.5 * (b - a)
        vals = np.zeros_like(x)
        for _ in range(rng.integers(1, 5)):
            y = rng.uniform(c - w, c + w)
            s = rng.uniform(0.1, 1.0) * w
            vals += rng.normal() * np.maximum(0.0, 1 - ((x - y) / s) ** 2) ** 2
        vals *= np.abs(x - c) < w  # compact support inside [a, b]
        lhs, rhs = poincare_check(GridFunction(dom, vals), 2.0, S)
        worst = max(worst, lhs / rhs)
    record(5, worst <= 1.02, f"S = {S:.6f}, worst ratio lhs/rhs {worst:.4f} over 100 functions (slack 1.02)")


def test_criterion_06_vanishing_dichotomy():
    van = generate(CorpusSpec("vanisher", K=32, domain={"kind": "box", "lower": [-2.0], "upper": [36.0], "h": 1 / 16},
                              params={"y_min": 1, "y_max": 32, "decay": 1.0}), check_bounded=None)
    slab = generate(CorpusSpec("spreader-slab", K=32, domain={"kind": "box", "lower": [-34.0], "upper": [34.0], "h": 1 / 16},
                               params={"rho_min": 1, "rho_max": 32, "r": 2.0}))
    nv = np.array([lp_norm(u, 2) for u in van])
    ns = np.array([lp_norm(u, 2) for u in slab])
    rv, rs = vanishing_convergence_check(van), vanishing_convergence_check(slab)
    ok_v = nv[-1] < 0.05 * nv[0] and rv["vanishing"] and rv["non_spreading"] and rv["norm_to_zero"]
    ok_s = np.ptp(ns) <= 0.1 * ns[0] and rs["vanishing"] and not rs["non_spreading"] and not rs["norm_to_zero"]
    ok_s &= rs["violated_hypotheses"] == ["non_spreading"]
    record(6, bool(ok_v and ok_s), f"bump L2 ratio {nv[-1] / nv[0]:.3f} (vanishing, non-spreading); slab L2 spread {np.ptp(ns) / ns[0]:.3f} (spreading flagged)")


def test_criterion_07_w11_obstruction():
    K = 32
    seq = generate(CorpusSpec("w11-counterexample", K=K, domain={"kind": "box", "lower": [-1.0], "upper": [1.0], "h": 1 / 128}),
                   check_bounded=None)
    conc, deltas = [], []
    for i, u in enumerate(seq):
        n = i + 2
        res = truncate_above(u, 2 * math.sqrt(n))
        delta = 2 * max(res.audit["bad_measure"], 1 / n)
        deltas.append(delta)
        conc.append(concentration_modulus([res.function], 1, 1, delta)[0])
    conc = np.array(conc)
    ok = conc.min() >= 0.5 * 2 and deltas[-1] < 0.25 * deltas[0]
    record(7, bool(ok), f"min gradient concentration {conc.min():.3f} (floor 1.0) while delta falls to {deltas[-1]:.3f}")


def test_criterion_08_orthogonality(composite):
    t0 = time.perf_counter()
    cfg, seq, dec = composite
    exps = ExponentConfig(q=Q, p=P, N=1, p_star=5.0)
    F = orthogonality_residual_F(dec, CoefficientFamily("double-power", exps))
    E = orthogonality_residual_E(dec, EnergyDensity(exps))
    rf = F.upper[F.n.index(32)] / F.upper[F.n.index(4)]
    re = E.upper[E.n.index(32)] / E.upper[E.n.index(4)]
    elapsed = time.perf_counter() - t0 + TIMINGS["composite"]
    record(8, rf <= 0.2 and re <= 0.2 and elapsed < 600, f"F upper ratio n=32/n=4 {rf:.3g}, energy L1 ratio {re:.3g}, {elapsed:.1f} s with the decomposition")


def test_criterion_09_maximal_p1():
    def ratios(half):
        dom = box_domain([-half], [half], 1 / 32)
        v = GridFunction(dom, bump(dom.centers()[0]))
        m = maximal_function(v)
        return [lp_norm(m, p) / lp_norm(v, p) for p in (1.0, 2.0)]

    small, large = ratios(2.0), ratios(8.0)
    g1 = large[0] / small[0]
    g2 = abs(large[1] / small[1] - 1)
    record(9, g1 >= 1.5 and g2 < 0.1, f"L1 ratio grows {g1:.3f}x, L2 ratio changes {100 * g2:.1f}% when the box grows 4x")


def test_criterion_10_axioms():
    corpus = random_corpus(0, 50)
    # (phi:1) equiboundedness with the frozen constants
    bad = 0
    for u in corpus:
        xu = x_norm(u, P, Q)
        for lam in LEVELS:
            bad += x_norm(cutoff_outer(u, lam), P, Q) > FROZEN["C1_outer"] * xu
            bad += x_norm(truncate_above(u, lam).function, P, Q) > FROZEN["C1_above"] * xu
            bad += x_norm(truncate_below(u, lam).function, P, Q) > FROZEN["C1_below"] * xu
    phi1 = bad == 0
    # (phi:2) sequential and uniform tail criteria agree on the same data
    phi2 = True
    for u in corpus[::5]:
        for fam, lad in (("above", geometric_ladder(0.5, 64, 8)), ("below", geometric_ladder(0.5, 64, 8)), ("outer", np.linspace(0.1, 2.0, 8))):
            r = tail_criteria([u] * 8, fam, P, Q, lad)
            top = r["uniform"][r["j0"] - 1]
            seq = r["sequential"]
            phi2 &= max(seq["worst"]) == top
            phi2 &= all(max(v) <= top for v in seq.values())
            phi2 &= all(a >= b for a, b in zip(r["uniform"], r["uniform"][1:]))
    # (psi:1) Lipschitz-1 of the clamp-based truncations
    rng = np.random.default_rng(10)
    psi1 = True
    for u in corpus:
        f = u.grad
        g = GridFunction(f.domain, f.values + rng.normal(size=f.values.shape), extended=True)
        for j in (2, 3):
            for n in (0.5, 2.0, 8.0):
                d = np.abs(outer_truncate_integrand(j, n, f).values - outer_truncate_integrand(j, n, g).values)
                psi1 &= bool(np.all(d <= np.abs(f.values - g.values) + 1e-12))
        t = rng.normal(size=200) * 5
        s = rng.normal(size=200) * 5
        psi1 &= bool(np.all(np.abs(eta(1.0, t) - eta(1.0, s)) <= np.abs(t - s)))
    # (psi:2) pointwise convergence along the ladder
    psi2 = True
    for u in corpus:
        f = u.grad
        for j in (1, 2, 3):
            errs = [float(np.max(np.abs(outer_truncate_integrand(j, n, f).values - f.values))) for n in (1, 2, 4, 8, 16, 32, 1e6)]
            psi2 &= all(b <= a + 1e-12 for a, b in zip(errs, errs[1:])) and errs[-1] <= 2e-6
    ok = phi1 and phi2 and psi1 and psi2
    record(10, bool(ok), f"phi:1 {'ok' if phi1 else 'fail'} ({bad} violations), phi:2 {'ok' if phi2 else 'fail'}, psi:1 {'ok' if psi1 else 'fail'}, psi:2 {'ok' if psi2 else 'fail'}")
