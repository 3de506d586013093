import numpy as np
import pytest

from sobodec.corpus import CorpusSpec, bump, generate, ladder, random_corpus
from sobodec.grid import lp_norm, x_norm
from sobodec.diagnostics import tightness_modulus


def box(lo, hi, h):
    return {"kind": "box", "lower": [lo], "upper": [hi], "h": h}


def test_bubble_keeps_gradient_norm():
    spec = CorpusSpec("bubble", K=8, domain=box(-2, 2, 1 / 512), exponents={"q": 1.5, "p": 2.0, "N": 1, "p_star": 4.0})
    seq = generate(spec)
    g = np.array([lp_norm(u.grad, 2) for u in seq])
    assert np.ptp(g) / g.mean() < 0.05
    # the L^2 part carries the factor n^-1 and decays
    vals = np.array([lp_norm(u, 2) for u in seq])
    assert vals[-1] == pytest.approx(vals[0] / 8, rel=0.02)


def test_traveling_bump_leaves_ball():
    spec = CorpusSpec("traveling-bump", K=11, domain=box(-14, 14, 1 / 16), params={"y_min": 0, "y_max": 10})
    seq = generate(spec)
    R = 4.0
    t = tightness_modulus(seq, 2, 0, R)
    full = lp_norm(seq[0], 2) ** 2
    for y, val in zip(np.linspace(0, 10, 11), t):
        if y > R + 1:
            assert val == pytest.approx(full)
        if y < R - 1:
            assert val == 0.0


def test_w11_matches_formula():
    spec = CorpusSpec("w11-counterexample", K=4, domain=box(-1, 1, 1 / 64), params={"n_values": [2, 3, 4, 5]})
    u4 = generate(spec, check_bounded=None)[2]
    t = u4.domain.centers()[0]
    inside = np.abs(t) < 1
    expect = np.where(t < -1 / 4, -t - 1, np.where(t > 1 / 4, -t + 1, 3 * t))
    assert np.array_equal(u4.values[0][inside], expect[inside])
    assert lp_norm(u4.grad, 1) == pytest.approx(2 * (1 - 1 / 4) + 3 * 2 / 4, rel=0.02)


def test_vanisher_decay_and_spreader_mass():
    van = generate(CorpusSpec("vanisher", K=4, domain=box(-2, 12, 1 / 32), params={"y_min": 0, "y_max": 9}), check_bounded=None)
    n0 = lp_norm(van[0], 2)
    assert [lp_norm(u, 2) / n0 for u in van] == pytest.approx([1, 2**-0.5, 3**-0.5, 0.5], rel=1e-9)
    spread = generate(CorpusSpec("spreader-ball", K=5, domain=box(-8, 8, 1 / 32), params={"rho_min": 1, "rho_max": 6, "edge": 1e-9, "r": 2.0}))
    masses = [lp_norm(u, 2) ** 2 for u in spread]
    assert np.ptp(masses) < 0.05 * np.mean(masses)


def test_support_escape_reports_size():
    spec = CorpusSpec("traveling-bump", K=3, domain=box(-2, 2, 1 / 16), params={"y_min": 0, "y_max": 3})
    with pytest.raises(ValueError, match="half-width at least"):
        generate(spec)


def test_unbounded_sequence_rejected():
    spec = CorpusSpec("bubble", K=6, domain=box(-2, 2, 1 / 256), params={"p": 0.5}, exponents={"q": 1.5, "p": 2.5, "N": 1, "p_star": 5.0})
    with pytest.raises(ValueError, match="grows"):
        generate(spec, check_bounded=2.0)


def test_composite_and_zero_and_unknown():
    parts = [{"generator": "constant", "params": {"width": 0.5}}, {"generator": "bubble", "params": {"scale_max": 4}}]
    spec = CorpusSpec("composite", K=3, domain=box(-2, 2, 1 / 32), params={"parts": parts})
    comp = generate(spec)
    a = generate(CorpusSpec("constant", K=3, domain=box(-2, 2, 1 / 32), params={"width": 0.5}))
    b = generate(CorpusSpec("bubble", K=3, domain=box(-2, 2, 1 / 32), params={"scale_max": 4}))
    assert all(np.array_equal(c.values, (x + y).values) for c, x, y in zip(comp, a, b))
    assert all(u.is_zero() for u in generate(CorpusSpec("zero", K=2)))
    with pytest.raises(ValueError):
        generate(CorpusSpec("nonsense"))


def test_random_generators_are_seeded():
    a = random_corpus(5, count=6)
    b = random_corpus(5, count=6)
    c = random_corpus(6, count=6)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    assert not all(np.array_equal(x.values, y.values) for x, y in zip(a, c))
    assert {(u.domain.N, u.M) for u in a} == {(1, 1), (1, 2), (2, 1), (2, 2)}


def test_ladders_and_bump():
    assert ladder(1, 8, 4).tolist() == pytest.approx([1, 2, 4, 8])
    assert ladder(0, 3, 4, "linear").tolist() == [0, 1, 2, 3]
    assert ladder(5, 9, 3, "index").tolist() == [1, 2, 3]
    with pytest.raises(ValueError):
        ladder(1, 2, 3, "cubic")
    assert bump(0.0) == 1.0 and bump(1.0) == 0.0 and bump(0.5) == pytest.approx(0.75**3)


def test_spec_round_trip():
    spec = CorpusSpec("bubble", K=4, params={"scale_max": 4}, seed=3, exponents={"q": 1.5, "p": 2.5, "N": 1, "p_star": 5.0})
    assert CorpusSpec.from_dict(spec.to_dict()) == spec
    assert spec.exponent_config().p_star == 5.0
    assert x_norm(generate(spec)[0], 2.5, 1.5) > 0
