"""Frozen constants of the truncation families and a routine to re-measure them.

The constants were measured with :func:`calibrate` on a calibration corpus
(``random_corpus(1000)`` at levels 0.5 to 32, independent of the test
corpora) and then rounded up with a safety margin. They are never recomputed at test time.
"""

from __future__ import annotations

import math

import numpy as np

from .grid import GridFunction, magnitude, x_norm

__all__ = ["FROZEN", "calibrate"]

FROZEN: dict[str, float] = {
    # sup(|u_hat| + |grad u_hat|) <= C0 * lam; measured 2.92
    "C0": 4.0,
    # |Omega minus R_hat| <= C3^p lam^-p ||u||^p over {|u| + |grad u| > lam/2}; measured 1.10
    "C3": 2.0,
    # X-norm of each family member <= C1 * X-norm of the input; measured 1.002, 1.22, 1.06
    "C1_outer": 1.5,
    "C1_above": 2.0,
    "C1_below": 2.0,
    # X-norm of each decomposition component <= this * sup of the input;
    # 0.72 on the composite corpus
    "component_bound": 4.0,
}


def calibrate(corpus: list[GridFunction], levels, p: float = 2.5, q: float = 1.5) -> dict[str, float]:
    """Measure the worst observed constants on ``corpus`` over ``levels``."""
    from .truncation import cutoff_outer, truncate_above, truncate_below

    out = {"C0": 0.0, "C3": 0.0, "C1_outer": 0.0, "C1_above": 0.0, "C1_below": 0.0}
    for u in corpus:
        xu = x_norm(u, p, q)
        if xu == 0:
            continue
        v = magnitude(u) + magnitude(u.grad)
        for lam in levels:
            res = truncate_above(u, lam)
            out["C0"] = max(out["C0"], res.audit["sup_ratio"])
            big = v > lam / 2
            mass = float(np.sum(np.where(big, magnitude(u) ** p + magnitude(u.grad) ** p, 0.0))) * u.domain.cell_volume
            if res.audit["bad_measure"] > 0:
                c3 = lam * (res.audit["bad_measure"] / mass) ** (1 / p) if mass > 0 else math.inf
                out["C3"] = max(out["C3"], c3)
            out["C1_above"] = max(out["C1_above"], x_norm(res.function, p, q) / xu)
            out["C1_below"] = max(out["C1_below"], x_norm(truncate_below(u, 1.0 / lam).function, p, q) / xu)
            out["C1_outer"] = max(out["C1_outer"], x_norm(cutoff_outer(u, lam), p, q) / xu)
    return out
