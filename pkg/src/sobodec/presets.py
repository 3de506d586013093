"""Named configurations for the standard corpora.

Each preset is a full pipeline configuration: a corpus spec, decomposition
settings, the coefficient family and the checks the pipeline asserts.
"""

from __future__ import annotations

import copy
from typing import Any

EXPONENTS = {"q": 1.5, "p": 2.5, "N": 1, "p_star": 5.0}

# bubble + traveling bump + spreader on a long 1-D box; ladders set so the
# bubble is cut late, the bump leaves the inner ball early and the
# spreader stays below the small levels
COMPOSITE: dict[str, Any] = {
    "corpus": {
        "generator": "composite",
        "K": 32,
        "seed": 0,
        "domain": {"kind": "box", "lower": [-16.0], "upper": [16.0], "h": 1 / 256},
        "exponents": EXPONENTS,
        "params": {
            "parts": [
                {"generator": "bubble", "params": {"scale_min": 1, "scale_max": 64, "scale_law": "geometric", "amplitude": 3}},
                {"generator": "traveling-bump", "params": {"y_min": 3, "y_max": 13, "width": 0.5, "amplitude": 1}},
                {"generator": "spreader-ball", "params": {"rho_min": 1, "rho_max": 10, "rho_law": "geometric"}},
            ]
        },
    },
    "decompose": {"q": 1.5, "p": 2.5, "p_star": 5.0, "above": [5.5, 6.5], "radii": [1.0, 3.0], "below": [6.0, 0.7]},
    "family": {"tag": "double-power"},
    "density": {"tag": "double-power"},
    "assert": {"properties": True, "residual_ratio": {"from": 4, "to": 32, "max": 0.2}},
}

ZERO: dict[str, Any] = {
    "corpus": {
        "generator": "zero",
        "K": 8,
        "domain": {"kind": "box", "lower": [-2.0], "upper": [2.0], "h": 1 / 32},
        "exponents": EXPONENTS,
    },
    "decompose": {"q": 1.5, "p": 2.5, "p_star": 5.0},
    "family": {"tag": "double-power"},
    "density": {"tag": "double-power"},
    "assert": {"properties": True},
}

PRESETS = {"composite": COMPOSITE, "zero": ZERO}


def preset(name: str) -> dict[str, Any]:
    """A deep copy of the named preset."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])
