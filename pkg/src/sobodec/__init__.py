"""Discrete compactness diagnostics for bounded sequences in Sobolev spaces."""

from .calibration import FROZEN, calibrate
from .corpus import CorpusSpec, generate, random_corpus
from .decompose import (
    Decomposition,
    DecompositionConfig,
    PropertyThresholds,
    decompose,
    load_decomposition,
    save_decomposition,
    support_vanishing_variant,
    verify_properties,
)
from .diagnostics import (
    concentration_modulus,
    diagonal_select,
    modulus_curve,
    poincare_check,
    poincare_constant,
    spreading_modulus,
    tightness_modulus,
    vanishing_convergence_check,
    vanishing_modulus,
)
from .grid import (
    ExponentConfig,
    GridDomain,
    GridFunction,
    box_domain,
    build_domain,
    gradient,
    level_set_measure,
    lp_norm,
    sobolev_norm,
    sum_space_norm,
    x_norm,
)
from .io import read_sgf1, write_sgf1
from .maximal import RadiusSchedule, distance_to_complement, maximal_function
from .operators import (
    CoefficientFamily,
    EnergyDensity,
    TestBank,
    compatibility_residual,
    envelope_check,
    nemytskii,
    orthogonality_residual_E,
    orthogonality_residual_F,
)
from .truncation import (
    TruncationResult,
    ball_indicator,
    cutoff_outer,
    eta,
    lipschitz_truncate_scalar,
    nu,
    tail_criteria,
    tail_difference,
    truncate_above,
    truncate_below,
    verify_truncation,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientFamily",
    "CorpusSpec",
    "Decomposition",
    "DecompositionConfig",
    "EnergyDensity",
    "ExponentConfig",
    "FROZEN",
    "GridDomain",
    "GridFunction",
    "PropertyThresholds",
    "RadiusSchedule",
    "TestBank",
    "TruncationResult",
    "ball_indicator",
    "box_domain",
    "build_domain",
    "calibrate",
    "compatibility_residual",
    "concentration_modulus",
    "cutoff_outer",
    "decompose",
    "diagonal_select",
    "distance_to_complement",
    "envelope_check",
    "eta",
    "generate",
    "gradient",
    "level_set_measure",
    "lipschitz_truncate_scalar",
    "load_decomposition",
    "lp_norm",
    "maximal_function",
    "modulus_curve",
    "nemytskii",
    "nu",
    "orthogonality_residual_E",
    "orthogonality_residual_F",
    "poincare_check",
    "poincare_constant",
    "random_corpus",
    "read_sgf1",
    "save_decomposition",
    "sobolev_norm",
    "spreading_modulus",
    "sum_space_norm",
    "support_vanishing_variant",
    "tail_criteria",
    "tail_difference",
    "tightness_modulus",
    "truncate_above",
    "truncate_below",
    "vanishing_convergence_check",
    "vanishing_modulus",
    "verify_properties",
    "verify_truncation",
    "write_sgf1",
    "x_norm",
]
