"""Exact toric K-stability invariants and their numerical slope checks.

Configurations are (polytope, convex PL function, shift) triples; the
algebraic side computes Donaldson-Futaki invariants, minimum norms and
Chow weights in exact rational arithmetic, while the analytic side runs
geodesic-ray quadrature and verifies that limit slopes of the energy
functionals reproduce the exact invariants.
"""

from .analysis import Ray, newton_transport
from .errors import KstabError, NumericalFailure, ValidationError
from .functionals import energy_report, l1_norm_path, mabuchi
from .invariants import (
    blowup_expansion,
    calibration_constant,
    chow_weight,
    donaldson_futaki,
    invariant_report,
    minimum_norm,
    minimum_norm_mixed,
    slope_mu,
    twisted_weights,
)
from .plconfig import ToricTestConfig, make_config, normalize, pl_fn
from .polytope import (
    Halfspace,
    Polytope,
    box,
    construct,
    integrate,
    interval,
    mixed_volume,
    unit_simplex,
    volume_data,
)
from .slopes import (
    Schedule,
    SlopeEstimate,
    estimate_limit_slope,
    estimate_limit_value,
    scan_destabilizer,
    verify_theorem,
)

__version__ = "0.1.0"

__all__ = [
    "Halfspace",
    "KstabError",
    "NumericalFailure",
    "Polytope",
    "Ray",
    "Schedule",
    "SlopeEstimate",
    "ToricTestConfig",
    "ValidationError",
    "blowup_expansion",
    "box",
    "calibration_constant",
    "chow_weight",
    "construct",
    "donaldson_futaki",
    "energy_report",
    "estimate_limit_slope",
    "estimate_limit_value",
    "integrate",
    "interval",
    "invariant_report",
    "l1_norm_path",
    "mabuchi",
    "make_config",
    "minimum_norm",
    "minimum_norm_mixed",
    "mixed_volume",
    "newton_transport",
    "normalize",
    "pl_fn",
    "scan_destabilizer",
    "slope_mu",
    "twisted_weights",
    "unit_simplex",
    "verify_theorem",
    "volume_data",
]
