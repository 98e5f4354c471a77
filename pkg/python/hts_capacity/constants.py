"""Constants, exceptions, and warnings for hts_capacity.

Every error raised by the numerical core is one of the classes below so
callers (the CLI in particular) can map failures to exit codes without
inspecting messages.
"""

import math
from typing import Any, Dict, Optional

SPEED_OF_LIGHT = 299_792_458.0
"""Speed of light in vacuum (m/s)."""

LN2 = math.log(2.0)

MU_FLOOR = 1e-12
"""Positive floor applied to negative solved interference weights."""


DEFAULT_SETTINGS: Dict[str, Any] = {
    "quadrature_order": 30,
    "quadrature_scale": "auto",
    "quadrature_tolerance": 1e-2,  # relative |C(T) - C(T/2)|
    "epsilon": 1e-6,
    "max_iters": 200,
    "threshold_db": -10.0,
    "initializer": "matched-filter",
    "feedback": "measured",
    "mc_samples": 100_000,
    "mc_chunk": 100_000,
    "gof_bins": 50,
    "gof_pvalue": 0.01,
    "mb_scan_limit": 400.0,
    "mb_scan_step": 0.5,
    "mb_decay": 40.0,  # log-magnitude drop that ends the contour
    "mb_nodes": 24,
}
"""Default settings for the numerical core.

Scenario files override the Monte Carlo, algorithm, and quadrature entries;
the Mellin-Barnes entries are fixed for the parameter ranges the closed
forms produce.
"""


class HtsCapacityError(Exception):
    """Base class for all errors raised by hts_capacity."""


class ParameterError(HtsCapacityError, ValueError):
    """A parameter or argument lies outside the domain of an expression.

    Raised for non-positive Meijer G arguments, degenerate Malaga
    parameters, shadowed-Rician parameters with ``a3 <= 0`` and similar
    violations.
    """


class ConvergenceError(HtsCapacityError, ArithmeticError):
    """A contour integral or series failed to converge.

    The ``diagnostics`` mapping records the contour abscissa, truncation
    height and the magnitudes that were observed.
    """

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class IterationError(HtsCapacityError, ArithmeticError):
    """The weight-update linear system of the beamforming iteration is singular."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class BeamformingError(HtsCapacityError):
    """A beamformer could not be formed (rank-deficient or singular system)."""


class ConfigError(HtsCapacityError, ValueError):
    """Invalid scenario configuration.

    ``field`` holds the dotted path of the offending key, e.g.
    ``userlink.power_dbm``.
    """

    def __init__(self, message: str, field: str = ""):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class AccuracyWarning(UserWarning):
    """Quadrature order too small for the requested accuracy.

    Issued by the feeder capacity when the results at order T and T/2 differ
    by more than the configured tolerance.
    """


class ClampedWeightWarning(UserWarning):
    """Solved interference weights were negative and clamped to ``MU_FLOOR``."""
