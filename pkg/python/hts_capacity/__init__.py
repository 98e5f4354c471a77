"""
HTS Capacity - ergodic capacity of a satellite forward link with an FSO feeder

An Alamouti-coded optical feeder link over Malaga turbulence feeds a
multibeam RF user link over shadowed-Rician fading. The package evaluates
both hops in closed form, designs average-virtual-SINR beamformers and
checks every closed form against quadrature and Monte Carlo oracles.
"""

from importlib.metadata import PackageNotFoundError, version

# Special functions
from .specfun import (
    MeijerParams1441,
    MeijerParams2002,
    bessel_j,
    expint_ei,
    expn_scaled,
    hyp1f1,
    meijer_g_0221,
    meijer_g_1441,
    meijer_g_2002,
    mellin_barnes,
    phi_node,
)

# Channel models and geometry
from .channels import (
    BeamGeometry,
    MalagaParams,
    RngStream,
    ShadowedRicianParams,
    beam_gain,
    build_channel,
    build_channels,
    hexagonal_geometry,
    malaga_cdf,
    malaga_constants,
    malaga_pdf,
    malaga_sample,
    sr_cdf,
    sr_pdf,
    sr_sample,
    steering_matrix,
    steering_vector,
)

# Feeder link
from .feeder import (
    FeederCapacity,
    FeederConfig,
    FsoPathLoss,
    Gateway,
    QuadratureSpec,
    feeder_capacity,
    feeder_capacity_mc,
    mgf_gamma1,
    mgf_gamma1_deriv,
    mgf_gamma1_quad,
    stbc_snr,
)

# Beamforming
from .beamforming import (
    AlgorithmConfig,
    BeamformerSet,
    BfProblem,
    InnerStep,
    average_virtual_sinr,
    baseline_bf,
    expected_sinr,
    fixed_point_residual,
    gradient_avg_virtual_sinr,
    gradient_upper_bound,
    inner_iterations,
    instantaneous_sinr,
    run_algorithm1,
    update_weights,
    virtual_sinr_weights,
)

# Capacity
from .capacity import (
    CapacityResult,
    UserCapacityInputs,
    end_to_end_capacity,
    ergodic_sum_rate,
    truncated_log_moment,
    user_capacity_inputs,
    user_link_capacity,
    user_link_capacity_mc,
)

# Constants, exceptions, and warnings
from .constants import (
    DEFAULT_SETTINGS,
    AccuracyWarning,
    BeamformingError,
    ClampedWeightWarning,
    ConfigError,
    ConvergenceError,
    HtsCapacityError,
    IterationError,
    ParameterError,
)

# Scenarios, sweeps and validation
from .config import ScenarioConfig, load_presets
from .validation import ValidationReport, validate_models

try:
    __version__ = version("hts-capacity")
except PackageNotFoundError:
    __version__ = "0.0.0"

__all__ = [
    # Special functions
    "bessel_j",
    "hyp1f1",
    "expint_ei",
    "expn_scaled",
    "meijer_g_2002",
    "meijer_g_1441",
    "meijer_g_0221",
    "mellin_barnes",
    "phi_node",
    "MeijerParams2002",
    "MeijerParams1441",
    # Channel models
    "MalagaParams",
    "ShadowedRicianParams",
    "RngStream",
    "malaga_constants",
    "malaga_pdf",
    "malaga_cdf",
    "malaga_sample",
    "sr_pdf",
    "sr_cdf",
    "sr_sample",
    # Geometry
    "BeamGeometry",
    "beam_gain",
    "hexagonal_geometry",
    "steering_vector",
    "steering_matrix",
    "build_channel",
    "build_channels",
    # Feeder link
    "FsoPathLoss",
    "Gateway",
    "FeederConfig",
    "QuadratureSpec",
    "FeederCapacity",
    "stbc_snr",
    "mgf_gamma1",
    "mgf_gamma1_deriv",
    "mgf_gamma1_quad",
    "feeder_capacity",
    "feeder_capacity_mc",
    # Beamforming
    "BfProblem",
    "AlgorithmConfig",
    "BeamformerSet",
    "InnerStep",
    "virtual_sinr_weights",
    "average_virtual_sinr",
    "expected_sinr",
    "update_weights",
    "fixed_point_residual",
    "gradient_upper_bound",
    "gradient_avg_virtual_sinr",
    "instantaneous_sinr",
    "inner_iterations",
    "run_algorithm1",
    "baseline_bf",
    # Capacity
    "UserCapacityInputs",
    "CapacityResult",
    "truncated_log_moment",
    "user_capacity_inputs",
    "user_link_capacity",
    "user_link_capacity_mc",
    "ergodic_sum_rate",
    "end_to_end_capacity",
    # Constants
    "DEFAULT_SETTINGS",
    # Exceptions and warnings
    "HtsCapacityError",
    "ParameterError",
    "ConvergenceError",
    "IterationError",
    "BeamformingError",
    "ConfigError",
    "AccuracyWarning",
    "ClampedWeightWarning",
    # Scenarios and validation
    "ScenarioConfig",
    "load_presets",
    "ValidationReport",
    "validate_models",
]
