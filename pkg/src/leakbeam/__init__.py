"""
leakbeam: robust leakage-controlled beamforming for the multiuser MISO
downlink with limited channel feedback.
"""

__version__ = "0.1.0"

from .beamforming import (  # noqa: E402
    PA_SCHEMES,
    SCHEMES,
    BeamformingSolution,
    algo1,
    build_statistics,
    run_scheme,
)
from .channel import (  # noqa: E402
    ChannelRealization,
    CmiMode,
    QuantizedCsi,
    SystemConfig,
    generate_channel,
    make_rng,
    perfect_csi,
    quantize_channel,
)
from .errors import (  # noqa: E402
    ConfigurationError,
    DomainError,
    LeakbeamError,
    SolverError,
)
from .evaluation import (  # noqa: E402
    TrialResult,
    audit_constraints,
    average_over_trials,
    run_trial,
    weighted_sum_rate,
)
from .leakage import cdf_D, cdf_V, percentile_D, percentile_V  # noqa: E402

__all__ = [
    "__version__", "SCHEMES", "PA_SCHEMES", "BeamformingSolution", "algo1",
    "build_statistics", "run_scheme", "ChannelRealization", "CmiMode", "QuantizedCsi",
    "SystemConfig", "generate_channel", "make_rng", "perfect_csi", "quantize_channel",
    "ConfigurationError", "DomainError", "LeakbeamError", "SolverError", "TrialResult",
    "audit_constraints", "average_over_trials", "run_trial", "weighted_sum_rate",
    "cdf_D", "cdf_V", "percentile_D", "percentile_V",
]
