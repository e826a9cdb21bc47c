"""Lyapunov exponents of linear cocycles over hyperbolic base systems.

Library layers: exact base dynamics (base), matrix cocycle families
(cocycle), exponent estimators and subadditive machinery (exponents),
point-dependent Lyapunov metrics, cones and drift bounds (pesin), and the
experiment harness with its CLI (harness, cli).
"""

from .base import (
    FullShift,
    ShadowReport,
    ShiftPoint,
    ToralAutomorphism,
    TorusPoint,
    base_from_config,
)
from .cocycle import (
    CocycleSpec,
    HolderEstimate,
    compound_matrix,
    cocycle_from_config,
    evaluate,
    exterior_power,
    holder_estimate,
    inverse_bound,
    product,
)
from .errors import (
    BadPeriod,
    CapExceeded,
    ClusterError,
    ConfigError,
    DegenerateOrbit,
    HypothesisViolated,
    NoReturn,
    NoSplitting,
    NotPeriodic,
    Overflow,
    PerlyapError,
    SingularClose,
    TailTooLarge,
)
from .exponents import (
    GoodTimes,
    OseledetsSplitting,
    SpectrumEstimate,
    SubadditiveTrace,
    good_times,
    norm_exponents,
    oseledets_splitting,
    periodic_exponents,
    qr_spectrum,
    subadditive_trace,
)

__version__ = "0.1.0"
