"""Spectral and geometric analysis of level-averaged random walks on group towers."""

from .measure import (
    CoefficientSequence,
    ExplicitSequence,
    GeometricSequence,
    IteratedLogSequence,
    PolynomialSequence,
    TailSequence,
    decompose_finite,
    fold_truncation,
    fractional_power,
    point_mass,
    poisson_rates,
    semigroup_coeff,
    subordinate,
    tail_regularity,
)
from .profile import (
    OrderEstimate,
    ProfileBand,
    folner_upper_bound,
    log_profile_lower_bound,
    order_estimate,
    profile_lower_bound,
    profile_lower_bound_inverse,
    spectral_profile_consistency,
    subgroup_spectral_gap,
)
from .spectral import (
    HeatKernelBand,
    RecurrenceReport,
    StepSpectralDistribution,
    classify_recurrence,
    lawler_divergence_report,
)
from .tower import (
    BallDescriptor,
    CustomVolumesTower,
    FactorialTower,
    FiniteTruncatedTower,
    GroupElement,
    LevelCapError,
    PowersOfTwoTower,
    Tower,
    ball,
    ball_volume,
    level_radius,
    ultrametric_distance,
    ultrametric_norm,
)
from .transforms import (
    ScalarFunction,
    biconjugate_transform,
    decay_trend_report,
    design_fast_decay,
    design_slow_decay,
    kohlbecker_transform,
    legendre_conjugate,
    legendre_transform,
    sequence_from_tail_rule,
)
from .walk_sim import (
    Displacement,
    ExitMass,
    WalkTrace,
    batch_final_levels,
    exit_mass,
    mean_displacement,
    run_walk,
    sample_step,
    sample_step_level,
)

__version__ = "0.1.0"
