"""Relativistic free-particle Gaussian wavepackets as quantum-trajectory ensembles.

The ensemble is labelled by ``C`` and advanced in an ensemble proper time
``T``; each label carries an event ``(t, x)`` in (1+1)d spacetime.  The
modules are layered::

    model -> dynamics -> integrator -> observables -> lorentz -> verify -> cli
"""

from .errors import (
    ConfigurationError,
    LightConeViolation,
    MetricDegeneracyError,
    NonFiniteFieldError,
    NumericalBreakdown,
    ReltrajError,
    ShapeError,
    SpanError,
    StepSizeUnderflow,
    VerificationFailure,
)
from .model import Grid, GridSpec, PhysicalParams, build_grid, deriv1, deriv2
from .dynamics import (
    EnsembleState,
    compute_fields,
    initial_state,
    quantum_force,
    quantum_potential,
    rhs,
    spatial_metric,
)
from .integrator import IntegratorConfig, SolutionRecord, dense_eval, evolve
from .observables import (
    ConservationReport,
    FluxSamples,
    SliceReport,
    conservation_report,
    flux_at,
    slice_constant_t,
    slice_coverage_stop,
)
from .lorentz import (
    BoostedConservation,
    BoostParams,
    boost_events,
    boost_flux,
    boosted_conservation,
)
from .verify import (
    ScaleTransform,
    apply_scale,
    convergence_error,
    nonrelativistic_check,
    scale_invariance_error,
)

__version__ = "0.1.0"

__all__ = [
    "ReltrajError", "ConfigurationError", "ShapeError", "NumericalBreakdown",
    "MetricDegeneracyError", "NonFiniteFieldError", "StepSizeUnderflow",
    "LightConeViolation", "SpanError", "VerificationFailure",
    "PhysicalParams", "GridSpec", "Grid", "build_grid", "deriv1", "deriv2",
    "EnsembleState", "initial_state", "spatial_metric", "quantum_potential",
    "quantum_force", "compute_fields", "rhs",
    "IntegratorConfig", "SolutionRecord", "evolve", "dense_eval",
    "FluxSamples", "SliceReport", "ConservationReport", "flux_at",
    "slice_constant_t", "conservation_report", "slice_coverage_stop",
    "BoostParams", "BoostedConservation", "boost_events", "boost_flux",
    "boosted_conservation",
    "ScaleTransform", "apply_scale", "scale_invariance_error",
    "convergence_error", "nonrelativistic_check",
]
