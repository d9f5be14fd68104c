"""Online static-parameter inference for state-space models (C++ core)."""

from ._core import (
    DegenerateWeightsError,
    IngestionError,
    ParameterDomainError,
    bandwidth_rule_a3,
    ess,
    kalman_loglik,
    normalize_returns,
    run,
    simulate,
    verify,
)

__all__ = [
    "DegenerateWeightsError",
    "IngestionError",
    "ParameterDomainError",
    "bandwidth_rule_a3",
    "ess",
    "kalman_loglik",
    "normalize_returns",
    "run",
    "simulate",
    "verify",
]
