"""Exception hierarchy shared across the package."""

from __future__ import annotations


class HeraldSqueezeError(Exception):
    """Base class for all package-specific errors."""


class PhysicalityError(HeraldSqueezeError, ValueError):
    """A state or operation violates a physical constraint
    (non-symmetric/unphysical covariance, non-symplectic matrix, ...)."""


class FilterBreakdownError(HeraldSqueezeError, ArithmeticError):
    """Gain-variance breakdown: the filtered ensemble is not
    Gaussian-approximable (2*lambda*V >= 1), so analytic callers must
    refuse.  The Monte Carlo engine has no such restriction."""


class OperationalRegimeError(HeraldSqueezeError, RuntimeError):
    """The filtered outcome distribution is not sufficiently contained
    inside the cutoff; the analytic Gaussian output model would be
    distorted."""


class UnityGainError(HeraldSqueezeError, ValueError):
    """No electronic gain choice can make the output mean equal the
    target mean for every coherent input."""


class AcceptanceStarvationError(HeraldSqueezeError, RuntimeError):
    """The trajectory budget was exhausted before reaching the requested
    accepted count.  Carries the empirical acceptance-rate bound."""

    def __init__(self, message: str, accepted: int, total: int,
                 rate_upper_bound: float) -> None:
        super().__init__(message)
        self.accepted = accepted
        self.total = total
        self.rate_upper_bound = rate_upper_bound


class QuadratureError(HeraldSqueezeError, ArithmeticError):
    """A numerical integration did not converge to the requested
    accuracy; results are never silently truncated."""


class TruncationError(HeraldSqueezeError, ValueError):
    """Photon-number truncation tail exceeds the allowed mass."""


class ConfigError(HeraldSqueezeError, ValueError):
    """Invalid experiment configuration (CLI/config-file level)."""
