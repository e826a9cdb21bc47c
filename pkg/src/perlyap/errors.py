"""Exception types shared across the package."""


class PerlyapError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PerlyapError):
    """Invalid or inconsistent experiment configuration."""


class BadPeriod(PerlyapError):
    """A period argument was not a positive integer."""


class SingularClose(PerlyapError):
    """M^k - I is singular, so no unique closing point exists."""


class CapExceeded(PerlyapError):
    """Periodic-point enumeration would exceed the configured cap.

    The required count is carried so callers can report partial results.
    """

    def __init__(self, required, cap):
        super().__init__(f"enumeration needs {required} points, cap is {cap}")
        self.required = required
        self.cap = cap


class Overflow(PerlyapError):
    """A raw cocycle product left the representable range; use log-space."""


class DegenerateOrbit(PerlyapError):
    """A QR diagonal underflowed during spectrum accumulation."""


class NotPeriodic(PerlyapError):
    """Point fails the periodicity precondition at the requested period."""


class ClusterError(PerlyapError):
    """Lyapunov exponent groups are not separable at the working tolerance."""


class TailTooLarge(PerlyapError):
    """Truncated series tail exceeds the accuracy budget; raise N_trunc."""


class NoSplitting(PerlyapError):
    """Single Lyapunov exponent: the cone construction is vacuous."""


class HypothesisViolated(PerlyapError):
    """An analytic hypothesis (e.g. eps < gamma*alpha) does not hold."""


class NoReturn(PerlyapError):
    """No close return found below beta within the configured search caps."""
