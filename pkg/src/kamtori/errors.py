"""Exception taxonomy shared across the package."""


class KamtoriError(Exception):
    """Base class for all package-specific failures."""


class CenterMismatch(KamtoriError):
    """Two series (or a series and a domain) disagree on the action expansion point."""


class DomainError(KamtoriError):
    """A domain parameter is out of range for the requested operation."""


class SerializationError(KamtoriError):
    """A series record cannot be decoded."""


class ScheduleError(KamtoriError):
    """Parameter regime outside the iteration's validity (bad exponent denominators etc.)."""


class SmallDivisorViolation(KamtoriError):
    """A retained Fourier mode has a divisor below the certified lower bound."""

    def __init__(self, k, l, value, bound):
        self.k = tuple(int(x) for x in k)
        self.l = int(l)
        self.value = float(value)
        self.bound = float(bound)
        super().__init__(
            f"divisor {value:.6e} at mode (k={self.k}, l={self.l}) "
            f"below bound {bound:.6e}"
        )


class StepTooLarge(KamtoriError):
    """A transformation is too far from the identity for the contraction solve."""


class NormBlowup(KamtoriError):
    """A scheduled norm inequality failed beyond the configured slack."""

    def __init__(self, check_id, observed, allowed, where=""):
        self.check_id = str(check_id)
        self.observed = float(observed)
        self.allowed = float(allowed)
        self.where = str(where)
        super().__init__(
            f"norm check '{check_id}' failed{' at ' + where if where else ''}: "
            f"observed {observed:.6e} > allowed {allowed:.6e}"
        )


class AnchorLost(KamtoriError):
    """The frequency-matching Newton iteration left its trust ball."""


class GridTooCoarse(KamtoriError):
    """A sampling grid cannot resolve the spectral content it is asked to differentiate."""


class QuadratureError(KamtoriError):
    """A quadrature did not converge to the requested accuracy."""


class ConfigError(KamtoriError):
    """Configuration document failed validation; carries every error found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))
