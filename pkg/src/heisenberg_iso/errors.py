"""Exception types raised across the toolkit."""


class HeisenbergError(Exception):
    """Base class for all toolkit errors."""


class SingularPoint(HeisenbergError):
    """A stencil or quadrature node landed on a field's singular set."""


class NonFinite(HeisenbergError):
    """A field evaluation overflowed or produced NaN."""


class StepTooCoarse(HeisenbergError):
    """Richardson levels disagree by more than the scheme tolerance."""


class UnknownKind(HeisenbergError):
    pass


class QuadratureBudgetExceeded(HeisenbergError):
    """Requested tolerance not reached within the node budget."""


class NonIntegrableSingularity(HeisenbergError):
    """Dyadic layers around a singular point stopped decaying."""


class ZeroVolumeRegion(HeisenbergError):
    pass


class DegeneratePerimeter(HeisenbergError):
    pass


class NotApplicable(HeisenbergError):
    """The half-volume hypothesis of the relative isoperimetric check fails."""


class ConfigInvalid(HeisenbergError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
