"""Exception hierarchy shared by the simulator, bound evaluators and CLI."""


class GBMAError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GBMAError, ValueError):
    """Dimension mismatch between a parameter vector and an ensemble."""


class SingularityError(GBMAError, ValueError):
    """Localization loss evaluated inside the guard radius of a sensor."""


class NoUniqueMinimizerError(GBMAError, ValueError):
    pass


class ConstantsUnavailableError(GBMAError):
    """Objective constants cannot be derived for this loss kind."""


class NonCertifiedError(GBMAError):
    """A bound or designer was asked to run on non-certified constants."""


class InfeasibleStepsizeError(GBMAError, ValueError):
    """The stepsize violates the feasibility condition of a bound."""


class DivergenceError(GBMAError, FloatingPointError):
    pass


class UndefinedSNRError(GBMAError, ValueError):
    pass


class WindowError(GBMAError, ValueError):
    """Slope window overlaps the noise floor or is too short."""


class ConfigError(GBMAError, ValueError):
    pass


class DatasetFormatError(GBMAError, ValueError):
    pass


class EmptyDatasetError(DatasetFormatError):
    pass
