"""
Exception hierarchy shared by the library modules and the mkv command line
"""


class MkvError(Exception):
    """Base class for every error raised by mkv"""


class ConfigError(MkvError, ValueError):
    """Invalid configuration, parameters or calculator inputs"""


class DomainError(MkvError, ValueError):
    """Argument outside the domain of an operation"""


class DimensionError(MkvError, ValueError):
    """State, measure or model dimensions do not agree"""


class RangeError(MkvError, ValueError):
    """Requested time lies beyond the simulated horizon"""


class NumericalError(MkvError, ArithmeticError):
    """Quadrature or normalization failed to converge"""


class SimulationError(NumericalError):
    """A simulated state became non-finite"""


class EstimationError(NumericalError):
    """A statistical estimate could not be formed from the samples"""


class RenderError(MkvError, ValueError):
    """Chart data cannot be drawn on logarithmic axes"""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception to the command-line exit code
    Args:
        exc: Raised exception
    Returns:
        2 for configuration problems, 3 for numerical ones
    """
    if isinstance(exc, (NumericalError, RenderError)):
        return EXIT_NUMERICAL
    return EXIT_CONFIG
