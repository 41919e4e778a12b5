"""Exception hierarchy.

The CLI maps ``ConfigurationError`` / ``RejectedInputError`` to exit code 2 and
``NumericalError`` subclasses to exit code 3.
"""


class PdflowError(Exception):
    pass


class RejectedInputError(PdflowError, ValueError):
    """Malformed argument: wrong dimension, negative penalty, misaligned grids."""


class ConfigurationError(PdflowError, ValueError):
    """Invalid or incomplete configuration.

    ``field`` names the offending config entry when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class DomainError(PdflowError, ValueError):
    pass


class DegenerateProblemError(PdflowError):
    def __init__(self, message, rank_defect=None):
        super().__init__(message)
        self.rank_defect = rank_defect


class ResolutionError(PdflowError):
    pass


class NumericalError(PdflowError):
    """Integration failure; ``last_good`` is the last accepted state when known."""

    def __init__(self, message, t=None, norm_x=None, last_good=None):
        super().__init__(message)
        self.t = t
        self.norm_x = norm_x
        self.last_good = last_good


class StiffnessError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass
