"""Exception hierarchy shared by the solvers, experiment drivers and CLI."""


class QDCavityError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class TruncationError(QDCavityError):
    """Population of the top Fock level exceeded the allowed bound."""

    code = "truncation_overflow"


class ConvergenceError(QDCavityError):
    """Adaptive step control failed (step underflow or step budget exhausted)."""

    code = "solver_failure"


class SteadyStateError(QDCavityError):
    """No unique steady state (no damping, or extra conserved quantities)."""

    code = "solver_failure"


class StateValidityError(QDCavityError):
    """A density matrix or state vector violated trace/Hermiticity/positivity bounds."""

    code = "invalid_state"


class FitError(QDCavityError):
    """A lifetime or period could not be extracted from a trace."""

    code = "fit_failure"


class ConfigError(QDCavityError):
    """Configuration failed schema validation.

    ``path`` is the dotted location of the offending field, e.g. ``params.g``.
    """

    code = "schema_error"

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnsupportedFeatureError(QDCavityError):
    code = "unsupported_feature"


class UnitError(QDCavityError, ValueError):
    code = "unit_error"
