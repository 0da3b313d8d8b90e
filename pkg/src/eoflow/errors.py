"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A user-supplied parameter violates its documented constraints."""


class ShapeError(ValueError):
    """Array lengths or matrix dimensions do not match."""


class DomainError(ValueError):
    """A point lies outside the domain of the requested evaluation."""


class ConstraintError(ValueError):
    """Conflicting Dirichlet values were prescribed for one degree of freedom."""


class SingularMatrixError(RuntimeError):
    """Direct factorization hit a singular pivot.

    ``dof`` carries the best-effort index of the offending row (-1 when the
    factorization backend did not expose one).
    """

    def __init__(self, message, dof=-1):
        super().__init__(message)
        self.dof = dof


class StepError(RuntimeError):
    """A time step failed; carries the linear solver report when available."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(ValueError):
    """Configuration text failed to parse or validate.

    ``line`` is the 1-based line number of the first offending entry
    (0 when the error is not tied to a specific line).
    """

    def __init__(self, message, line=0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line
