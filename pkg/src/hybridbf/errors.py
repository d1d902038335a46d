"""Exception hierarchy shared by all modules."""


class HybridBFError(Exception):
    """Base class for package errors."""


class ContractError(HybridBFError, ValueError):
    """An input violates a documented precondition."""


class ScenarioError(HybridBFError, ValueError):
    """A scenario violates a physical or structural constraint."""


class ConditioningError(HybridBFError, ArithmeticError):
    """A matrix that must be inverted is (numerically) singular.

    Attributes
    ----------
    matrix : str
        Name of the offending matrix, e.g. ``"Y_s + Y_ss"``.
    """

    def __init__(self, matrix, detail=""):
        self.matrix = matrix
        msg = f"{matrix} is singular or ill-conditioned"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class DegenerateModelError(ConditioningError):
    """Synthetic model came out singular; resample the seed."""


class ParseError(HybridBFError, ValueError):
    """Malformed input file. Carries the 1-based line and the field."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        super().__init__(message)


class SchemaError(ParseError):
    """Well-formed file whose content does not match the schema."""


class TrustRegionError(HybridBFError, ValueError):
    """Step too large for the first-order Neumann expansion."""


class InfeasibleStartError(HybridBFError, RuntimeError):
    """Current point violates the linearized constraints at z = 0.

    The analog stage cannot proceed; feasibility must be restored by the
    digital stage.
    """
