"""Exception types raised by the package."""


class FireworksError(Exception):
    """Base class for all package errors."""


class ModelEvaluationError(FireworksError):
    """A kernel produced a non-finite value."""

    def __init__(self, name, index, value):
        self.name = name
        self.index = tuple(int(i) for i in index)
        self.value = float(value)
        super().__init__(
            f"kernel {name!r} is not finite at node {self.index}: {self.value!r}")


class NumericalBlowupError(FireworksError):
    """A non-finite value appeared while applying a mapping."""

    def __init__(self, time_index):
        self.time_index = int(time_index)
        super().__init__(f"non-finite value at time node {self.time_index}")


class NonConvergenceError(FireworksError):
    """Picard iteration hit ``max_iter`` without reaching ``tol``."""

    def __init__(self, diagnostics):
        self.diagnostics = diagnostics
        last = diagnostics.residual_history[-1] if diagnostics.residual_history else float("nan")
        super().__init__(
            f"no convergence after {diagnostics.iterations} iterations "
            f"(last residual {last:.3e})")


class ValidityError(FireworksError):
    """A field violates a precondition such as nonnegativity."""


class ConfigError(FireworksError):
    """Scenario configuration could not be parsed or validated."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field {field}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
