"""Shared exception types; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or arguments (exit code 2)."""


class NumericalAbort(RuntimeError):
    """Non-finite state or diverging computations (exit code 3)."""


class IllPosedTargets(NumericalAbort):
    """Target invariants with non-positive variance."""


class DegenerateField(NumericalAbort):
    """A projection input with no usable scale (zero field / zero variance)."""


class InfeasibleTargets(NumericalAbort):
    """Combined projection targets violating the feasibility precondition."""


class CflViolation(ConfigError):
    """Requested reference-solver time step violates the stability bound."""


class DivergenceError(NumericalAbort):
    """Reference solution blow-up."""
