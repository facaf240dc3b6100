"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DomainError(ValueError):
    """An input value lies outside the mathematical domain of an operation."""


class UsageError(RuntimeError):
    """An API was called in a way its contract forbids (wrong graph, non-scalar root, ...)."""


class ContractError(ValueError):
    """A caller-supplied value violates a documented precondition."""


class ConfigError(ValueError):
    """An experiment configuration is invalid or incomplete."""


class GradCheckError(RuntimeError):
    """A gradient check could not be evaluated (non-finite loss at a perturbed point)."""
