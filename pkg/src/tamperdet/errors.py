"""Exception types shared across the toolkit."""


class TamperdetError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(TamperdetError, ValueError):
    """Invalid configuration value, weight setting or layer geometry."""


class InputError(TamperdetError, ValueError):
    """Malformed input data (bad shapes, ranges or non-finite values)."""


class ContractViolationError(TamperdetError, ValueError):
    """A caller broke an operation precondition (e.g. Dice on an empty mask)."""


class EvaluationError(TamperdetError, RuntimeError):
    """A metric cannot be computed from the given samples."""


class GenerationError(TamperdetError, RuntimeError):
    """Synthetic data generation could not satisfy its placement constraints."""


class DivergenceError(TamperdetError, RuntimeError):
    """Training produced a non-finite loss and was aborted."""
