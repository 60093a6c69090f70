"""Exception types shared across the package.

The CLI maps these onto exit codes: validation/parameter/shape/contract
problems exit 1, training divergence exits 2, bundle and other I/O
failures exit 3.
"""


class ShapeError(ValueError):
    """Operand dimensions do not chain."""


class ContractError(ValueError):
    """An operation was called outside its contract (e.g. non-scalar root)."""


class DeterminismError(RuntimeError):
    """A function expected to be deterministic produced differing values."""


class ValidationError(ValueError):
    """Input data violates a structural requirement (asymmetry, bad labels, ...)."""


class ParameterError(ValueError):
    """A configuration or call parameter is out of range."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""

    def __init__(self, message, iteration=None, report=None):
        super().__init__(message)
        self.iteration = iteration
        self.report = report


class BundleError(OSError):
    """A graph bundle or checkpoint failed to parse or verify."""
