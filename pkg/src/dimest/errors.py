class InputError(ValueError):
    """Invalid arguments: bad shapes, out-of-range radii, violated rate constraints."""


class EstimationError(RuntimeError):
    """The data do not support the requested estimate (no pairs, empty balls, ...)."""
