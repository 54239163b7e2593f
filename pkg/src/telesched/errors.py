class InvariantViolation(RuntimeError):
    """A simulator or model invariant failed; indicates a bug, not bad input."""


class StabilityError(ValueError):
    """Unbounded buffer evaluated at a load with no steady state."""
