class UsageError(ValueError):
    """Invalid arguments or preconditions; the CLI maps this to exit status 2."""


class SimulationError(RuntimeError):
    """A run could not be completed (event-count overflow, lost tagged particle)."""
