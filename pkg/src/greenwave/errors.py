"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario, demand or training configuration is malformed."""


class ProtocolError(RuntimeError):
    """A controller broke the decision protocol (e.g. out-of-range action)."""


class SimulationError(RuntimeError):
    """An internal simulator invariant was violated; the episode is aborted."""


class DimensionError(ValueError):
    """Array shapes do not match what a network or checkpoint expects."""


class JoinError(ValueError):
    """Evaluation tables cannot be joined (different demands or seeds)."""
