"""Exceptions shared across the simulation package."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 3)."""


class SimulationDiverged(RuntimeError):
    """A state trajectory left its validity bounds (CLI exit code 2).

    Carries the offending control tick and, when available, the last log
    record so the failure point can be inspected.
    """

    def __init__(self, message, tick=None, record=None):
        super().__init__(message)
        self.tick = tick
        self.record = record
