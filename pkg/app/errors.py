"""
Exceptions raised by the simulator.
"""


class SimulatorError(Exception):
    """Base class for all simulator errors."""


class ValidationError(SimulatorError):
    """Invalid input, configuration or precondition."""

    def __init__(self, message: str, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + ":\n  - " + "\n  - ".join(self.problems)
        super().__init__(message)


class ComputationError(SimulatorError):
    """A runtime contract was violated while computing."""


class LedgerError(SimulatorError):
    """The run ledger could not be read or written."""
