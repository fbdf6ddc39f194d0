class SwarmGoalError(Exception):
    """Base class for every error raised by this package."""


class ScenarioParseError(SwarmGoalError):
    pass


class ScenarioValidationError(SwarmGoalError):
    pass


class UnknownAgentError(SwarmGoalError, KeyError):
    pass


class NumericError(SwarmGoalError, ArithmeticError):
    """Non-finite inputs or a root finder that could not certify its result."""


class InfeasibleAssignmentError(SwarmGoalError):
    def __init__(self, message, agent=None):
        super().__init__(message)
        self.agent = agent


class ProtocolInvariantError(SwarmGoalError):
    """A state the protocol's guarantees rule out (e.g. an empty feasible set)."""


class RepairRefused(SwarmGoalError):
    """Raised when repair is requested for a trajectory with nothing to repair."""
