"""Exception hierarchy shared across the package."""


class MBAError(Exception):
    """Base class for all package errors."""


class DomainError(MBAError, ValueError):
    """An argument lies outside the domain of the operation."""


class ArchitectureError(MBAError):
    """A received block set leaves some position without a block."""

    def __init__(self, position, message=None):
        self.position = position
        super().__init__(message or f"no block received for position {position}")


class UndefinedRateError(MBAError):
    """A block has no requesting device, so its broadcast rate is undefined."""


class InfiniteLatencyError(MBAError):
    """A requested block would be sent at zero rate."""


class CapacityError(MBAError):
    """The instance is too large for an exhaustive method."""


class InfeasibleError(MBAError):
    """The optimisation instance admits no feasible solution."""


class InfeasibleTaskError(InfeasibleError):
    """A task's own model cannot meet its QoS threshold."""

    def __init__(self, task, score, threshold):
        self.task = task
        self.score = score
        self.threshold = threshold
        super().__init__(
            f"task {task}: task-specific model scores {score:.6g} < threshold {threshold:.6g}"
        )


class InfeasibleBudgetError(InfeasibleError):
    """The energy budget does not exceed the wideband energy floor."""

    def __init__(self, budget, floor):
        self.budget = budget
        self.floor = floor
        super().__init__(f"energy budget {budget:.6g} J <= energy floor {floor:.6g} J")


class DegenerateGameError(MBAError):
    """A utility game gives a task-specific model a non-positive total score."""


class SolverError(MBAError):
    """A numerical solver failed (iteration cap, bracket failure, LP failure)."""


class ConfigError(MBAError, ValueError):
    """An experiment configuration is invalid or unsupported."""
