"""Exception hierarchy shared by the pipeline modules."""


class StvsError(Exception):
    """Base class for every error raised by stvslab."""


class ShapeError(StvsError, ValueError):
    pass


class RangeError(StvsError, ValueError):
    pass


class EmptyInputError(StvsError, ValueError):
    pass


class MissingLabelError(StvsError, ValueError):
    pass


class NumericError(StvsError, ArithmeticError):
    pass


class ConstraintError(StvsError, ValueError):
    """Inconsistent must-link / cannot-link constraint set."""


class InsufficientSeedsError(StvsError):
    pass


class InfeasibleAssignmentError(StvsError):
    def __init__(self, instance_id, blocking):
        self.instance_id = instance_id
        self.blocking = list(blocking)
        super().__init__(
            f"instance {instance_id} has no feasible cluster; blocked by {self.blocking}"
        )


class EmptyClusterError(StvsError):
    def __init__(self, cluster):
        self.cluster = cluster
        super().__init__(f"cluster {cluster} has no members")


class DegenerateLabelsError(StvsError, ValueError):
    pass


class UndefinedMetricError(StvsError, ZeroDivisionError):
    def __init__(self, metric, denominator):
        self.metric = metric
        self.denominator = denominator
        super().__init__(f"{metric} undefined: denominator {denominator} is zero")


class CheckpointError(StvsError, ValueError):
    pass
