"""Exception types raised by the toolkit."""


class FlatgenError(Exception):
    pass


class DomainError(FlatgenError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateForceError(FlatgenError):
    """Required force leaves the roll or pitch angle undefined."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class DegenerateAttitudeError(FlatgenError):
    """ZXY Euler sequence degenerates (body y-axis vertical)."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class SingularEffectivenessError(FlatgenError):
    """Flap effectiveness matrix is numerically singular."""

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class SingularConstraintError(FlatgenError):
    """Waypoint constraint system has no unique minimizer."""


class InfeasibleError(FlatgenError):
    """No feasible time scale inside the scan bounds."""

    def __init__(self, msg, profile=None):
        super().__init__(msg)
        self.profile = profile


class SimulationDiverged(FlatgenError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace
