"""Exception hierarchy shared by all modules."""


class HarmonicError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(HarmonicError):
    pass


class PoleProximity(HarmonicError):
    """Evaluation point lies on (or numerically at) a pole."""


class NotAPole(HarmonicError):
    pass


class DegenerateMapping(HarmonicError):
    """The mapping is analytic/anti-analytic in a way the method cannot handle."""


class DegeneratePole(HarmonicError):
    """A pole violates ``|a_{-n}| != |b_{-n}|``."""


class HitCritical(HarmonicError):
    pass


class TraceFailure(HarmonicError):
    pass


class GuardViolation(HarmonicError):
    """Query point too close to a caustic for a reliable winding number."""


class InitialPhaseFailure(HarmonicError):
    pass


class RayRejected(HarmonicError):
    """The current ray cannot be turned into a transport path."""


class StepFailure(HarmonicError):
    def __init__(self, mode, message=""):
        super().__init__(f"{mode}: {message}" if message else mode)
        self.mode = mode


class SpawnFailure(HarmonicError):
    pass


class SingularZeroSuspected(HarmonicError):
    """The target lies on (or within the guard distance of) the caustics."""


class Exhausted(HarmonicError):
    """All restarts were used without producing a transport path."""
