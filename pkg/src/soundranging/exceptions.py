"""Exception types raised by the solvers."""


class SoundRangingError(Exception):
    """Base class for every solver failure."""


class InvalidInstance(SoundRangingError, ValueError):
    """The problem statement itself is malformed."""


class PivotTooSmall(InvalidInstance):
    """Sensor ``index`` is (numerically) in the span of the earlier sensors."""

    def __init__(self, index, pivot, tol):
        self.index = index
        self.pivot = pivot
        self.tol = tol
        super().__init__(
            f"sensor {index} has pivot {pivot:.3e} <= {tol:.3e}; "
            "sensors are linearly dependent"
        )


class NotOnSphere(InvalidInstance):
    pass


class EmptyDelta(InvalidInstance):
    pass


class UnknownScenario(InvalidInstance, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MissingArrivalTime(InvalidInstance):
    pass


class NoSolution(SoundRangingError):
    """No candidate survives the root and residual filters."""


class NegativeDiscriminant(NoSolution):
    def __init__(self, discriminant, tol):
        self.discriminant = discriminant
        self.tol = tol
        super().__init__(
            f"discriminant {discriminant:.6e} below -{tol:.3e}: "
            "no real emission time at this truncation"
        )


class NoRootInDelta(NoSolution):
    pass


class EmptyIntersection(NoSolution):
    pass


class SeriesUndetermined(SoundRangingError):
    """Convergence of a coefficient series could not be decided; raise the truncation."""


class NotConverging(SoundRangingError):
    def __init__(self, delta, tol):
        self.delta = delta
        self.tol = tol
        super().__init__(
            f"vertex iterates still move by {delta:.3e} > {tol:.3e}; raise the truncation"
        )


class Mixed(SoundRangingError):
    """A candidate satisfies neither the forward nor the time-reversed equations."""

    def __init__(self, source_bad, dual_bad, max_source, max_dual):
        self.source_bad = list(source_bad)
        self.dual_bad = list(dual_bad)
        self.max_source = max_source
        self.max_dual = max_dual
        super().__init__(
            f"mixed candidate: forward residual {max_source:.3e} "
            f"(sensors {self.source_bad[:8]}), reversed residual {max_dual:.3e} "
            f"(sensors {self.dual_bad[:8]})"
        )
