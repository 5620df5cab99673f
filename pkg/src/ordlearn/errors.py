"""Exception hierarchy shared by all modules."""


class OrdLearnError(Exception):
    """Base class for every error raised by this package."""


class InvalidPrimitive(OrdLearnError, ValueError):
    """A state space, utility table or signal model failed validation."""


class InvalidBelief(InvalidPrimitive):
    pass


class UnknownAction(OrdLearnError, KeyError):
    pass


class NotBayesPlausible(InvalidPrimitive):
    """Posterior entries cannot be averaged back to the prior with full support."""


class SignalOutOfDomain(OrdLearnError, ValueError):
    pass


class NonExhaustivePartition(OrdLearnError, ValueError):
    pass


class Unsupported(OrdLearnError):
    """The requested check or operation is not defined for this backend."""


class ImplicationViolation(OrdLearnError):
    """A set of verdicts contradicts the implication lattice between conditions."""


class PathologicalPartition(OrdLearnError):
    """The strategy partition has more thresholds than any sane model produces."""


class OffPathAction(OrdLearnError):
    """The action has probability zero under the current strategy partition."""


class UnknownScenario(OrdLearnError, KeyError):
    pass
