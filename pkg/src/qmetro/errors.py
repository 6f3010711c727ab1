"""Exception hierarchy shared by every qmetro module."""


class QMetroError(Exception):
    """Base class for all library errors."""


class NotHermitian(QMetroError, ValueError):
    pass


class NoConvergence(QMetroError, ArithmeticError):
    pass


class ZeroVector(QMetroError, ValueError):
    pass


class DimensionMismatch(QMetroError, ValueError):
    pass


class InvalidState(QMetroError, ValueError):
    pass


class InvalidPovm(QMetroError, ValueError):
    pass


class NotProjector(QMetroError, ValueError):
    pass


class ScheduleMismatch(QMetroError, ValueError):
    pass


class NegativeProbability(QMetroError, ArithmeticError):
    """A probability fell below the round-off clamp window."""


class ZeroSpread(QMetroError, ValueError):
    """The Hamiltonian has a single eigenvalue; the field cannot be sensed."""


class NonRegular(QMetroError, ArithmeticError):
    """An outcome with vanishing probability carries a nonzero derivative."""


class CrossCheckFailure(QMetroError, ArithmeticError):
    """Analytic and finite-difference derivatives disagree."""


class InsensitiveObservable(QMetroError, ValueError):
    pass


class AllOutcomesRare(QMetroError, ValueError):
    pass


class ZeroInformation(QMetroError, ValueError):
    pass


class EigenstateInput(QMetroError, ValueError):
    """The probe state is an eigenstate of the sensing Hamiltonian."""


class PolicyGap(QMetroError, KeyError):
    """A reachable outcome-history prefix has no policy entry."""

    def __str__(self):
        return Exception.__str__(self)


class Blowup(QMetroError, RuntimeError):
    """Outcome-history enumeration exceeded the size cap."""


class CapExceeded(QMetroError, ValueError):
    pass
