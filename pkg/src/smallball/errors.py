"""Exception hierarchy shared by the whole package.

Exit-code mapping used by the CLI:
  SpecError         -> 1   (bad inputs, violated preconditions, unsupported combos)
  NumericsError     -> 2   (algorithm failed to converge or produced garbage)
  VerificationError -> 3   (a verification step ran fine but its check failed)
"""


class SmallballError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class SpecError(SmallballError):
    """Invalid argument, violated precondition, or unsupported combination."""

    exit_code = 1


class NumericsError(SmallballError):
    """A numerical routine failed (no convergence, loss of positivity, ...)."""

    exit_code = 2


class VerificationError(SmallballError):
    """A verification run completed but one of its checks did not pass."""

    exit_code = 3


class FitDegenerateError(NumericsError):
    """Regression design is too ill-conditioned to separate the requested terms."""


class EmptyCurveError(NumericsError):
    """Monte Carlo produced zero hits at every radius; the curve is unusable."""
