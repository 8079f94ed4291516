"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line layer can map
error classes to process exit codes without a lookup table.
"""


class HinfConnectError(Exception):
    exit_code = 1


class InvalidInputError(HinfConnectError, ValueError):
    """Malformed, non-finite or dimension-inconsistent input."""

    exit_code = 2


class SingularInputError(InvalidInputError):
    """A matrix that must be invertible is (numerically) singular."""


class PreconditionError(HinfConnectError):
    """An operation was called outside its domain (e.g. unstable loop)."""

    exit_code = 3


class NotABridgeError(PreconditionError):
    pass


class BridgeInfeasibleError(PreconditionError):
    pass


class AssumptionViolationError(PreconditionError):
    pass


class NumericalFailure(HinfConnectError):
    exit_code = 4


class NoStabilizingSolutionError(NumericalFailure):
    """Hamiltonian has eigenvalues on the imaginary axis."""


class CertificateError(NumericalFailure):
    """No certificate with the configured strictness margins was found."""


class InfiniteH2NormError(PreconditionError):
    pass


class LiftError(NumericalFailure):
    pass


class SynthesisError(NumericalFailure):
    pass


class InvariantViolation(NumericalFailure):
    pass
