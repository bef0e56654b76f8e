"""Exception hierarchy shared across the package."""


class BaidError(Exception):
    """Root of every error raised by this package."""


class EncodingError(BaidError, ValueError):
    pass


class InputError(BaidError, ValueError):
    pass


# -- proof engine -----------------------------------------------------------


class RegistryError(BaidError):
    pass


class ProveError(BaidError):
    pass


class ConstraintViolation(ProveError):
    """A guest program assertion failed."""


class StepBound(ProveError):
    pass


class BrokenChain(ProveError):
    """The prior envelope handed to ``prove`` does not verify."""


# -- provenance (guest-side assertions, hence ConstraintViolation) ----------


class ProvenanceError(ConstraintViolation):
    step = "?"


class CertChain(ProvenanceError):
    step = "a"


class ServerIdentity(ProvenanceError):
    step = "a"


class KeyConfirm(ProvenanceError):
    step = "b"


class AeadAuth(ProvenanceError):
    step = "c"


class CommitmentMismatch(ProvenanceError):
    step = "d"


# -- identity ---------------------------------------------------------------


class BindingError(BaidError):
    pass


# -- ledger -----------------------------------------------------------------


class LedgerError(BaidError):
    pass


class KycRejected(LedgerError):
    pass


class AlreadyRegistered(LedgerError):
    pass


class AlreadyBound(LedgerError):
    pass


class Unauthorized(LedgerError):
    pass


class TerminalState(LedgerError):
    pass


class NotFound(LedgerError, KeyError):
    pass


# -- credentials ------------------------------------------------------------


class AuthGateFailed(BaidError):
    pass
