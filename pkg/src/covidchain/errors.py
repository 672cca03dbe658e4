"""Exception taxonomy shared across the package.

Every error raised by library code derives from CovidChainError so callers
(CLI, simulator) can distinguish domain failures from bugs.
"""


class CovidChainError(Exception):
    """Base class for all domain errors."""


# -- crypto layer -----------------------------------------------------------

class InvalidSeedError(CovidChainError):
    """Key seed has the wrong length."""


class DecodeError(CovidChainError):
    """Key, signature, or ciphertext bytes are structurally malformed."""


class DecryptionError(CovidChainError):
    """Ciphertext cannot be opened with the supplied private key."""


# -- transactions -----------------------------------------------------------

class ValidationError(CovidChainError):
    """A field value violates its declared range or format."""


# -- merkle -----------------------------------------------------------------

class EmptyMerkleInput(CovidChainError):
    """Root requested over zero leaves."""


# -- block pipeline ---------------------------------------------------------

class RejectedTransaction(CovidChainError):
    """Transaction refused at ingestion (bad signature or signer role)."""


class DuplicateTransaction(CovidChainError):
    """Transaction with this id is already pending."""


class MiningError(CovidChainError):
    """Block assembly aborted; ``tid`` names the offending transaction."""

    def __init__(self, message: str, tid: bytes | None = None):
        super().__init__(message)
        self.tid = tid


class InsufficientValidators(CovidChainError):
    """Fewer than two validator identities available."""


class ValidationRefused(CovidChainError):
    """A validator refused to co-sign; ``tid`` set when a transaction is at fault."""

    def __init__(self, message: str, tid: bytes | None = None):
        super().__init__(message)
        self.tid = tid


class FinalizeRefused(CovidChainError):
    """Block sealing refused (bad or duplicate validator signatures)."""


# -- ledger -----------------------------------------------------------------

class ChainBreakError(CovidChainError):
    """Appended block does not link to the current tip."""


class InvalidBlockError(CovidChainError):
    """Appended block fails signature, merkle, or transaction checks."""


class LedgerParseError(CovidChainError):
    """Persisted ledger text is malformed; ``line`` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# -- pass verification ------------------------------------------------------

class ReplayError(CovidChainError):
    """A challenge was presented for checking more than once."""


# -- simulator --------------------------------------------------------------

class ScriptError(CovidChainError):
    """Scenario script is malformed; ``event_index`` is 0-based."""

    def __init__(self, message: str, event_index: int):
        super().__init__(f"event {event_index}: {message}")
        self.event_index = event_index


# -- cli --------------------------------------------------------------------

class LedgerLockError(CovidChainError):
    """Another process holds the ledger write lock."""
