"""Challenge-response digital pass: prove key possession, then gate access
on the prover's effective ledger status.

The exchange between a verifier and a subject:

  1. verifier draws a fresh 32-byte challenge
  2. verifier sends the challenge, asking for a status proof
  3. subject signs the hash of the challenge with their private key
  4. subject returns the signature and their public key
  5. verifier checks the signature against that key
  6. on success, the verifier looks up the hashed key on its own ledger
  7. clear or unknown subjects are allowed; positive or quarantined denied

Either party can run the verifier side against the other; it is one protocol
instantiated twice. Challenges are single-use: a second check of the same
challenge raises instead of answering.
"""

from __future__ import annotations

import datetime as dt
import enum
import secrets
import threading
from dataclasses import dataclass
from random import Random

from . import crypto
from .crypto import KeyPair
from .errors import DecodeError, ReplayError
from .ledger import NodeLedger
from .transactions import CovidStatus

CHALLENGE_SIZE = 32

_DENYING_STATUSES = frozenset({CovidStatus.POSITIVE, CovidStatus.IN_QUARANTINE})


class Verdict(enum.Enum):
    ALLOW = "ALLOW"
    DENY = "DENY"
    AUTH_FAIL = "AUTH_FAIL"


class Challenge:
    """Single-use random challenge; consumption is atomic."""

    def __init__(self, rand: bytes, issued_at: dt.datetime, ttl: float | None = None):
        self.rand = rand
        self.issued_at = issued_at
        self.ttl = ttl
        self._consumed = False
        self._lock = threading.Lock()

    @property
    def consumed(self) -> bool:
        return self._consumed

    def consume(self) -> None:
        with self._lock:
            if self._consumed:
                raise ReplayError("challenge has already been checked")
            self._consumed = True


@dataclass(frozen=True)
class PassResponse:
    """Subject's proof: signature over the hashed challenge, plus the
    public key it should verify against."""

    x: bytes
    subject_pub: bytes

    def to_frame(self) -> str:
        return f"RESP|{self.x.hex()}|{self.subject_pub.hex()}"


@dataclass(frozen=True)
class AccessDecision:
    """Verdict plus the only ledger fact a successful exchange reveals:
    the status token. A failed authentication reveals nothing."""

    verdict: Verdict
    reason: str
    status_seen: CovidStatus | None = None

    def to_frame(self) -> str:
        return f"DEC|{self.verdict.value}|{self.reason}"


def issue_challenge(
    rng: Random | None = None,
    now: dt.datetime | None = None,
    ttl: float | None = None,
) -> Challenge:
    """Draw a fresh 32-byte challenge. ``ttl`` (seconds) is an optional
    expiry window, disabled by default."""
    rand = rng.randbytes(CHALLENGE_SIZE) if rng else secrets.token_bytes(CHALLENGE_SIZE)
    issued_at = now if now is not None else dt.datetime.now(dt.timezone.utc)
    return Challenge(rand=rand, issued_at=issued_at, ttl=ttl)


def challenge_frame(challenge: Challenge) -> str:
    return f"CHAL|{challenge.rand.hex()}"


def respond(challenge_rand: bytes, subject: KeyPair) -> PassResponse:
    """Subject side: sign the hash of the received challenge."""
    if len(challenge_rand) != CHALLENGE_SIZE:
        raise DecodeError(f"challenge must be {CHALLENGE_SIZE} bytes")
    proof = crypto.sign(subject.private, crypto.hash_bytes(challenge_rand))
    return PassResponse(x=proof, subject_pub=subject.public)


def check_response(
    challenge: Challenge,
    response: PassResponse,
    now: dt.datetime | None = None,
) -> bool:
    """Verifier side: consume the challenge and check the proof.

    Raises ReplayError when the challenge was checked before; an expired
    challenge simply fails authentication.
    """
    challenge.consume()
    if challenge.ttl is not None:
        now = now if now is not None else dt.datetime.now(dt.timezone.utc)
        if (now - challenge.issued_at).total_seconds() > challenge.ttl:
            return False
    try:
        return crypto.verify(
            response.subject_pub, crypto.hash_bytes(challenge.rand), response.x
        )
    except DecodeError:
        return False


def decide_access(
    ledger: NodeLedger,
    response: PassResponse,
    authenticated: bool,
) -> AccessDecision:
    """Map authentication outcome and effective status to an access verdict.

    Positive or in-quarantine subjects are denied; negative, out-of-quarantine,
    and never-recorded subjects are allowed (the latter flagged "no-record").
    No status is disclosed unless authentication succeeded.
    """
    if not authenticated:
        return AccessDecision(verdict=Verdict.AUTH_FAIL, reason="auth-failed")
    result = ledger.query_status(response.subject_pub)
    if not result.found:
        return AccessDecision(verdict=Verdict.ALLOW, reason="no-record")
    if result.status in _DENYING_STATUSES:
        return AccessDecision(verdict=Verdict.DENY, reason="restricted", status_seen=result.status)
    return AccessDecision(verdict=Verdict.ALLOW, reason="clear", status_seen=result.status)


def run_pass_exchange(
    verifier_ledger: NodeLedger,
    subject: KeyPair,
    rng: Random | None = None,
    now: dt.datetime | None = None,
) -> tuple[AccessDecision, list[str]]:
    """Run the whole exchange between two local parties.

    Returns the decision and the wire frames that crossed the (simulated)
    proximity channel, in order.
    """
    challenge = issue_challenge(rng=rng, now=now)
    response = respond(challenge.rand, subject)
    authenticated = check_response(challenge, response, now=now)
    decision = decide_access(verifier_ledger, response, authenticated)
    frames = [challenge_frame(challenge), response.to_frame(), decision.to_frame()]
    return decision, frames
