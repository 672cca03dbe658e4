"""One node's append-only chain, derived indexes, persistence, and queries.

Appends are fully validated (link, three header signatures, merkle root,
every transaction); loads from disk are structural only, so a tampered file
loads fine and is then condemned by ``validate_chain``. Status and zone
indexes are maintained incrementally and are always reconstructible from the
chain alone.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

from . import crypto
from .blocks import (
    Block,
    block_hash,
    block_merkle_root,
    parse_block_text,
)
from .errors import (
    ChainBreakError,
    DecodeError,
    InvalidBlockError,
    LedgerParseError,
)
from .transactions import (
    CovidStatus,
    EpidRecord,
    IndividualTx,
    LocationTx,
    verify_tx,
)


@dataclass(frozen=True)
class StatusEntry:
    """Effective individual record for one subject digest."""

    status: CovidStatus
    date: dt.date
    time: dt.time
    tid: bytes

    def sort_key(self):
        # Latest (date, time) wins; equal timestamps break toward the
        # lexicographically greater tid.
        return (self.date, self.time, self.tid)


@dataclass(frozen=True)
class StatusQueryResult:
    found: bool
    status: CovidStatus | None = None
    as_of: dt.datetime | None = None


@dataclass(frozen=True)
class ChainValidation:
    """Outcome of a whole-chain audit; falsy when anything failed."""

    ok: bool
    first_bad_height: int | None = None
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


class NodeLedger:
    """A stakeholder's copy of the chain plus status/zone lookup indexes."""

    def __init__(self, genesis: Block):
        if genesis.header.height != 0:
            raise InvalidBlockError("genesis block must have height 0")
        if genesis.header.prev_hash != crypto.ZERO_DIGEST:
            raise InvalidBlockError("genesis block must have an all-zero previous hash")
        self._chain: list[Block] = [genesis]
        self._status_index: dict[bytes, StatusEntry] = {}
        self._zone_index: dict[bytes, LocationTx] = {}
        self._index_block(genesis)

    @property
    def chain(self) -> tuple[Block, ...]:
        return tuple(self._chain)

    @property
    def height(self) -> int:
        return self._chain[-1].header.height

    def tip_hash(self) -> bytes:
        return block_hash(self._chain[-1].header)

    # -- appends -------------------------------------------------------

    def append_block(self, block: Block) -> None:
        """Validate and append one sealed block, then update indexes."""
        header = block.header
        if header.height != self.height + 1:
            raise ChainBreakError(
                f"block height {header.height} does not extend tip {self.height}"
            )
        if header.prev_hash != self.tip_hash():
            raise ChainBreakError("previous-block hash does not match the tip")
        problem = _block_problem(block)
        if problem:
            raise InvalidBlockError(problem)
        self._chain.append(block)
        self._index_block(block)

    def _index_block(self, block: Block) -> None:
        for tx in block.txs:
            if isinstance(tx, IndividualTx):
                entry = StatusEntry(status=tx.status, date=tx.date, time=tx.time, tid=tx.tid)
                current = self._status_index.get(tx.subject)
                if current is None or entry.sort_key() > current.sort_key():
                    self._status_index[tx.subject] = entry
            else:
                current = self._zone_index.get(tx.zone_id)
                if current is None or _zone_key(tx) > _zone_key(current):
                    self._zone_index[tx.zone_id] = tx

    def rebuild_indexes(self) -> tuple[dict[bytes, StatusEntry], dict[bytes, LocationTx]]:
        """Recompute both indexes from the raw chain (soundness checks)."""
        fresh = NodeLedger.__new__(NodeLedger)
        fresh._status_index = {}
        fresh._zone_index = {}
        for block in self._chain:
            fresh._index_block(block)
        return fresh._status_index, fresh._zone_index

    @property
    def status_index(self) -> dict[bytes, StatusEntry]:
        return dict(self._status_index)

    @property
    def zone_index(self) -> dict[bytes, LocationTx]:
        return dict(self._zone_index)

    # -- queries ---------------------------------------------------------

    def status_of(self, subject_digest: bytes) -> StatusEntry | None:
        return self._status_index.get(subject_digest)

    def query_status(self, subject_pub: bytes) -> StatusQueryResult:
        """Effective status for the holder of ``subject_pub`` (looked up by
        hashed key; the raw key never enters the ledger)."""
        entry = self._status_index.get(crypto.hash_bytes(subject_pub))
        if entry is None:
            return StatusQueryResult(found=False)
        as_of = dt.datetime.combine(entry.date, entry.time, tzinfo=dt.timezone.utc)
        return StatusQueryResult(found=True, status=entry.status, as_of=as_of)

    def active_zones(self) -> list[LocationTx]:
        """Latest declaration per zone, every color included; sorted by
        zone id so output order is stable."""
        return sorted(self._zone_index.values(), key=lambda z: z.zone_id)

    def read_epidemiology(
        self, ca_private: bytes
    ) -> list[tuple[bytes, CovidStatus, EpidRecord]]:
        """Decrypt every sealed epidemiology payload on the chain.

        Only the central authority's key works; any other key raises on the
        first record rather than returning partial output. Results are keyed
        by subject digest only.
        """
        out = []
        for block in self._chain:
            for tx in block.txs:
                if not isinstance(tx, IndividualTx):
                    continue
                plain = crypto.decrypt(ca_private, tx.s_enc)
                out.append((tx.subject, tx.status, EpidRecord.from_canonical(plain)))
        return out


def _zone_key(tx: LocationTx):
    return (tx.date, tx.time, tx.tid)


def _block_problem(block: Block) -> str | None:
    """First integrity violation inside one sealed block, or None."""
    h = block.header
    if h.validator1_key == h.validator2_key:
        return "validator keys are not distinct"
    try:
        if not crypto.verify(h.miner_key, h.merkle_root, h.miner_sig):
            return "miner signature does not verify"
        if not crypto.verify(h.validator1_key, h.merkle_root, h.validator1_sig):
            return "validator1 signature does not verify"
        if not crypto.verify(h.validator2_key, h.merkle_root, h.validator2_sig):
            return "validator2 signature does not verify"
    except DecodeError as exc:  # malformed header key/signature bytes
        return f"undecodable header field: {exc}"
    if block_merkle_root(block.txs) != h.merkle_root:
        return "merkle root does not match transactions"
    for tx in block.txs:
        if not verify_tx(tx):
            return f"transaction {tx.tid.hex()[:16]} fails verification"
    return None


def validate_chain(ledger: NodeLedger) -> ChainValidation:
    """Audit every link, signature, and merkle root in the whole chain."""
    chain = ledger.chain
    if not chain:
        return ChainValidation(ok=False, first_bad_height=0, reason="empty chain")
    genesis = chain[0]
    if genesis.header.height != 0 or genesis.header.prev_hash != crypto.ZERO_DIGEST:
        return ChainValidation(ok=False, first_bad_height=0, reason="malformed genesis")
    for i, block in enumerate(chain):
        if block.header.height != i:
            return ChainValidation(ok=False, first_bad_height=i, reason="height mismatch")
        if i > 0 and block.header.prev_hash != block_hash(chain[i - 1].header):
            return ChainValidation(ok=False, first_bad_height=i, reason="broken link")
        problem = _block_problem(block)
        if problem:
            return ChainValidation(ok=False, first_bad_height=i, reason=problem)
    return ChainValidation(ok=True)


# -- persistence ------------------------------------------------------------

def serialize_ledger(ledger: NodeLedger) -> str:
    """Canonical file form: block records in height order."""
    return "".join(block.to_text() for block in ledger.chain)


def ledger_digest(ledger: NodeLedger) -> bytes:
    return crypto.hash_bytes(serialize_ledger(ledger).encode("utf-8"))


def save(ledger: NodeLedger, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_ledger(ledger))


def load(path) -> NodeLedger:
    with open(path, "r", encoding="utf-8") as fh:
        return deserialize_ledger(fh.read())


def deserialize_ledger(text: str) -> NodeLedger:
    """Structural parse of a persisted ledger (no cryptographic checks;
    callers that care run ``validate_chain`` on the result)."""
    blocks = []
    record: list[str] = []
    record_start = 1
    for line_no, line in enumerate(text.split("\n"), start=1):
        if line == "":
            if record:
                blocks.append(parse_block_text(record, record_start))
                record = []
            record_start = line_no + 1
        else:
            record.append(line)
    if record:
        # A well-formed file ends every record with a blank line.
        raise LedgerParseError("unterminated block record (truncated file?)", record_start)
    if not blocks:
        raise LedgerParseError("no block records found", 1)
    ledger = NodeLedger.__new__(NodeLedger)
    ledger._chain = []
    ledger._status_index = {}
    ledger._zone_index = {}
    for block in blocks:
        ledger._chain.append(block)
        ledger._index_block(block)
    return ledger
