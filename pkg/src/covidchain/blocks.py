"""Mempool ingestion, block cutting, mining, dual validation, and sealing.

Transactions queue strictly in arrival order and are bundled in that exact
order; interleaved sources stay interleaved, which is what keeps records
unlinkable to their origin. A block proposal carries the miner's signature
over the merkle root; two distinct, randomly chosen validators re-verify
everything and co-sign before the block seals.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from random import Random
from typing import Sequence, TypeVar

from . import crypto
from .crypto import KeyPair
from .errors import (
    DuplicateTransaction,
    FinalizeRefused,
    InsufficientValidators,
    LedgerParseError,
    MiningError,
    RejectedTransaction,
    ValidationRefused,
)
from .merkle import merkle_root
from .transactions import Transaction, parse_tx_line, tx_hash, tx_size, verify_tx

VALIDATORS_PER_BLOCK = 2

# Root recorded for the (empty) genesis block, where no leaves exist.
EMPTY_BLOCK_ROOT = crypto.hash_bytes(b"")

_TS_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def format_timestamp(ts: dt.datetime) -> str:
    return ts.astimezone(dt.timezone.utc).strftime(_TS_FORMAT)


def parse_timestamp(token: str, line_no: int = 1) -> dt.datetime:
    try:
        return dt.datetime.strptime(token, _TS_FORMAT).replace(tzinfo=dt.timezone.utc)
    except ValueError:
        raise LedgerParseError(f"bad timestamp {token!r}", line_no) from None


@dataclass(frozen=True)
class BlockPolicy:
    """When to cut a block: after ``threshold`` transactions ("count" mode)
    or once their combined wire size reaches ``threshold`` bytes."""

    mode: str
    threshold: int

    def __post_init__(self):
        if self.mode not in ("count", "bytes"):
            raise ValueError(f"unknown block policy mode {self.mode!r}")
        if self.threshold <= 0:
            raise ValueError("block threshold must be positive")

    @classmethod
    def by_count(cls, n: int = 4) -> "BlockPolicy":
        return cls("count", n)

    @classmethod
    def by_bytes(cls, n: int = 1 << 20) -> "BlockPolicy":
        return cls("bytes", n)

    @classmethod
    def parse(cls, spec: str) -> "BlockPolicy":
        mode, _, value = spec.partition(":")
        try:
            return cls(mode, int(value))
        except ValueError:
            raise ValueError(f"bad block policy spec {spec!r} (want count:N or bytes:N)") from None

    def spec(self) -> str:
        return f"{self.mode}:{self.threshold}"


class Mempool:
    """Arrival-ordered queue of verified pending transactions."""

    def __init__(self):
        self._queue: list[Transaction] = []
        self._tids: set[bytes] = set()
        self.cumulative_size = 0

    def __len__(self) -> int:
        return len(self._queue)

    @property
    def queue(self) -> tuple[Transaction, ...]:
        return tuple(self._queue)

    def ingest(self, tx: Transaction) -> None:
        """Append ``tx`` at the tail. Invalid signatures and duplicate ids
        are refused; order of accepted transactions is strict arrival order."""
        if not verify_tx(tx):
            raise RejectedTransaction(f"transaction {tx.tid.hex()[:16]} fails verification")
        if tx.tid in self._tids:
            raise DuplicateTransaction(f"transaction {tx.tid.hex()[:16]} already pending")
        self._queue.append(tx)
        self._tids.add(tx.tid)
        self.cumulative_size += tx_size(tx)

    def cut(self, policy: BlockPolicy) -> list[Transaction] | None:
        """Remove and return the head segment once the policy threshold is
        met, else None. Count mode takes exactly ``threshold`` transactions;
        bytes mode takes up to and including the first transaction that
        crosses the byte boundary."""
        if policy.mode == "count":
            if len(self._queue) < policy.threshold:
                return None
            n = policy.threshold
        else:
            if self.cumulative_size < policy.threshold:
                return None
            total, n = 0, 0
            for tx in self._queue:
                total += tx_size(tx)
                n += 1
                if total >= policy.threshold:
                    break
        cut, self._queue = self._queue[:n], self._queue[n:]
        for tx in cut:
            self._tids.discard(tx.tid)
            self.cumulative_size -= tx_size(tx)
        return cut


@dataclass(frozen=True)
class ProposedBlock:
    """Miner-signed bundle awaiting validator co-signatures."""

    height: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: dt.datetime
    miner_key: bytes
    miner_sig: bytes
    txs: tuple[Transaction, ...]


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: dt.datetime
    miner_key: bytes
    miner_sig: bytes
    validator1_key: bytes
    validator1_sig: bytes
    validator2_key: bytes
    validator2_sig: bytes


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple[Transaction, ...]

    def to_text(self) -> str:
        lines = [header_line(self.header)]
        lines.extend(tx.to_line() for tx in self.txs)
        return "\n".join(lines) + "\n\n"


def header_line(h: BlockHeader) -> str:
    return "|".join((
        "BLK",
        str(h.height),
        h.prev_hash.hex(),
        h.merkle_root.hex(),
        format_timestamp(h.timestamp),
        h.miner_key.hex(),
        h.miner_sig.hex(),
        h.validator1_key.hex(),
        h.validator1_sig.hex(),
        h.validator2_key.hex(),
        h.validator2_sig.hex(),
    ))


def header_link_bytes(h: BlockHeader) -> bytes:
    """Identity-bearing header content: the header line minus the three
    signature fields. Its hash is what the next block links to."""
    return "|".join((
        "BLK",
        str(h.height),
        h.prev_hash.hex(),
        h.merkle_root.hex(),
        format_timestamp(h.timestamp),
        h.miner_key.hex(),
        h.validator1_key.hex(),
        h.validator2_key.hex(),
    )).encode("utf-8")


def block_hash(h: BlockHeader) -> bytes:
    return crypto.hash_bytes(header_link_bytes(h))


def block_merkle_root(txs: Sequence[Transaction]) -> bytes:
    return merkle_root([tx_hash(t) for t in txs]) if txs else EMPTY_BLOCK_ROOT


def mine_block(
    txs: Sequence[Transaction],
    prev_hash: bytes,
    height: int,
    timestamp: dt.datetime,
    miner: KeyPair,
) -> ProposedBlock:
    """Bundle verified transactions, compute the merkle root, and sign it."""
    if not txs:
        raise MiningError("refusing to mine an empty block")
    for tx in txs:
        if not verify_tx(tx):
            raise MiningError(f"transaction {tx.tid.hex()} fails verification", tid=tx.tid)
    root = block_merkle_root(txs)
    return ProposedBlock(
        height=height,
        prev_hash=prev_hash,
        merkle_root=root,
        timestamp=timestamp,
        miner_key=miner.public,
        miner_sig=crypto.sign(miner.private, root),
        txs=tuple(txs),
    )


V = TypeVar("V")


def select_validators(registry: Sequence[V], rng: Random, k: int = VALIDATORS_PER_BLOCK) -> tuple[V, ...]:
    """Pick ``k`` distinct validators uniformly without replacement."""
    if len(registry) < k:
        raise InsufficientValidators(f"need {k} validators, have {len(registry)}")
    return tuple(rng.sample(list(registry), k))


def validate_block(proposed: ProposedBlock, validator: KeyPair) -> bytes:
    """Re-verify every transaction, the merkle root, and the miner's
    signature; co-sign the root if all hold."""
    for tx in proposed.txs:
        if not verify_tx(tx):
            raise ValidationRefused(
                f"transaction {tx.tid.hex()} fails verification", tid=tx.tid
            )
    if block_merkle_root(proposed.txs) != proposed.merkle_root:
        raise ValidationRefused("merkle root does not match transactions")
    if not crypto.verify(proposed.miner_key, proposed.merkle_root, proposed.miner_sig):
        raise ValidationRefused("miner signature does not verify")
    return crypto.sign(validator.private, proposed.merkle_root)


def finalize(
    proposed: ProposedBlock,
    v1_key: bytes,
    v1_sig: bytes,
    v2_key: bytes,
    v2_sig: bytes,
) -> Block:
    """Seal the block after checking both validator signatures."""
    if v1_key == v2_key:
        raise FinalizeRefused("validators must be distinct")
    for which, key, sig in (("validator1", v1_key, v1_sig), ("validator2", v2_key, v2_sig)):
        if not crypto.verify(key, proposed.merkle_root, sig):
            raise FinalizeRefused(f"{which} signature does not verify")
    header = BlockHeader(
        height=proposed.height,
        prev_hash=proposed.prev_hash,
        merkle_root=proposed.merkle_root,
        timestamp=proposed.timestamp,
        miner_key=proposed.miner_key,
        miner_sig=proposed.miner_sig,
        validator1_key=v1_key,
        validator1_sig=v1_sig,
        validator2_key=v2_key,
        validator2_sig=v2_sig,
    )
    return Block(header=header, txs=proposed.txs)


def make_genesis(miner: KeyPair, v1: KeyPair, v2: KeyPair, timestamp: dt.datetime) -> Block:
    """Height-0 block: zero previous hash, no transactions, signed by the
    miner and both founding validators over the empty-body root."""
    proposed = ProposedBlock(
        height=0,
        prev_hash=crypto.ZERO_DIGEST,
        merkle_root=EMPTY_BLOCK_ROOT,
        timestamp=timestamp,
        miner_key=miner.public,
        miner_sig=crypto.sign(miner.private, EMPTY_BLOCK_ROOT),
        txs=(),
    )
    return finalize(
        proposed,
        v1.public, crypto.sign(v1.private, EMPTY_BLOCK_ROOT),
        v2.public, crypto.sign(v2.private, EMPTY_BLOCK_ROOT),
    )


def parse_header_line(line: str, line_no: int = 1) -> BlockHeader:
    parts = line.rstrip("\n").split("|")
    if len(parts) != 11 or parts[0] != "BLK":
        raise LedgerParseError("malformed block header line", line_no)
    hex_fields = parts[2:4] + parts[5:]
    if any(p != p.lower() for p in hex_fields):
        raise LedgerParseError("non-canonical hex in block header", line_no)
    try:
        height = int(parts[1])
        fields = [bytes.fromhex(p) for p in hex_fields]
    except ValueError:
        raise LedgerParseError("bad number or hex in block header", line_no) from None
    prev_hash, root, miner_key, miner_sig, v1_key, v1_sig, v2_key, v2_sig = fields
    return BlockHeader(
        height=height,
        prev_hash=prev_hash,
        merkle_root=root,
        timestamp=parse_timestamp(parts[4], line_no),
        miner_key=miner_key,
        miner_sig=miner_sig,
        validator1_key=v1_key,
        validator1_sig=v1_sig,
        validator2_key=v2_key,
        validator2_sig=v2_sig,
    )


def parse_block_text(lines: Sequence[str], first_line_no: int = 1) -> Block:
    """Parse one block record: a header line followed by transaction lines."""
    header = parse_header_line(lines[0], first_line_no)
    txs = tuple(
        parse_tx_line(line, first_line_no + i) for i, line in enumerate(lines[1:], start=1)
    )
    return Block(header=header, txs=txs)
