import dataclasses
import datetime as dt
from collections import Counter
from random import Random

import pytest

from covidchain.blocks import (
    BlockPolicy,
    Mempool,
    block_hash,
    block_merkle_root,
    finalize,
    header_line,
    header_link_bytes,
    make_genesis,
    mine_block,
    parse_block_text,
    parse_header_line,
    select_validators,
    validate_block,
)
from covidchain.crypto import ZERO_DIGEST, hash_bytes, sign
from covidchain.errors import (
    DuplicateTransaction,
    FinalizeRefused,
    InsufficientValidators,
    MiningError,
    RejectedTransaction,
    ValidationRefused,
)
from covidchain.merkle import merkle_root
from covidchain.transactions import tx_hash, tx_size

from conftest import individual_tx, keypair, seal

TS = dt.datetime(2020, 5, 4, 12, 0, tzinfo=dt.timezone.utc)


def txs(n, start=200):
    return [individual_tx(subject_n=start + i) for i in range(n)]


# -- mempool ------------------------------------------------------------


def test_ingest_preserves_arrival_order():
    pool = Mempool()
    batch = txs(5)
    for tx in batch:
        pool.ingest(tx)
    assert list(pool.queue) == batch


def test_duplicate_tid_rejected():
    pool = Mempool()
    tx = individual_tx()
    pool.ingest(tx)
    with pytest.raises(DuplicateTransaction):
        pool.ingest(tx)


def test_tampered_tx_rejected_at_ingest():
    pool = Mempool()
    tx = individual_tx()
    bad = dataclasses.replace(tx, ds=tx.ds[:-1] + bytes([tx.ds[-1] ^ 1]))
    with pytest.raises(RejectedTransaction):
        pool.ingest(bad)


def test_count_cut_below_threshold_returns_none():
    pool = Mempool()
    for tx in txs(3):
        pool.ingest(tx)
    assert pool.cut(BlockPolicy.by_count(4)) is None
    assert len(pool) == 3


def test_count_cut_takes_head_in_order():
    pool = Mempool()
    batch = txs(5)
    for tx in batch:
        pool.ingest(tx)
    cut = pool.cut(BlockPolicy.by_count(4))
    assert cut == batch[:4]
    assert list(pool.queue) == batch[4:]


def test_byte_cut_at_first_boundary_crossing():
    pool = Mempool()
    batch = txs(6)
    for tx in batch:
        pool.ingest(tx)
    sizes = [tx_size(t) for t in batch]
    threshold = sizes[0] + sizes[1] + sizes[2] // 2  # crosses inside tx 3
    cut = pool.cut(BlockPolicy.by_bytes(threshold))
    # Summation oracle: smallest prefix whose byte total reaches the threshold.
    running, expect_n = 0, 0
    for s in sizes:
        running += s
        expect_n += 1
        if running >= threshold:
            break
    assert cut == batch[:expect_n]
    assert pool.cumulative_size == sum(sizes[expect_n:])


def test_byte_cut_below_threshold_returns_none():
    pool = Mempool()
    for tx in txs(3):
        pool.ingest(tx)
    assert pool.cut(BlockPolicy.by_bytes(1 << 20)) is None


def test_policy_parse():
    assert BlockPolicy.parse("count:4") == BlockPolicy.by_count(4)
    assert BlockPolicy.parse("bytes:1048576") == BlockPolicy.by_bytes(1 << 20)
    with pytest.raises(ValueError):
        BlockPolicy.parse("sideways:9")


# -- mining -------------------------------------------------------------


def test_mine_block_root_matches_merkle_module():
    batch = txs(4)
    proposed = mine_block(batch, ZERO_DIGEST, 1, TS, keypair(10))
    assert proposed.merkle_root == merkle_root([tx_hash(t) for t in batch])


def test_mine_aborts_naming_offending_tid():
    batch = txs(4)
    bad = dataclasses.replace(batch[2], ds=batch[2].ds[:-1] + b"\x00")
    with pytest.raises(MiningError) as excinfo:
        mine_block(batch[:2] + [bad] + batch[3:], ZERO_DIGEST, 1, TS, keypair(10))
    assert excinfo.value.tid == bad.tid


def test_mine_refuses_empty():
    with pytest.raises(MiningError):
        mine_block([], ZERO_DIGEST, 1, TS, keypair(10))


# -- validator selection ------------------------------------------------


def test_two_validators_registry_returns_both():
    pair = select_validators(["a", "b"], Random(1))
    assert set(pair) == {"a", "b"}


def test_selection_deterministic_under_seed():
    registry = list("abcde")
    assert select_validators(registry, Random(7)) == select_validators(registry, Random(7))


def test_selection_requires_two():
    with pytest.raises(InsufficientValidators):
        select_validators(["only"], Random(1))


def test_selection_roughly_uniform_over_pairs():
    registry = list("abcde")  # 10 unordered pairs
    rng = Random(99)
    counts = Counter(frozenset(select_validators(registry, rng)) for _ in range(10_000))
    assert len(counts) == 10
    expected = 10_000 / 10
    sigma = (10_000 * 0.1 * 0.9) ** 0.5
    for pair, n in counts.items():
        assert abs(n - expected) <= 3 * sigma, f"pair {pair} count {n}"


# -- validation and sealing ----------------------------------------------


def test_validator_cosigns_honest_block():
    proposed = mine_block(txs(4), ZERO_DIGEST, 1, TS, keypair(10))
    sig = validate_block(proposed, keypair(11))
    from covidchain.crypto import verify

    assert verify(keypair(11).public, proposed.merkle_root, sig)


def test_validator_refuses_swapped_tx():
    batch = txs(4)
    proposed = mine_block(batch, ZERO_DIGEST, 1, TS, keypair(10))
    swapped = dataclasses.replace(proposed, txs=tuple(batch[:3] + [individual_tx(subject_n=999)]))
    with pytest.raises(ValidationRefused):
        validate_block(swapped, keypair(11))


def test_validator_refuses_forged_miner_signature():
    proposed = mine_block(txs(4), ZERO_DIGEST, 1, TS, keypair(10))
    forged = dataclasses.replace(proposed, miner_sig=sign(keypair(42).private, proposed.merkle_root))
    # txs intact, so the failure must come from the miner-signature check
    with pytest.raises(ValidationRefused, match="miner signature"):
        validate_block(forged, keypair(11))


def test_finalize_seals_with_two_valid_signatures():
    block = seal(txs(4), ZERO_DIGEST, 1)
    h = block.header
    assert h.validator1_key != h.validator2_key
    from covidchain.crypto import verify

    for key, sig in ((h.miner_key, h.miner_sig), (h.validator1_key, h.validator1_sig),
                     (h.validator2_key, h.validator2_sig)):
        assert verify(key, h.merkle_root, sig)
    assert block_merkle_root(block.txs) == h.merkle_root


def test_finalize_refuses_wrong_root_signature():
    proposed = mine_block(txs(4), ZERO_DIGEST, 1, TS, keypair(10))
    good = validate_block(proposed, keypair(11))
    wrong = sign(keypair(12).private, hash_bytes(b"some other root"))
    with pytest.raises(FinalizeRefused):
        finalize(proposed, keypair(11).public, good, keypair(12).public, wrong)


def test_finalize_refuses_identical_validators():
    proposed = mine_block(txs(4), ZERO_DIGEST, 1, TS, keypair(10))
    sig = validate_block(proposed, keypair(11))
    with pytest.raises(FinalizeRefused):
        finalize(proposed, keypair(11).public, sig, keypair(11).public, sig)


# -- genesis and wire form -------------------------------------------------


def test_genesis_shape():
    genesis = make_genesis(keypair(10), keypair(11), keypair(12), TS)
    assert genesis.header.height == 0
    assert genesis.header.prev_hash == ZERO_DIGEST
    assert genesis.txs == ()
    assert genesis.header.merkle_root == hash_bytes(b"")


def test_header_line_roundtrip():
    block = seal(txs(4), ZERO_DIGEST, 1)
    assert parse_header_line(header_line(block.header)) == block.header


def test_block_text_roundtrip():
    block = seal(txs(3), ZERO_DIGEST, 1)
    lines = block.to_text().strip("\n").split("\n")
    assert parse_block_text(lines) == block


def test_link_bytes_exclude_signatures():
    block = seal(txs(2), ZERO_DIGEST, 1)
    h = block.header
    resigned = dataclasses.replace(h, miner_sig=b"\x00" * 64)
    assert header_link_bytes(resigned) == header_link_bytes(h)
    assert block_hash(resigned) == block_hash(h)
    moved = dataclasses.replace(h, height=2)
    assert block_hash(moved) != block_hash(h)
