import datetime as dt
from random import Random

import pytest

from covidchain import (
    Block,
    CovidStatus,
    EpidRecord,
    KeyPair,
    NodeLedger,
    ZoneType,
    finalize,
    generate_keypair,
    make_genesis,
    make_individual_tx,
    make_location_tx,
    mine_block,
    validate_block,
)

DAY = dt.date(2020, 5, 4)
NOON = dt.time(12, 0, 0)


def keypair(n: int) -> KeyPair:
    """Deterministic throwaway keypair number ``n``."""
    return generate_keypair(n.to_bytes(32, "big"))


EPID = EpidRecord(age=34, gender="F", blood_group="O+", state_province="Assam",
                  conditions=("diabetes",))


def individual_tx(subject_n=100, status=CovidStatus.NEGATIVE, day=DAY, time=NOON,
                  signer=None, ca=None, rng=None):
    signer = signer or keypair(1)
    ca = ca or keypair(2)
    return make_individual_tx(
        keypair(subject_n).public, status, day, time, EPID, ca.public, signer,
        rng or Random(7),
    )


def location_tx(lat=26.1446, lon=91.7362, radius=500, zone_type=ZoneType.RED,
                day=DAY, time=NOON, signer=None):
    return make_location_tx(lat, lon, radius, day, time, zone_type, signer or keypair(3))


def seal(txs, prev_hash, height, miner=None, v1=None, v2=None,
         timestamp=None) -> Block:
    miner = miner or keypair(10)
    v1 = v1 or keypair(11)
    v2 = v2 or keypair(12)
    ts = timestamp or dt.datetime(2020, 5, 4, 12, 0, tzinfo=dt.timezone.utc)
    proposed = mine_block(txs, prev_hash, height, ts, miner)
    return finalize(
        proposed,
        v1.public, validate_block(proposed, v1),
        v2.public, validate_block(proposed, v2),
    )


def build_ledger(n_blocks=3, txs_per_block=3, rng_seed=99) -> NodeLedger:
    """Genesis plus ``n_blocks`` content blocks of individual records."""
    rng = Random(rng_seed)
    ts = dt.datetime(2020, 5, 4, 8, 0, tzinfo=dt.timezone.utc)
    ledger = NodeLedger(make_genesis(keypair(10), keypair(11), keypair(12), ts))
    subject = 1000
    for height in range(1, n_blocks + 1):
        txs = [
            individual_tx(subject_n=subject + i,
                          status=rng.choice(list(CovidStatus)),
                          time=dt.time(8 + height, i, 0),
                          rng=rng)
            for i in range(txs_per_block)
        ]
        subject += txs_per_block
        ledger.append_block(seal(txs, ledger.tip_hash(), height))
    return ledger


@pytest.fixture
def rng():
    return Random(4321)


@pytest.fixture
def ledger():
    return build_ledger()
