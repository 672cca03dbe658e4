import dataclasses
import datetime as dt
from random import Random

import pytest

from covidchain import crypto
from covidchain.errors import LedgerParseError, ValidationError
from covidchain.transactions import (
    CipherText,
    CovidStatus,
    EpidRecord,
    ZoneType,
    canonical_encode_individual,
    make_individual_tx,
    make_location_tx,
    parse_tx_line,
    tx_hash,
    verify_tx,
    zone_id_for,
)

from conftest import DAY, EPID, individual_tx, keypair, location_tx

# Frozen from an independent formatting + hash oracle over the same fields.
IND_TID_GOLDEN = "e7a1a07205c1644dc9e40fe71cf2cb1cdff5e66ce470ce86c6a6edcfc296d844"
ZONE_ID_GOLDEN = "17394ec56d7082e91247ea70734e904c24550e18f7a646b9c9fa845949329b26"
LOC_TID_GOLDEN = "450307d202e5b9166e28995df612c826a497ecf815f34fb310044a46d27980b3"

FIXED_SENC = CipherText(recipient_fp=bytes([0xAA]) * 32, data=bytes([0xBB]) * 48)


def fixture_encoding(status=CovidStatus.NEGATIVE):
    return canonical_encode_individual(
        bytes([0x11]) * 32, status, dt.date(2020, 5, 4), dt.time(9, 30, 0), FIXED_SENC
    )


def test_canonical_encoding_matches_independent_formatter():
    # Same fields, formatted by hand with no shared code.
    expected = (
        "11" * 32 + "|-ive|2020-05-04|09:30:00|" + "aa" * 32 + "bb" * 48
    ).encode("ascii")
    assert fixture_encoding() == expected


def test_canonical_encoding_deterministic():
    assert fixture_encoding() == fixture_encoding()


def test_status_change_changes_encoding():
    assert fixture_encoding(CovidStatus.IN_QUARANTINE) != fixture_encoding()


def test_individual_tid_golden():
    assert crypto.hash_bytes(fixture_encoding()).hex() == IND_TID_GOLDEN


def test_make_individual_tx_verifies():
    assert verify_tx(individual_tx())


def test_status_difference_changes_tid():
    a = individual_tx(status=CovidStatus.NEGATIVE)
    b = individual_tx(status=CovidStatus.POSITIVE)
    assert a.tid != b.tid


def test_individual_tx_mutation_of_each_field_breaks_verification():
    tx = individual_tx()
    mutations = {
        "tid": crypto.hash_bytes(b"other"),
        "subject": crypto.hash_bytes(b"someone else"),
        "status": CovidStatus.POSITIVE,
        "date": DAY + dt.timedelta(days=1),
        "time": dt.time(23, 59, 59),
        "s_enc": CipherText(recipient_fp=tx.s_enc.recipient_fp,
                            data=tx.s_enc.data[:-1] + b"\x00"),
        "signer_key": keypair(42).public,
        "ds": tx.ds[:-1] + bytes([tx.ds[-1] ^ 1]),
    }
    for field, bad_value in mutations.items():
        mutated = dataclasses.replace(tx, **{field: bad_value})
        assert not verify_tx(mutated), f"mutating {field} went undetected"


def test_foreign_signature_rejected():
    tx = individual_tx()
    foreign = dataclasses.replace(tx, ds=crypto.sign(keypair(42).private, tx.tid))
    assert not verify_tx(foreign)


def test_zone_id_golden():
    assert zone_id_for(26.144600, 91.736200).hex() == ZONE_ID_GOLDEN


def test_location_tid_golden():
    tx = location_tx(lat=26.1446, lon=91.7362, radius=500,
                     day=dt.date(2020, 5, 4), time=dt.time(9, 30, 0))
    assert tx.tid.hex() == LOC_TID_GOLDEN
    assert verify_tx(tx)


def test_zone_id_ignores_everything_but_coordinates():
    a = location_tx(day=dt.date(2020, 5, 4), radius=500, zone_type=ZoneType.RED)
    b = location_tx(day=dt.date(2020, 6, 1), radius=900, zone_type=ZoneType.GREEN)
    assert a.zone_id == b.zone_id
    assert a.tid != b.tid


def test_coordinate_and_radius_validation():
    with pytest.raises(ValidationError):
        location_tx(lat=91.0)
    with pytest.raises(ValidationError):
        location_tx(lon=-180.5)
    with pytest.raises(ValidationError):
        location_tx(radius=0)


def test_individual_wire_line_roundtrip():
    tx = individual_tx()
    again = parse_tx_line(tx.to_line())
    assert again == tx
    assert verify_tx(again)


def test_location_wire_line_roundtrip():
    tx = location_tx()
    again = parse_tx_line(tx.to_line())
    assert again == tx
    assert tx_hash(again) == tx_hash(tx)


def test_parse_rejects_malformed_lines():
    with pytest.raises(LedgerParseError):
        parse_tx_line("IND|too|few|fields")
    with pytest.raises(LedgerParseError):
        parse_tx_line("XYZ|what|is|this")
    good = individual_tx().to_line()
    with pytest.raises(LedgerParseError):
        parse_tx_line(good.replace("-ive", "~ive"))


def test_tampered_wire_line_fails_verification():
    tx = individual_tx(status=CovidStatus.NEGATIVE)
    tampered = parse_tx_line(tx.to_line().replace("|-ive|", "|OQ|"))
    assert not verify_tx(tampered)


def test_tid_uniqueness_over_random_population():
    rng = Random(2024)
    seen = set()
    for _ in range(10_000):
        subject = rng.randbytes(32)
        status = rng.choice(list(CovidStatus))
        date = dt.date(2020, 1, 1) + dt.timedelta(days=rng.randrange(365))
        time = dt.time(rng.randrange(24), rng.randrange(60), rng.randrange(60))
        senc = CipherText(recipient_fp=rng.randbytes(32), data=rng.randbytes(48))
        tid = crypto.hash_bytes(canonical_encode_individual(subject, status, date, time, senc))
        seen.add(tid)
    assert len(seen) == 10_000


def test_no_raw_subject_key_or_phone_in_encodings(rng):
    phone = "+91-9900112233"
    subject = crypto.enroll_identity(phone, rng)
    tx = make_individual_tx(
        subject.public, CovidStatus.NEGATIVE, DAY, dt.time(9, 0), EPID,
        keypair(2).public, keypair(1), rng,
    )
    line = tx.to_line()
    assert subject.public.hex() not in line
    assert phone not in line
    loc_line = location_tx().to_line()
    assert phone not in loc_line


def test_epid_canonical_roundtrip():
    rec = EpidRecord(age=61, gender="M", blood_group="AB-", state_province="Goa",
                     conditions=("asthma", "hypertension"))
    assert EpidRecord.from_canonical(rec.canonical()) == rec
    no_conds = EpidRecord(age=9, gender="X", blood_group="O-", state_province="Kerala")
    assert EpidRecord.from_canonical(no_conds.canonical()) == no_conds


def test_epid_rejects_delimiters_and_bad_age():
    with pytest.raises(ValidationError):
        EpidRecord(age=-1, gender="F", blood_group="O+", state_province="Assam")
    with pytest.raises(ValidationError):
        EpidRecord(age=30, gender="F;x", blood_group="O+", state_province="Assam")
    with pytest.raises(ValidationError):
        EpidRecord(age=30, gender="F", blood_group="O+", state_province="As|sam")


def test_epid_has_no_identifying_fields():
    fields = {f.name for f in dataclasses.fields(EpidRecord)}
    assert fields == {"age", "gender", "blood_group", "state_province", "conditions"}
