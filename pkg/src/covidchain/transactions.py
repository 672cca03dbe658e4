"""The two transaction kinds: individual status records and zone declarations.

Both are content-addressed: a transaction id (``tid``) is the hash of the
canonical pipe-joined field encoding, and the issuer's signature is made over
the tid. Canonical byte formats are fixed here once so that ids, merkle
leaves, and wire lines are bit-exact everywhere:

  * dates ``YYYY-MM-DD``, times ``HH:MM:SS``, both UTC
  * coordinates sign-prefixed with exactly six decimals (``+26.144600``)
  * radius as integer meters
  * binary fields as lowercase hex

Wire form is one record per line: ``IND|`` or ``LOC|`` followed by the
canonical fields, then the signer public key and signature in hex. That line
is exactly what gets hashed into merkle leaves and persisted to disk.
"""

from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass
from random import Random

from . import crypto
from .crypto import CipherText, KeyPair
from .errors import DecodeError, LedgerParseError, ValidationError


class CovidStatus(enum.Enum):
    POSITIVE = "+ive"
    NEGATIVE = "-ive"
    IN_QUARANTINE = "IQ"
    OUT_OF_QUARANTINE = "OQ"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "CovidStatus":
        try:
            return cls(token)
        except ValueError:
            raise ValidationError(f"unknown status token {token!r}") from None


class ZoneType(enum.Enum):
    RED = "RED"
    ORANGE = "ORANGE"
    GREEN = "GREEN"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "ZoneType":
        try:
            return cls(token.upper())
        except ValueError:
            raise ValidationError(f"unknown zone type {token!r}") from None


_EPID_FORBIDDEN = set(";=,|\n")


def _check_token(name: str, value: str) -> None:
    if not value or _EPID_FORBIDDEN & set(value):
        raise ValidationError(f"{name} must be a non-empty token without ';=,|'")


@dataclass(frozen=True)
class EpidRecord:
    """Minimal per-case attributes for aggregate analysis.

    Deliberately has no name, phone, or street-address fields; anything
    identifying simply cannot be expressed in this record.
    """

    age: int
    gender: str
    blood_group: str
    state_province: str
    conditions: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.age, int) or self.age < 0:
            raise ValidationError("age must be a non-negative integer")
        _check_token("gender", self.gender)
        _check_token("blood_group", self.blood_group)
        _check_token("state_province", self.state_province)
        for cond in self.conditions:
            _check_token("condition", cond)
        object.__setattr__(self, "conditions", tuple(self.conditions))

    def canonical(self) -> bytes:
        cond = ",".join(self.conditions)
        text = (
            f"age={self.age};gender={self.gender};blood={self.blood_group};"
            f"state={self.state_province};cond={cond}"
        )
        return text.encode("utf-8")

    @classmethod
    def from_canonical(cls, raw: bytes) -> "EpidRecord":
        fields = {}
        for part in raw.decode("utf-8").split(";"):
            key, _, value = part.partition("=")
            fields[key] = value
        try:
            conds = tuple(c for c in fields["cond"].split(",") if c)
            return cls(
                age=int(fields["age"]),
                gender=fields["gender"],
                blood_group=fields["blood"],
                state_province=fields["state"],
                conditions=conds,
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"malformed epidemiology record: {exc}") from exc


def format_date(date: dt.date) -> str:
    return date.isoformat()


def format_time(time: dt.time) -> str:
    return time.replace(microsecond=0).isoformat()


def format_coord(value: float) -> str:
    return f"{value:+.6f}"


def _parse_date(token: str, line_no: int) -> dt.date:
    try:
        return dt.date.fromisoformat(token)
    except ValueError:
        raise LedgerParseError(f"bad date {token!r}", line_no) from None


def _parse_time(token: str, line_no: int) -> dt.time:
    try:
        return dt.time.fromisoformat(token)
    except ValueError:
        raise LedgerParseError(f"bad time {token!r}", line_no) from None


def _parse_hex(token: str, name: str, line_no: int) -> bytes:
    # Canonical rendering is lowercase; anything else is not a valid record.
    if token != token.lower():
        raise LedgerParseError(f"non-canonical hex in {name}", line_no)
    try:
        return bytes.fromhex(token)
    except ValueError:
        raise LedgerParseError(f"bad hex in {name}", line_no) from None


@dataclass(frozen=True)
class IndividualTx:
    """One person's status record. The subject appears only as the digest of
    their public key; the epidemiology payload is sealed to the central
    authority's key."""

    tid: bytes
    subject: bytes
    status: CovidStatus
    date: dt.date
    time: dt.time
    s_enc: CipherText
    signer_key: bytes
    ds: bytes

    def canonical_fields(self) -> str:
        return canonical_encode_individual(
            self.subject, self.status, self.date, self.time, self.s_enc
        ).decode("utf-8")

    def to_line(self) -> str:
        return f"IND|{self.canonical_fields()}|{self.signer_key.hex()}|{self.ds.hex()}"


@dataclass(frozen=True)
class LocationTx:
    """An authority's zone declaration: a colored circle on the map."""

    tid: bytes
    zone_id: bytes
    lat: float
    lon: float
    radius: int
    date: dt.date
    time: dt.time
    zone_type: ZoneType
    signer_key: bytes
    ds: bytes

    def canonical_fields(self) -> str:
        return canonical_encode_location(
            self.zone_id, self.lat, self.lon, self.radius,
            self.date, self.time, self.zone_type,
        ).decode("utf-8")

    def to_line(self) -> str:
        return f"LOC|{self.canonical_fields()}|{self.signer_key.hex()}|{self.ds.hex()}"


Transaction = IndividualTx | LocationTx


def canonical_encode_individual(
    subject: bytes,
    status: CovidStatus,
    date: dt.date,
    time: dt.time,
    s_enc: CipherText,
) -> bytes:
    """Fixed-order field bytes whose hash is the individual transaction id."""
    parts = (
        subject.hex(),
        status.token,
        format_date(date),
        format_time(time),
        s_enc.to_bytes().hex(),
    )
    return "|".join(parts).encode("utf-8")


def canonical_encode_location(
    zone_id: bytes,
    lat: float,
    lon: float,
    radius: int,
    date: dt.date,
    time: dt.time,
    zone_type: ZoneType,
) -> bytes:
    parts = (
        zone_id.hex(),
        format_coord(lat),
        format_coord(lon),
        str(radius),
        format_date(date),
        format_time(time),
        zone_type.token,
    )
    return "|".join(parts).encode("utf-8")


def zone_id_for(lat: float, lon: float) -> bytes:
    """Zone identity: hash of the canonical coordinates, nothing else.

    Independent of radius, color, and time, so repeat declarations for one
    place share an id.
    """
    payload = f"{format_coord(lat)}|{format_coord(lon)}".encode("utf-8")
    return crypto.hash_bytes(payload)


def make_individual_tx(
    subject_pub: bytes,
    status: CovidStatus,
    date: dt.date,
    time: dt.time,
    epid: EpidRecord,
    ca_pub: bytes,
    signer: KeyPair,
    rng: Random | None = None,
) -> IndividualTx:
    """Build and sign a status record for the holder of ``subject_pub``."""
    time = time.replace(microsecond=0)
    s_enc = crypto.encrypt(ca_pub, epid.canonical(), rng)
    subject = crypto.hash_bytes(subject_pub)
    tid = crypto.hash_bytes(canonical_encode_individual(subject, status, date, time, s_enc))
    return IndividualTx(
        tid=tid,
        subject=subject,
        status=status,
        date=date,
        time=time,
        s_enc=s_enc,
        signer_key=signer.public,
        ds=crypto.sign(signer.private, tid),
    )


def make_location_tx(
    lat: float,
    lon: float,
    radius: int,
    date: dt.date,
    time: dt.time,
    zone_type: ZoneType,
    signer: KeyPair,
) -> LocationTx:
    """Build and sign a zone declaration."""
    if not -90.0 <= lat <= 90.0:
        raise ValidationError(f"latitude {lat} out of range [-90, 90]")
    if not -180.0 <= lon <= 180.0:
        raise ValidationError(f"longitude {lon} out of range [-180, 180]")
    if not isinstance(radius, int) or radius <= 0:
        raise ValidationError("radius must be a positive integer (meters)")
    time = time.replace(microsecond=0)
    zone_id = zone_id_for(lat, lon)
    tid = crypto.hash_bytes(
        canonical_encode_location(zone_id, lat, lon, radius, date, time, zone_type)
    )
    return LocationTx(
        tid=tid,
        zone_id=zone_id,
        lat=lat,
        lon=lon,
        radius=radius,
        date=date,
        time=time,
        zone_type=zone_type,
        signer_key=signer.public,
        ds=crypto.sign(signer.private, tid),
    )


def verify_tx(tx: Transaction) -> bool:
    """True iff the tid recomputes from the fields and the signature checks."""
    try:
        if isinstance(tx, IndividualTx):
            expected = crypto.hash_bytes(
                canonical_encode_individual(tx.subject, tx.status, tx.date, tx.time, tx.s_enc)
            )
        else:
            if tx.zone_id != zone_id_for(tx.lat, tx.lon):
                return False
            expected = crypto.hash_bytes(
                canonical_encode_location(
                    tx.zone_id, tx.lat, tx.lon, tx.radius, tx.date, tx.time, tx.zone_type
                )
            )
        if tx.tid != expected:
            return False
        return crypto.verify(tx.signer_key, tx.tid, tx.ds)
    except DecodeError:
        return False


def tx_hash(tx: Transaction) -> bytes:
    """Digest of the wire line; the merkle leaf for this transaction."""
    return crypto.hash_bytes(tx.to_line().encode("utf-8"))


def tx_size(tx: Transaction) -> int:
    """Size in bytes of the wire form, as counted against block thresholds."""
    return len(tx.to_line().encode("utf-8"))


def parse_tx_line(line: str, line_no: int = 1) -> Transaction:
    """Parse one wire line back into a transaction (structural only; run
    verify_tx for cryptographic checks)."""
    parts = line.rstrip("\n").split("|")
    tag = parts[0] if parts else ""
    if tag == "IND":
        if len(parts) != 8:
            raise LedgerParseError(f"IND record has {len(parts)} fields, want 8", line_no)
        _, subject_h, status_t, date_t, time_t, senc_h, signer_h, ds_h = parts
        try:
            s_enc = CipherText.from_bytes(_parse_hex(senc_h, "s_enc", line_no))
        except DecodeError as exc:
            raise LedgerParseError(str(exc), line_no) from exc
        subject = _parse_hex(subject_h, "subject", line_no)
        try:
            status = CovidStatus.from_token(status_t)
        except ValidationError:
            raise LedgerParseError(f"bad status token {status_t!r}", line_no) from None
        date = _parse_date(date_t, line_no)
        time = _parse_time(time_t, line_no)
        tid = crypto.hash_bytes(canonical_encode_individual(subject, status, date, time, s_enc))
        return IndividualTx(
            tid=tid, subject=subject, status=status, date=date, time=time,
            s_enc=s_enc,
            signer_key=_parse_hex(signer_h, "signer_key", line_no),
            ds=_parse_hex(ds_h, "ds", line_no),
        )
    if tag == "LOC":
        if len(parts) != 10:
            raise LedgerParseError(f"LOC record has {len(parts)} fields, want 10", line_no)
        _, zone_h, lat_t, lon_t, radius_t, date_t, time_t, ztype_t, signer_h, ds_h = parts
        try:
            lat, lon = float(lat_t), float(lon_t)
            radius = int(radius_t)
        except ValueError:
            raise LedgerParseError("bad coordinate or radius", line_no) from None
        try:
            zone_type = ZoneType(ztype_t)
        except ValueError:
            raise LedgerParseError(f"bad zone type {ztype_t!r}", line_no) from None
        zone_id = _parse_hex(zone_h, "zone_id", line_no)
        date = _parse_date(date_t, line_no)
        time = _parse_time(time_t, line_no)
        tid = crypto.hash_bytes(
            canonical_encode_location(zone_id, lat, lon, radius, date, time, zone_type)
        )
        return LocationTx(
            tid=tid, zone_id=zone_id, lat=lat, lon=lon, radius=radius,
            date=date, time=time, zone_type=zone_type,
            signer_key=_parse_hex(signer_h, "signer_key", line_no),
            ds=_parse_hex(ds_h, "ds", line_no),
        )
    raise LedgerParseError(f"unknown record tag {tag!r}", line_no)
