"""Primitive layer: hashing, signatures, and recipient-sealed encryption.

One 32-byte public key serves as a party's whole identity. It is an Ed25519
verify key; the matching X25519 encryption key is obtained from it by the
standard birational curve mapping, so both capabilities are bound to the one
key and a change to any public-key bit disturbs both. Private material is a
single 32-byte seed from which everything re-derives.

Encryption follows the sealed-box pattern: a fresh ephemeral X25519 key per
message, SHA-256 KDF over the shared secret and both public keys, AES-256-GCM
for the payload. It is randomized by default; passing a seeded ``rng`` makes
it reproducible for simulation runs.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from random import Random

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import DecodeError, DecryptionError, InvalidSeedError

DIGEST_SIZE = 32
SEED_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64

_NONCE_SIZE = 12
_TAG_SIZE = 16
_EPH_SIZE = 32

_FIELD_PRIME = 2 ** 255 - 19

ZERO_DIGEST = bytes(DIGEST_SIZE)


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest of ``data``; the one-way hash used everywhere."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    """Identity key material. ``private`` is the 32-byte seed; the signing
    and encryption keys re-derive from it on demand."""

    public: bytes
    private: bytes


@dataclass(frozen=True)
class CipherText:
    """Sealed payload readable only by the holder of the recipient key.

    ``recipient_fp`` is the digest of the recipient public key, kept
    alongside the blob so mismatched decryption fails loudly and early.
    """

    recipient_fp: bytes
    data: bytes

    def to_bytes(self) -> bytes:
        return self.recipient_fp + self.data

    @classmethod
    def from_bytes(cls, raw: bytes) -> "CipherText":
        if len(raw) < DIGEST_SIZE + _EPH_SIZE + _TAG_SIZE:
            raise DecodeError(f"ciphertext too short ({len(raw)} bytes)")
        return cls(recipient_fp=raw[:DIGEST_SIZE], data=raw[DIGEST_SIZE:])


def _signing_key(seed: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(seed)


def _encryption_scalar(seed: bytes) -> bytes:
    # The Ed25519 secret scalar, reused as the X25519 private key.
    h = bytearray(hashlib.sha512(seed).digest()[:32])
    h[0] &= 248
    h[31] &= 127
    h[31] |= 64
    return bytes(h)


def _encryption_pub(public: bytes) -> bytes:
    # Birational map from the Edwards point to its Montgomery u-coordinate,
    # u = (1 + y) / (1 - y); this is the X25519 key bound to ``public``.
    y = int.from_bytes(public, "little") & ((1 << 255) - 1)
    if y >= _FIELD_PRIME:
        raise DecodeError("public key is not a canonical point encoding")
    u = (1 + y) * pow((1 - y) % _FIELD_PRIME, _FIELD_PRIME - 2, _FIELD_PRIME) % _FIELD_PRIME
    if u == 0:
        raise DecodeError("public key has no usable encryption form")
    return u.to_bytes(32, "little")


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive a keypair from a 32-byte seed; same seed, same keys."""
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_SIZE:
        raise InvalidSeedError(f"seed must be {SEED_SIZE} bytes")
    seed = bytes(seed)
    return KeyPair(public=_signing_key(seed).public_key().public_bytes_raw(), private=seed)


def enroll_identity(phone_number: str, rng: Random | None = None) -> KeyPair:
    """Create a fresh identity keypair at app setup.

    The verified phone number contributes one-time entropy together with a
    random salt; neither is retained, so the keypair cannot be linked back
    to the number afterwards.
    """
    salt = _random_bytes(rng, SEED_SIZE)
    return generate_keypair(hash_bytes(salt + phone_number.encode("utf-8")))


def sign(private: bytes, digest: bytes) -> bytes:
    """Sign a 32-byte digest with the seed's signing key."""
    _check_len("private key", private, SEED_SIZE)
    _check_len("digest", digest, DIGEST_SIZE)
    return _signing_key(bytes(private)).sign(digest)


def verify(public: bytes, digest: bytes, signature: bytes) -> bool:
    """True iff ``signature`` was made over exactly ``digest`` by the key
    matching ``public``. Malformed inputs raise DecodeError instead."""
    _check_len("public key", public, PUBLIC_KEY_SIZE)
    _check_len("digest", digest, DIGEST_SIZE)
    _check_len("signature", signature, SIGNATURE_SIZE)
    try:
        verify_key = Ed25519PublicKey.from_public_bytes(bytes(public))
    except Exception as exc:  # non-canonical point encoding
        raise DecodeError(f"undecodable public key: {exc}") from exc
    try:
        verify_key.verify(bytes(signature), digest)
        return True
    except InvalidSignature:
        return False


def encrypt(public: bytes, plaintext: bytes, rng: Random | None = None) -> CipherText:
    """Seal ``plaintext`` so only the holder of ``public``'s seed can read it.

    Randomized: two calls with identical inputs give different ciphertexts
    unless a seeded ``rng`` is supplied.
    """
    _check_len("public key", public, PUBLIC_KEY_SIZE)
    if not plaintext:
        raise ValueError("plaintext must be non-empty")
    recipient_x = _encryption_pub(bytes(public))
    eph = X25519PrivateKey.from_private_bytes(_random_bytes(rng, _EPH_SIZE))
    eph_pub = eph.public_key().public_bytes_raw()
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient_x))
    key, nonce = _session_key(shared, eph_pub, recipient_x)
    sealed = AESGCM(key).encrypt(nonce, bytes(plaintext), None)
    return CipherText(recipient_fp=hash_bytes(bytes(public)), data=eph_pub + sealed)


def decrypt(private: bytes, ciphertext: CipherText) -> bytes:
    """Open a sealed payload; raises DecryptionError for any non-matching key."""
    _check_len("private key", private, SEED_SIZE)
    own = generate_keypair(bytes(private))
    if ciphertext.recipient_fp != hash_bytes(own.public):
        raise DecryptionError("ciphertext is not addressed to this key")
    eph_pub = ciphertext.data[:_EPH_SIZE]
    own_x_pub = _encryption_pub(own.public)
    x_priv = X25519PrivateKey.from_private_bytes(_encryption_scalar(own.private))
    shared = x_priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
    key, nonce = _session_key(shared, eph_pub, own_x_pub)
    try:
        return AESGCM(key).decrypt(nonce, ciphertext.data[_EPH_SIZE:], None)
    except InvalidTag as exc:
        raise DecryptionError("ciphertext authentication failed") from exc


def _session_key(shared: bytes, eph_pub: bytes, recipient_x: bytes) -> tuple[bytes, bytes]:
    # Key is unique per ephemeral key, so a transcript-derived nonce is safe.
    key = hash_bytes(shared + eph_pub + recipient_x)
    nonce = hash_bytes(eph_pub + recipient_x)[:_NONCE_SIZE]
    return key, nonce


def _random_bytes(rng: Random | None, n: int) -> bytes:
    return rng.randbytes(n) if rng is not None else secrets.token_bytes(n)


def _check_len(name: str, value: bytes, expected: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != expected:
        raise DecodeError(f"{name} must be {expected} bytes")
