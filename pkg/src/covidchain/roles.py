"""Stakeholder roles and the signer registry the miner checks against.

Membership is fixed at genesis: which public keys may issue status records
(testing centers, hospitals, law enforcement), which may declare zones (law
enforcement, local authorities), and who mines and validates. Everyone else
holds read-only copies.
"""

from __future__ import annotations

import enum

from .errors import LedgerParseError, ValidationError


class Role(enum.Enum):
    TESTING_CENTER = "TESTING_CENTER"
    HOSPITAL = "HOSPITAL"
    LAW_ENFORCEMENT = "LAW_ENFORCEMENT"
    LOCAL_AUTHORITY = "LOCAL_AUTHORITY"
    MINER = "MINER"
    VALIDATOR = "VALIDATOR"
    GOVERNMENT = "GOVERNMENT"
    BUSINESS = "BUSINESS"
    INDIVIDUAL = "INDIVIDUAL"
    CENTRAL_AUTHORITY = "CENTRAL_AUTHORITY"


INDIVIDUAL_TX_AUTHORS = frozenset(
    {Role.TESTING_CENTER, Role.HOSPITAL, Role.LAW_ENFORCEMENT}
)
ZONE_TX_AUTHORS = frozenset({Role.LAW_ENFORCEMENT, Role.LOCAL_AUTHORITY})


class RoleRegistry:
    """Maps public keys to their registered stakeholder role."""

    def __init__(self):
        self._roles: dict[bytes, Role] = {}

    def register(self, public: bytes, role: Role) -> None:
        existing = self._roles.get(public)
        if existing is not None and existing is not role:
            raise ValidationError("public key already registered with a different role")
        self._roles[public] = role

    def role_of(self, public: bytes) -> Role | None:
        return self._roles.get(public)

    def can_author_individual(self, public: bytes) -> bool:
        return self._roles.get(public) in INDIVIDUAL_TX_AUTHORS

    def can_author_zone(self, public: bytes) -> bool:
        return self._roles.get(public) in ZONE_TX_AUTHORS

    def central_authority_key(self) -> bytes:
        for public, role in self._roles.items():
            if role is Role.CENTRAL_AUTHORITY:
                return public
        raise ValidationError("no central authority registered")

    def keys_with_role(self, role: Role) -> list[bytes]:
        return [pub for pub, r in self._roles.items() if r is role]

    # -- persistence: one "ROLE|hexkey" line per entry -------------------

    def to_text(self) -> str:
        lines = [f"{role.value}|{pub.hex()}" for pub, role in self._roles.items()]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str) -> "RoleRegistry":
        registry = cls()
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            role_token, _, pub_hex = line.partition("|")
            try:
                role = Role(role_token)
                public = bytes.fromhex(pub_hex)
            except ValueError:
                raise LedgerParseError(f"bad registry entry {line!r}", line_no) from None
            registry.register(public, role)
        return registry

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "RoleRegistry":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())
