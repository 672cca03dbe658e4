"""Merkle root over an ordered list of transaction digests.

Leaves pair up left to right; each pair is replaced by the hash of the two
digests concatenated, level by level, until one digest remains. An odd level
duplicates its last digest. A single leaf is its own root.
"""

from __future__ import annotations

from typing import Sequence

from .crypto import DIGEST_SIZE, hash_bytes
from .errors import EmptyMerkleInput


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    """Reduce ordered 32-byte leaf digests to the root digest."""
    if not leaves:
        raise EmptyMerkleInput("merkle root of zero leaves is undefined")
    for i, leaf in enumerate(leaves):
        if len(leaf) != DIGEST_SIZE:
            raise ValueError(f"leaf {i} is not a {DIGEST_SIZE}-byte digest")
    level = [bytes(leaf) for leaf in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]
