"""Random session identifiers.

A peer identity is a 16-character alphanumeric token handed out when a peer
says hello. IDs double as capabilities: whoever knows one can connect to it.
"""
from __future__ import annotations

import random
import re

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789"
ID_LENGTH = 16

BROADCAST = "*"
# Reserved identity used as the `from` of server-originated control envelopes.
SERVER_ID = "0000000000000000"

_ID_RE = re.compile(r"^[A-Za-z0-9]{16}$")


def new_peer_id(rng: random.Random) -> str:
    """Draw a fresh 16-char alphanumeric id from *rng*.

    Same seed, same sequence of ids; tests rely on this.
    """
    return "".join(rng.choices(ALPHABET, k=ID_LENGTH))


def new_file_token(rng: random.Random) -> str:
    """File transfer ids share the peer-id shape."""
    return new_peer_id(rng)


def is_peer_id(value: object) -> bool:
    return isinstance(value, str) and _ID_RE.fullmatch(value) is not None


def is_address(value: object) -> bool:
    """An envelope destination: a peer id or the broadcast marker."""
    return value == BROADCAST or is_peer_id(value)
