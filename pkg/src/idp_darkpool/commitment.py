"""Hash commitments for per-node secrets.

A commitment is ``sha256(nonce || payload)`` with a fresh 16-byte nonce.
Flag payloads are padded to 8 bytes and identity payloads to 32 bytes so
digests and openings of the same kind always have the same length.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass

import numpy as np

MAX_PAYLOAD = 1024
NONCE_SIZE = 16
DIGEST_SIZE = 32
FLAG_SIZE = 8
IDENTITY_SIZE = 32

REAL_PAYLOAD = b"REAL".ljust(FLAG_SIZE, b"\x00")
FAKE_PAYLOAD = b"FAKE".ljust(FLAG_SIZE, b"\x00")


@dataclass(frozen=True)
class Commitment:
    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_SIZE:
            raise ValueError(f"digest must be {DIGEST_SIZE} bytes")

    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def fromhex(cls, text: str) -> "Commitment":
        return cls(bytes.fromhex(text))


@dataclass(frozen=True)
class Opening:
    payload: bytes
    nonce: bytes

    def to_wire(self) -> dict:
        return {"payload": self.payload.hex(), "nonce": self.nonce.hex()}

    @classmethod
    def from_wire(cls, data: dict) -> "Opening":
        return cls(bytes.fromhex(data["payload"]), bytes.fromhex(data["nonce"]))


def _digest(nonce: bytes, payload: bytes) -> bytes:
    return hashlib.sha256(nonce + payload).digest()


def commit(payload: bytes, rng: np.random.Generator) -> tuple[Commitment, Opening]:
    """Commit to ``payload`` using a nonce drawn from ``rng``."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    nonce = rng.bytes(NONCE_SIZE)
    return Commitment(_digest(nonce, payload)), Opening(bytes(payload), nonce)


def verify(c: Commitment, o: Opening) -> bool:
    return hmac.compare_digest(_digest(o.nonce, o.payload), c.digest)


def flag_payload(real: bool) -> bytes:
    return REAL_PAYLOAD if real else FAKE_PAYLOAD


def parse_flag(payload: bytes) -> bool | None:
    """True for a real flag, False for fake, None for anything else."""
    if payload == REAL_PAYLOAD:
        return True
    if payload == FAKE_PAYLOAD:
        return False
    return None


def identity_payload(identity: str) -> bytes:
    raw = identity.encode("utf-8")
    if len(raw) > IDENTITY_SIZE or b"\x00" in raw:
        raise ValueError(f"identity {identity!r} does not fit {IDENTITY_SIZE} bytes")
    return raw.ljust(IDENTITY_SIZE, b"\x00")


def parse_identity(payload: bytes) -> str:
    return payload.rstrip(b"\x00").decode("utf-8")
