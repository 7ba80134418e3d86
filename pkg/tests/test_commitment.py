import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from idp_darkpool.commitment import (
    DIGEST_SIZE,
    FAKE_PAYLOAD,
    REAL_PAYLOAD,
    Commitment,
    Opening,
    commit,
    flag_payload,
    identity_payload,
    parse_flag,
    parse_identity,
    verify,
)


def test_round_trip_accepts():
    c, o = commit(b"real", np.random.default_rng(1))
    assert verify(c, o)


def test_fresh_nonces_give_distinct_digests():
    rng = np.random.default_rng(1)
    c1, o1 = commit(b"real", rng)
    c2, o2 = commit(b"real", rng)
    assert o1.nonce != o2.nonce
    assert c1.digest != c2.digest


def test_empty_payload():
    c, o = commit(b"", np.random.default_rng(0))
    assert verify(c, o) and o.payload == b""


def test_oversize_payload_rejected():
    with pytest.raises(ValueError):
        commit(b"x" * 1025, np.random.default_rng(0))
    c, o = commit(b"x" * 1024, np.random.default_rng(0))
    assert verify(c, o)


def test_payload_and_nonce_flips_reject():
    c, o = commit(b"real", np.random.default_rng(7))
    bad_payload = bytes([o.payload[0] ^ 1]) + o.payload[1:]
    bad_nonce = bytes([o.nonce[0] ^ 0x80]) + o.nonce[1:]
    assert not verify(c, Opening(bad_payload, o.nonce))
    assert not verify(c, Opening(o.payload, bad_nonce))


def test_same_seed_same_commitment():
    a = commit(b"abc", np.random.default_rng(9))
    b = commit(b"abc", np.random.default_rng(9))
    assert a == b


@given(st.binary(max_size=1024), st.integers(0, 2**32 - 1), st.data())
def test_single_bit_mutations_reject(payload, seed, data):
    c, o = commit(payload, np.random.default_rng(seed))
    assert verify(c, o)
    field = data.draw(st.sampled_from(["nonce", "payload"] if payload else ["nonce"]))
    raw = bytearray(getattr(o, field))
    bit = data.draw(st.integers(0, len(raw) * 8 - 1))
    raw[bit // 8] ^= 1 << (bit % 8)
    mutated = Opening(bytes(raw), o.nonce) if field == "payload" else Opening(o.payload, bytes(raw))
    assert not verify(c, mutated)


@given(st.binary(max_size=1024))
def test_digest_length_constant(payload):
    c, _ = commit(payload, np.random.default_rng(0))
    assert len(c.digest) == DIGEST_SIZE


def test_flag_and_identity_padding():
    assert len(REAL_PAYLOAD) == len(FAKE_PAYLOAD) == 8
    assert parse_flag(flag_payload(True)) is True
    assert parse_flag(flag_payload(False)) is False
    assert parse_flag(b"maybe") is None
    assert len(identity_payload("c00001")) == 32
    assert parse_identity(identity_payload("c00001")) == "c00001"
    with pytest.raises(ValueError):
        identity_payload("x" * 33)


def test_hex_round_trip():
    c, o = commit(b"id", np.random.default_rng(3))
    assert c.hex() == c.hex().lower() and len(c.hex()) == 64
    assert Commitment.fromhex(c.hex()) == c
    assert Opening.from_wire(o.to_wire()) == o
    with pytest.raises(ValueError):
        Commitment(b"short")
