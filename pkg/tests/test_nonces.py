import random
from ipaddress import IPv6Address

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noncewatch.nonces import (
    AddressPlan,
    FeistelPermutation,
    NonceIssuer,
    NonceKey,
    OutOfPrefixError,
    address_to_nonce,
    decode_nonce,
    decode_nonces,
    encode_nonce,
    encode_nonces,
    is_issued,
    nonce_to_address,
)

KEY = NonceKey(bytes(range(32)), key_id=1)
OTHER_KEY = NonceKey(bytes(range(1, 33)), key_id=2)
PLAN = AddressPlan.parse("2001:db8::/64")


def test_roundtrip_zero():
    v0 = encode_nonce(KEY, 0)
    assert decode_nonce(KEY, v0) == 0


def test_roundtrip_sample():
    assert decode_nonce(KEY, encode_nonce(KEY, 12345)) == 12345


def test_encoding_is_deterministic():
    assert encode_nonce(KEY, 777) == encode_nonce(NonceKey(bytes(range(32)), 1), 777)


def test_sequential_counters_collision_free():
    # brute-force scan over 2^20 sequential counters
    counters = np.arange(1 << 20, dtype=np.uint64)
    nonces = encode_nonces(KEY, counters)
    assert len(np.unique(nonces)) == len(counters)
    back = decode_nonces(KEY, nonces)
    assert np.array_equal(back, counters)


def test_distinct_keys_disagree():
    rng = random.Random(2024)
    counters = [rng.getrandbits(64) for _ in range(10_000)]
    same = sum(encode_nonce(KEY, c) == encode_nonce(OTHER_KEY, c) for c in counters)
    assert same / len(counters) <= 0.001


def test_wrong_key_decode_mismatch():
    rng = random.Random(99)
    counters = [rng.getrandbits(64) for _ in range(10_000)]
    hits = sum(decode_nonce(OTHER_KEY, encode_nonce(KEY, c)) == c for c in counters)
    assert hits / len(counters) <= 0.0001


def test_random_values_decode_above_high_water():
    # with 2^20 issued, a uniform value lands below the mark w.p. 2^-44
    high_water = 1 << 20
    rng = np.random.default_rng(7)
    values = rng.integers(0, 1 << 64, size=100_000, dtype=np.uint64)
    below = int(np.count_nonzero(decode_nonces(KEY, values) < high_water))
    assert below == 0


def test_is_issued_boundaries():
    assert is_issued(KEY, 10, encode_nonce(KEY, 5))
    assert not is_issued(KEY, 10, encode_nonce(KEY, 10))


def test_is_issued_random_false_rate():
    rng = random.Random(3)
    hits = sum(is_issued(KEY, 1 << 20, rng.getrandbits(64)) for _ in range(100_000))
    assert hits == 0


@given(st.integers(min_value=0, max_value=(1 << 64) - 1))
@settings(max_examples=200)
def test_roundtrip_property(counter):
    assert decode_nonce(KEY, encode_nonce(KEY, counter)) == counter


@given(st.lists(st.integers(min_value=0, max_value=(1 << 64) - 1), min_size=1, max_size=64))
@settings(max_examples=50)
def test_batch_matches_scalar(counters):
    arr = np.array(counters, dtype=np.uint64)
    enc = encode_nonces(KEY, arr)
    assert [int(x) for x in enc] == [encode_nonce(KEY, c) for c in counters]
    dec = decode_nonces(KEY, enc)
    assert [int(x) for x in dec] == counters


def test_narrow_permutation_is_bijective():
    perm = FeistelPermutation(bytes(32), bits=8, rounds=6)
    image = {perm.forward(v) for v in range(256)}
    assert image == set(range(256))
    for v in range(256):
        assert perm.inverse(perm.forward(v)) == v


def test_known_answer_address_embedding():
    got = nonce_to_address(PLAN, 0xDEAD_BEEF_F00D_CAFE)
    assert got.address == IPv6Address("2001:db8::dead:beef:f00d:cafe")
    assert address_to_nonce(PLAN, got.address) == 0xDEAD_BEEF_F00D_CAFE


def test_zero_nonce_address():
    assert nonce_to_address(PLAN, 0).address == IPv6Address("2001:db8::")


def test_short_prefix_pad_zero():
    plan = AddressPlan.parse("2001:db8::/36")
    addr = nonce_to_address(plan, 0x1234)
    value = int(addr.address)
    assert value & ((1 << 64) - 1) == 0x1234
    # bits 36..63 of the network half stay zero
    assert (value >> 64) & ((1 << (64 - 36)) - 1) == 0


def test_out_of_prefix_rejected():
    with pytest.raises(OutOfPrefixError):
        address_to_nonce(PLAN, IPv6Address("2001:db9::1"))


def test_subnet_pad_mismatch_rejected():
    padded = AddressPlan.parse("2001:db8::/36", subnet_pad=5)
    plain = nonce_to_address(AddressPlan.parse("2001:db8::/36"), 1).address
    with pytest.raises(OutOfPrefixError):
        address_to_nonce(padded, plain)


def test_address_roundtrip_sweep():
    rng = random.Random(11)
    for _ in range(10_000):
        n = rng.getrandbits(64)
        assert address_to_nonce(PLAN, nonce_to_address(PLAN, n).address) == n


@given(st.integers(min_value=0, max_value=(1 << 64) - 1))
@settings(max_examples=100)
def test_prefix_containment(nonce):
    addr = nonce_to_address(PLAN, nonce).address
    assert int(addr) >> 64 == PLAN.network_high


def test_plan_validation():
    with pytest.raises(ValueError):
        AddressPlan.parse("2001:db8::/80")
    with pytest.raises(ValueError):
        AddressPlan.parse("2001:db8::1/64")
    with pytest.raises(ValueError):
        AddressPlan.parse("2001:db8::/64", subnet_pad=1)


def test_key_file_roundtrip(tmp_path):
    path = tmp_path / "key.txt"
    key = NonceKey.generate(key_id=3)
    key.save(path)
    assert NonceKey.load(path) == key


def test_issuer_persists_high_water(tmp_path):
    state = tmp_path / "state.txt"
    issuer = NonceIssuer(KEY, state)
    assert issuer.issue(5) == range(0, 5)
    assert issuer.issue(2) == range(5, 7)
    again = NonceIssuer(KEY, state)
    assert again.high_water == 7
    assert state.read_text() == "7\n"
