"""Keyed 64-bit nonce encoding and its embedding in IPv6 addresses.

A nonce is a 64-bit value obtained by applying a keyed pseudorandom
permutation to a monotonically increasing issuance counter.  The
permutation is a 4-round balanced Feistel network whose round keys are
drawn from the ChaCha20 keystream under a 256-bit secret; the exact
construction is pinned below so that independent implementations can
interoperate:

  * round keys: the first ``8 * rounds`` bytes of the ChaCha20 keystream
    (key = secret, 16 zero bytes of nonce/counter input), read as
    little-endian 64-bit words;
  * round function: ``F(half, k) = mix64(half + k) mod 2**(bits//2)``
    where ``mix64`` is the xorshift-multiply finalizer with constants
    0xff51afd7ed558ccd and 0xc4ceb9fe1a85ec53 (shift 33);
  * one round maps ``(L, R) -> (R, L xor F(R, k))`` over ``bits//2``-bit
    halves.

Because the permutation is invertible, any 64-bit value decodes to some
counter; a value counts as *issued* only when its counter lies below the
persisted high-water mark.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from functools import lru_cache
from ipaddress import IPv6Address
from pathlib import Path

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

MASK64 = (1 << 64) - 1

_MIX1 = 0xFF51AFD7ED558CCD
_MIX2 = 0xC4CEB9FE1A85EC53


class OutOfPrefixError(ValueError):
    """Address does not fall inside the configured sink prefix."""


class KeyFileError(ValueError):
    """Key or state file is missing fields or malformed."""


def chacha_keystream(secret: bytes, length: int) -> bytes:
    """First `length` bytes of the ChaCha20 keystream under `secret`."""
    cipher = Cipher(algorithms.ChaCha20(secret, bytes(16)), mode=None)
    return cipher.encryptor().update(bytes(length))


@dataclass(frozen=True)
class NonceKey:
    """256-bit secret plus a small integer identifier used in logs."""

    secret: bytes
    key_id: int = 0

    def __post_init__(self) -> None:
        if len(self.secret) != 32:
            raise ValueError("nonce key secret must be exactly 32 bytes")

    @classmethod
    def generate(cls, key_id: int = 0) -> "NonceKey":
        return cls(secrets.token_bytes(32), key_id)

    @classmethod
    def load(cls, path: str | Path) -> "NonceKey":
        """Read a key file: line 1 is 64 hex chars, line 2 the key id."""
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        if len(lines) != 2:
            raise KeyFileError(f"{path}: expected secret line and key_id line")
        try:
            secret = bytes.fromhex(lines[0])
        except ValueError as exc:
            raise KeyFileError(f"{path}: secret is not hex") from exc
        if len(secret) != 32:
            raise KeyFileError(f"{path}: secret must be 64 hex characters")
        try:
            key_id = int(lines[1])
        except ValueError as exc:
            raise KeyFileError(f"{path}: key_id is not an integer") from exc
        return cls(secret, key_id)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(f"{self.secret.hex()}\n{self.key_id}\n")


def _mix64(x: int) -> int:
    x ^= x >> 33
    x = (x * _MIX1) & MASK64
    x ^= x >> 33
    x = (x * _MIX2) & MASK64
    x ^= x >> 33
    return x


def _mix64_batch(x: np.ndarray) -> np.ndarray:
    s = np.uint64(33)
    x = x ^ (x >> s)
    x = x * np.uint64(_MIX1)
    x = x ^ (x >> s)
    x = x * np.uint64(_MIX2)
    return x ^ (x >> s)


class FeistelPermutation:
    """Keyed pseudorandom permutation of [0, 2**bits) for even `bits`.

    The default (bits=64, rounds=4) is the nonce encoding; callers may
    instantiate narrower widths to permute small index spaces.
    """

    def __init__(self, secret: bytes, bits: int = 64, rounds: int = 4):
        if bits < 2 or bits > 64 or bits % 2:
            raise ValueError("bits must be even and in 2..64")
        ks = chacha_keystream(secret, 8 * rounds)
        self.bits = bits
        self.round_keys = [
            int.from_bytes(ks[8 * i : 8 * i + 8], "little") for i in range(rounds)
        ]
        self._half = bits // 2
        self._half_mask = (1 << self._half) - 1

    def forward(self, value: int) -> int:
        half, mask = self._half, self._half_mask
        left, right = value >> half, value & mask
        for key in self.round_keys:
            left, right = right, left ^ (_mix64((right + key) & MASK64) & mask)
        return (left << half) | right

    def inverse(self, value: int) -> int:
        half, mask = self._half, self._half_mask
        left, right = value >> half, value & mask
        for key in reversed(self.round_keys):
            left, right = right ^ (_mix64((left + key) & MASK64) & mask), left
        return (left << half) | right

    def forward_batch(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.uint64)
        half, mask = np.uint64(self._half), np.uint64(self._half_mask)
        left, right = v >> half, v & mask
        for key in self.round_keys:
            f = _mix64_batch(right + np.uint64(key)) & mask
            left, right = right, left ^ f
        return (left << half) | right

    def inverse_batch(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=np.uint64)
        half, mask = np.uint64(self._half), np.uint64(self._half_mask)
        left, right = v >> half, v & mask
        for key in reversed(self.round_keys):
            f = _mix64_batch(left + np.uint64(key)) & mask
            left, right = right ^ f, left
        return (left << half) | right


@lru_cache(maxsize=16)
def _nonce_permutation(key: NonceKey) -> FeistelPermutation:
    return FeistelPermutation(key.secret)


def encode_nonce(key: NonceKey, counter: int) -> int:
    """Encode an issuance counter into an opaque 64-bit nonce."""
    return _nonce_permutation(key).forward(counter & MASK64)


def decode_nonce(key: NonceKey, nonce: int) -> int:
    """Recover the issuance counter behind a 64-bit nonce."""
    return _nonce_permutation(key).inverse(nonce & MASK64)


def encode_nonces(key: NonceKey, counters: np.ndarray) -> np.ndarray:
    return _nonce_permutation(key).forward_batch(counters)


def decode_nonces(key: NonceKey, nonces: np.ndarray) -> np.ndarray:
    return _nonce_permutation(key).inverse_batch(nonces)


def is_issued(key: NonceKey, high_water: int, nonce: int) -> bool:
    """True when the nonce decodes to a counter that has been issued."""
    return decode_nonce(key, nonce) < high_water


@dataclass(frozen=True)
class AddressPlan:
    """Sink address block: routed prefix plus fixed subnet padding.

    The top 64 bits of every nonced address are prefix bits followed by
    `subnet_pad` in positions prefix_len..63; the low 64 bits carry the
    nonce.
    """

    prefix: IPv6Address
    prefix_len: int
    subnet_pad: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.prefix_len <= 64:
            raise ValueError("prefix_len must be in 1..64")
        host_bits = 128 - self.prefix_len
        if int(self.prefix) & ((1 << host_bits) - 1):
            raise ValueError("prefix has bits set beyond prefix_len")
        if self.subnet_pad >> (64 - self.prefix_len):
            raise ValueError("subnet_pad does not fit between prefix_len and bit 64")

    @classmethod
    def parse(cls, prefix_spec: str, subnet_pad: int = 0) -> "AddressPlan":
        """Build a plan from '2001:db8::/36' notation."""
        addr, _, plen = prefix_spec.partition("/")
        if not plen:
            raise ValueError(f"missing /len in prefix {prefix_spec!r}")
        return cls(IPv6Address(addr), int(plen), subnet_pad)

    @property
    def network_high(self) -> int:
        """The fixed top 64 bits of every address in the plan."""
        return (int(self.prefix) >> 64) | self.subnet_pad

    def __str__(self) -> str:
        return f"{self.prefix}/{self.prefix_len}"


@dataclass(frozen=True)
class NoncedAddress:
    address: IPv6Address
    nonce: int


def nonce_to_address(plan: AddressPlan, nonce: int) -> NoncedAddress:
    """Embed a nonce as the interface identifier under the plan prefix."""
    return NoncedAddress(IPv6Address((plan.network_high << 64) | (nonce & MASK64)), nonce)


def address_to_nonce(plan: AddressPlan, addr: IPv6Address) -> int:
    """Extract the embedded nonce, or raise OutOfPrefixError for foreign traffic."""
    value = int(addr)
    if value >> 64 != plan.network_high:
        raise OutOfPrefixError(f"{addr} is not inside {plan}")
    return value & MASK64


class NonceIssuer:
    """Sequential counter issuance with a persisted high-water mark.

    The only mutable state in the codec; a deployment must route all
    issuance through a single issuer instance.
    """

    def __init__(self, key: NonceKey, state_path: str | Path | None = None):
        self.key = key
        self.state_path = Path(state_path) if state_path else None
        self._high_water = 0
        if self.state_path and self.state_path.exists():
            text = self.state_path.read_text().strip()
            try:
                self._high_water = int(text)
            except ValueError as exc:
                raise KeyFileError(f"{state_path}: high-water mark is not an integer") from exc

    @property
    def high_water(self) -> int:
        return self._high_water

    def issue(self, count: int = 1) -> range:
        """Reserve `count` consecutive counters and persist the new mark."""
        start = self._high_water
        self._high_water = start + count
        if self.state_path:
            self.state_path.write_text(f"{self._high_water}\n")
        return range(start, start + count)
