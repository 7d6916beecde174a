"""Campaign planning: pseudorandom probe ordering and fill mode.

A campaign probes every (target, ttl) pair for ttl in 1..max_ttl exactly
once, in a keyed pseudorandom order, assigning each probe a fresh nonce.
The order is a permutation of [0, N) obtained by cycle-walking the same
Feistel construction used for nonces, keyed by
sha256(b"noncewatch index permutation" || seed as 8-byte little-endian)
over the smallest even-bit power-of-two domain covering N.  Any spec in
the stream is therefore recomputable from (targets, config, position)
alone.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from ipaddress import IPv6Address
from pathlib import Path
from typing import Iterator

from .nonces import MASK64, AddressPlan, FeistelPermutation, NonceKey, _mix64, encode_nonce

EPHEMERAL_LOW = 49152
EPHEMERAL_SPAN = 16384
TTL_CAP = 255


class EmptyTargetListError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class ProbeMode(enum.Enum):
    """Transport disguise used for every probe in a campaign."""

    UDP_TO_443 = "udp_to_443"
    UDP_FROM_443 = "udp_from_443"
    ICMPV6_ECHO = "icmpv6_echo"

    @property
    def protocol(self) -> str:
        return "icmpv6" if self is ProbeMode.ICMPV6_ECHO else "udp"


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True,
               "0": False, "false": False, "no": False, "off": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"not a boolean: {text!r}") from None


@dataclass(frozen=True)
class CampaignConfig:
    mode: ProbeMode
    max_ttl: int
    fill_mode: bool
    rate_pps: float
    permutation_seed: int
    key: NonceKey
    plan: AddressPlan
    fill_timeout_s: float = 60.0

    def __post_init__(self) -> None:
        if not 1 <= self.max_ttl <= TTL_CAP:
            raise ConfigError(f"max_ttl out of range: {self.max_ttl}")
        if self.rate_pps <= 0:
            raise ConfigError("rate_pps must be positive")
        if not 0 <= self.permutation_seed <= MASK64:
            raise ConfigError("seed must fit in 64 bits")
        if self.fill_timeout_s <= 0:
            raise ConfigError("fill_timeout_s must be positive")

    @classmethod
    def from_mapping(cls, mapping: dict[str, str], key: NonceKey,
                     plan: AddressPlan) -> "CampaignConfig":
        try:
            mode = ProbeMode(mapping["mode"])
        except KeyError:
            raise ConfigError("missing config key: mode") from None
        except ValueError:
            choices = ", ".join(m.value for m in ProbeMode)
            raise ConfigError(
                f"unknown mode {mapping['mode']!r} (choices: {choices})") from None
        try:
            return cls(
                mode=mode,
                max_ttl=int(mapping["max_ttl"]),
                fill_mode=_parse_bool(mapping.get("fill_mode", "false")),
                rate_pps=float(mapping["rate_pps"]),
                permutation_seed=int(mapping["seed"], 0),
                key=key,
                plan=plan,
                fill_timeout_s=float(mapping.get("fill_timeout_s", "60")),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config key: {exc.args[0]}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class ProbeSpec:
    target: IPv6Address
    ttl: int
    nonce: int
    src_port: int
    dst_port: int
    sequence_index: int


class IndexPermutation:
    """Keyed bijection on [0, size) via cycle-walking."""

    def __init__(self, seed: int, size: int):
        if size < 1:
            raise ValueError("size must be positive")
        bits = 2
        while (1 << bits) < size:
            bits += 2
        secret = hashlib.sha256(
            b"noncewatch index permutation" + seed.to_bytes(8, "little")).digest()
        self._feistel = FeistelPermutation(secret, bits=bits, rounds=6)
        self.size = size

    def forward(self, index: int) -> int:
        if not 0 <= index < self.size:
            raise ValueError(f"index out of range: {index}")
        value = index
        while True:
            value = self._feistel.forward(value)
            if value < self.size:
                return value


def _port_salt(seed: int) -> int:
    digest = hashlib.sha256(
        b"noncewatch port salt" + seed.to_bytes(8, "little")).digest()
    return int.from_bytes(digest[:8], "little")


def _ephemeral_port(seed: int, counter: int) -> int:
    mixed = _mix64((counter + _port_salt(seed)) & MASK64)
    return EPHEMERAL_LOW + mixed % EPHEMERAL_SPAN


def _ports_for(config: CampaignConfig, counter: int) -> tuple[int, int]:
    if config.mode is ProbeMode.UDP_TO_443:
        return _ephemeral_port(config.permutation_seed, counter), 443
    if config.mode is ProbeMode.UDP_FROM_443:
        return 443, _ephemeral_port(config.permutation_seed, counter)
    return 0, 0


def _spec_for(targets: list[IPv6Address], config: CampaignConfig,
              shuffled: int, counter: int) -> ProbeSpec:
    target_idx, ttl_minus_one = divmod(shuffled, config.max_ttl)
    src_port, dst_port = _ports_for(config, counter)
    return ProbeSpec(
        target=targets[target_idx],
        ttl=ttl_minus_one + 1,
        nonce=encode_nonce(config.key, counter),
        src_port=src_port,
        dst_port=dst_port,
        sequence_index=counter,
    )


def plan_probes(targets: list[IPv6Address], config: CampaignConfig,
                counter_base: int = 0) -> Iterator[ProbeSpec]:
    """Yield the campaign's probe stream in transmission order.

    The k-th spec consumes counter counter_base + k; reserve the range
    with the issuer before calling.
    """
    if not targets:
        raise EmptyTargetListError("no targets")
    total = len(targets) * config.max_ttl
    perm = IndexPermutation(config.permutation_seed, total)
    for position in range(total):
        yield _spec_for(targets, config, perm.forward(position),
                        counter_base + position)


def probe_at(targets: list[IPv6Address], config: CampaignConfig,
             position: int, counter_base: int = 0) -> ProbeSpec:
    """Recompute the ProbeSpec at one stream position without history."""
    if not targets:
        raise EmptyTargetListError("no targets")
    total = len(targets) * config.max_ttl
    perm = IndexPermutation(config.permutation_seed, total)
    return _spec_for(targets, config, perm.forward(position),
                     counter_base + position)


def fill_probes(target: IPv6Address, last_responsive_ttl: int,
                config: CampaignConfig, counter: int) -> list[ProbeSpec]:
    """One follow-up spec past the deepest answered ttl, if any remains."""
    if not config.fill_mode:
        return []
    if last_responsive_ttl < config.max_ttl:
        raise ValueError("fill starts at max_ttl")
    next_ttl = last_responsive_ttl + 1
    if next_ttl > TTL_CAP:
        return []
    src_port, dst_port = _ports_for(config, counter)
    return [ProbeSpec(
        target=target,
        ttl=next_ttl,
        nonce=encode_nonce(config.key, counter),
        src_port=src_port,
        dst_port=dst_port,
        sequence_index=counter,
    )]


@dataclass
class _FillState:
    best_ttl: int
    probed_ttl: int
    last_response: float
    done: bool = False


class FillTracker:
    """Per-target fill-mode bookkeeping, fed by the listener.

    Tracks the deepest responsive ttl per target and hands out one probe
    past it at a time; a target is dropped once its outstanding probe
    stays unanswered longer than the configured timeout.
    """

    def __init__(self, config: CampaignConfig):
        self._config = config
        self._states: dict[IPv6Address, _FillState] = {}

    def record_response(self, target: IPv6Address, ttl: int, now: float) -> None:
        if ttl < self._config.max_ttl:
            return
        state = self._states.get(target)
        if state is None:
            self._states[target] = _FillState(ttl, self._config.max_ttl, now)
            return
        if ttl >= state.best_ttl:
            state.best_ttl = max(state.best_ttl, ttl)
            state.last_response = now

    def poll(self, now: float, next_counter) -> list[ProbeSpec]:
        """Specs due now; next_counter() must hand out fresh counters."""
        if not self._config.fill_mode:
            return []
        specs: list[ProbeSpec] = []
        for target, state in self._states.items():
            if state.done:
                continue
            if state.probed_ttl > state.best_ttl:
                if now - state.last_response > self._config.fill_timeout_s:
                    state.done = True
                continue
            batch = fill_probes(target, state.best_ttl, self._config, next_counter())
            if not batch:
                state.done = True
                continue
            specs.extend(batch)
            state.probed_ttl = batch[0].ttl
        return specs

    @property
    def active(self) -> bool:
        """True while any target still has an outstanding fill probe."""
        return any(not state.done for state in self._states.values())


def read_targets(path: str | Path) -> list[IPv6Address]:
    """Target list file: one IPv6 address per line, '#' comments."""
    targets = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            targets.append(IPv6Address(line))
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: not an IPv6 address: {line!r}") from None
    return targets


def read_config(path: str | Path) -> dict[str, str]:
    """Config file: key=value lines, '#' comments, later keys win."""
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value: {line!r}")
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping
