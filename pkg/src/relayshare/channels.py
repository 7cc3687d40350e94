"""Logical channels of a relay chain and the XOR share combiner.

A relay chain between Alice and Bob has ``n_relays`` relays R1..Rn. In each
timeslot every relay is independently switched on or dropped out. The set of
relays that are on is a *logical channel*, identified here by a bitmask where
bit ``i`` stands for relay ``R{i+1}``. A channel can carry a key only when at
least ``min_active`` relays are on; each usable channel yields one key share
and the final key is the XOR of all of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ConfigInvalid, DuplicateChannel, LengthMismatch

MAX_RELAYS = 20

Probability = Union[float, Sequence[float]]


def relays_to_mask(relays: Iterable[int]) -> int:
    """Bitmask for a collection of 1-based relay ids."""
    mask = 0
    for r in relays:
        if r < 1:
            raise ValueError(f"relay ids are 1-based, got {r}")
        mask |= 1 << (r - 1)
    return mask


def mask_to_relays(mask: int) -> tuple[int, ...]:
    """1-based relay ids present in ``mask``, ascending."""
    out = []
    i = 0
    while mask >> i:
        if (mask >> i) & 1:
            out.append(i + 1)
        i += 1
    return tuple(out)


def format_channel(mask: int) -> str:
    """Render a channel as ``{1,2}``; the empty channel renders as ``{}``."""
    return "{" + ",".join(str(r) for r in mask_to_relays(mask)) + "}"


@dataclass(frozen=True)
class ChannelTopology:
    """A single physical path with ``n_relays`` relays.

    ``on_prob`` is the probability that a relay is switched on in a given
    timeslot, either one value shared by all relays or one value per relay.
    """

    n_relays: int
    min_active: int = 1
    on_prob: Probability = 0.5

    def __post_init__(self):
        if not isinstance(self.n_relays, (int, np.integer)) or not 1 <= self.n_relays <= MAX_RELAYS:
            raise ConfigInvalid(f"n_relays must be an integer in [1, {MAX_RELAYS}], got {self.n_relays!r}")
        if not isinstance(self.min_active, (int, np.integer)) or self.min_active < 1:
            raise ConfigInvalid(f"min_active must be an integer >= 1, got {self.min_active!r}")
        if isinstance(self.on_prob, (int, float)):
            probs = (float(self.on_prob),) * self.n_relays
        else:
            probs = tuple(float(p) for p in self.on_prob)
            if len(probs) != self.n_relays:
                raise ConfigInvalid(
                    f"on_prob has {len(probs)} entries for {self.n_relays} relays"
                )
            object.__setattr__(self, "on_prob", probs)
        for i, p in enumerate(probs, start=1):
            if not 0.0 < p < 1.0:
                raise ConfigInvalid(f"on_prob for R{i} must lie strictly inside (0, 1), got {p}")

    @property
    def probs(self) -> tuple[float, ...]:
        """Per-relay on-probabilities."""
        if isinstance(self.on_prob, tuple):
            return self.on_prob
        return (float(self.on_prob),) * self.n_relays

    @property
    def full_mask(self) -> int:
        return (1 << self.n_relays) - 1

    def is_usable(self, mask: int) -> bool:
        return int(mask).bit_count() >= self.min_active


@dataclass(frozen=True)
class SlotConfiguration:
    """Relays that are on during one timeslot."""

    active_set: int
    usable: bool

    @property
    def relays(self) -> tuple[int, ...]:
        return mask_to_relays(self.active_set)


@dataclass
class KeyShare:
    """Sifted key bits accumulated on one usable logical channel."""

    channel: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)

    def __len__(self):
        return len(self.bits)


def popcounts(masks: np.ndarray) -> np.ndarray:
    """Vectorised population count for non-negative integer masks below 2**32."""
    m = np.asarray(masks, dtype=np.uint32)
    m = m - ((m >> 1) & 0x55555555)
    m = (m & 0x33333333) + ((m >> 2) & 0x33333333)
    m = (m + (m >> 4)) & 0x0F0F0F0F
    return ((m * 0x01010101) & 0xFFFFFFFF) >> 24


def usable_mask_array(topology: ChannelTopology) -> np.ndarray:
    """All usable channel bitmasks as an ascending int64 array."""
    masks = np.arange(1 << topology.n_relays, dtype=np.int64)
    return masks[popcounts(masks) >= topology.min_active]


def enumerate_usable_channels(topology: ChannelTopology) -> list[SlotConfiguration]:
    """Every relay subset of size >= ``min_active``, ordered by bitmask value.

    The all-off configuration is never included. An empty list is returned
    when ``min_active`` exceeds ``n_relays``.
    """
    return [SlotConfiguration(int(m), True) for m in usable_mask_array(topology)]


def usable_channel_count(n_relays: int, min_active: int) -> int:
    return sum(comb(n_relays, k) for k in range(max(min_active, 1), n_relays + 1))


def combine_shares(shares: Sequence[KeyShare]) -> np.ndarray:
    """XOR all share bit strings together.

    Raises
    ------
    LengthMismatch
        If the shares do not all have the same length.
    DuplicateChannel
        If two shares belong to the same channel.
    """
    if not shares:
        raise ValueError("combine_shares needs at least one share")
    length = len(shares[0].bits)
    seen: set[int] = set()
    for share in shares:
        if len(share.bits) != length:
            raise LengthMismatch(
                f"share {format_channel(share.channel)} has {len(share.bits)} bits, expected {length}"
            )
        if share.channel in seen:
            raise DuplicateChannel(f"channel {format_channel(share.channel)} appears twice")
        seen.add(share.channel)
    out = np.zeros(length, dtype=np.uint8)
    for share in shares:
        np.bitwise_xor(out, share.bits, out=out)
    return out


def configuration_probabilities(topology: ChannelTopology) -> np.ndarray:
    """Probability of each of the 2**n on/off configurations, indexed by bitmask."""
    masks = np.arange(1 << topology.n_relays, dtype=np.int64)
    probs = np.ones(len(masks))
    for i, p in enumerate(topology.probs):
        on = (masks >> i) & 1 == 1
        probs *= np.where(on, p, 1.0 - p)
    return probs


def expected_usable_fraction(topology: ChannelTopology) -> float:
    """Probability that a random timeslot has at least ``min_active`` relays on."""
    masks = np.arange(1 << topology.n_relays, dtype=np.int64)
    probs = configuration_probabilities(topology)
    return float(probs[popcounts(masks) >= topology.min_active].sum())
