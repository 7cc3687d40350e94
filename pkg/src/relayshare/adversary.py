"""Compromised-relay scenarios and what a coalition learns.

Which key shares a set of compromised relays can read depends on how a
pass-through relay handles the signal, so two knowledge models are offered:

``INDIVIDUAL``
    Any compromised relay on a channel reads that channel's key. This is
    what the simulator's measure-and-resend relays physically allow.
``COLLECTIVE``
    A channel's key leaks only when every relay on it is compromised.

Results are always reported per model.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

import numpy as np

from .channels import ChannelTopology, format_channel, relays_to_mask, usable_mask_array
from .errors import ConfigInvalid, NoUsableChannels


class KnowledgeModel(enum.Enum):
    INDIVIDUAL = "individual"
    COLLECTIVE = "collective"


class Behavior(enum.Enum):
    PASSIVE = "passive"
    ALWAYS_ON_SPOOFING = "always_on_spoofing"
    NAIVE_ALWAYS_ON = "naive_always_on"


@dataclass(frozen=True)
class CompromiseScenario:
    """Relays under attacker control and how they misbehave.

    ``ALWAYS_ON_SPOOFING`` relays intercept every slot but announce on/off
    sampled from their declared probability; when they announce "off" they
    are covert interceptors. ``NAIVE_ALWAYS_ON`` relays are on and announce
    "on" in every slot. ``PASSIVE`` relays follow the protocol and only read
    what they see.
    """

    coalition: frozenset[int]
    behavior: Behavior = Behavior.PASSIVE

    def __post_init__(self):
        object.__setattr__(self, "coalition", frozenset(int(r) for r in self.coalition))
        if not self.coalition:
            raise ConfigInvalid("a compromise scenario needs a non-empty coalition")
        if min(self.coalition) < 1:
            raise ConfigInvalid("relay ids are 1-based")

    @property
    def mask(self) -> int:
        return relays_to_mask(self.coalition)


def _coalition_mask(coalition) -> int:
    if isinstance(coalition, (int, np.integer)):
        return int(coalition)
    return relays_to_mask(coalition)


def _known(usable: np.ndarray, cmask: int, model: KnowledgeModel) -> np.ndarray:
    if model is KnowledgeModel.INDIVIDUAL:
        return (usable & cmask) != 0
    return (usable & ~cmask) == 0


def known_shares(
    coalition: Iterable[int] | int,
    topology: ChannelTopology,
    model: KnowledgeModel,
) -> set[int]:
    """Channel bitmasks whose key the coalition learns under ``model``.

    ``coalition`` is an iterable of 1-based relay ids or a relay bitmask.
    """
    cmask = _coalition_mask(coalition)
    if cmask & ~topology.full_mask:
        raise ValueError(f"coalition {format_channel(cmask)} names relays outside 1..{topology.n_relays}")
    usable = usable_mask_array(topology)
    return {int(m) for m in usable[_known(usable, cmask, model)]}


def information_fraction(coalition, topology: ChannelTopology, model: KnowledgeModel) -> Fraction:
    total = len(usable_mask_array(topology))
    if total == 0:
        raise NoUsableChannels(f"no usable channels for n={topology.n_relays}, m={topology.min_active}")
    return Fraction(len(known_shares(coalition, topology, model)), total)


def can_recover_final_key(coalition, topology: ChannelTopology, model: KnowledgeModel) -> bool:
    """True when the coalition knows every share, and hence their XOR."""
    return information_fraction(coalition, topology, model) == 1


def xor_distribution(share_bits: int, n_unknown: int, offset: int = 0) -> np.ndarray:
    """Counts of each final-key value over all assignments of unknown shares.

    Every unknown share ranges over all ``2**share_bits`` values; ``offset``
    is the XOR of the shares the observer already knows. Assignments are
    folded in one share at a time, each step pairing every value reached so
    far with every value of the next share, so the counts are exact.
    """
    size = 1 << share_bits
    values = np.arange(size)
    counts = np.zeros(size, dtype=np.int64)
    counts[offset] = 1
    for _ in range(n_unknown):
        nxt = np.zeros(size, dtype=np.int64)
        for v in range(size):
            if counts[v]:
                nxt[v ^ values] += counts[v]
        counts = nxt
    return counts


def final_key_distribution(
    coalition,
    topology: ChannelTopology,
    model: KnowledgeModel,
    known_values: dict[int, int],
    share_bits: int = 8,
) -> np.ndarray:
    """Distribution of the final key given the coalition's view.

    ``known_values`` maps each share the coalition knows to the value it
    observed. Returns counts indexed by final-key value.
    """
    known = known_shares(coalition, topology, model)
    if set(known_values) != known:
        raise ValueError("known_values must cover exactly the coalition's known shares")
    offset = 0
    for v in known_values.values():
        offset ^= v
    n_unknown = len(usable_mask_array(topology)) - len(known)
    return xor_distribution(share_bits, n_unknown, offset)


def coalition_view_summary(coalition, topology: ChannelTopology, model: Optional[KnowledgeModel] = None) -> dict:
    models = [model] if model else list(KnowledgeModel)
    out = {}
    for mdl in models:
        known = sorted(known_shares(coalition, topology, mdl))
        out[mdl.value] = {
            "known": [format_channel(k) for k in known],
            "fraction": information_fraction(coalition, topology, mdl),
            "recovers_key": can_recover_final_key(coalition, topology, mdl),
        }
    return out
