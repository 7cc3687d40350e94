"""Exhaustive coalition analysis over every subset of relays."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from typing import Iterable

import numpy as np

from .adversary import KnowledgeModel
from .channels import ChannelTopology, mask_to_relays, popcounts, usable_channel_count
from .errors import NoUsableChannels


@dataclass(frozen=True)
class CoalitionReport:
    n_relays: int
    min_active: int
    model: KnowledgeModel
    share_count: int
    minimal_recovering_coalitions: tuple[tuple[int, ...], ...]
    min_coalition_size: int
    fraction_table: dict[int, Fraction]

    def as_record(self) -> dict:
        return {
            "record": "coalition_report",
            "n": self.n_relays,
            "m": self.min_active,
            "model": self.model.value,
            "share_count": self.share_count,
            "min_coalition_size": self.min_coalition_size,
            "minimal_coalitions": [list(c) for c in self.minimal_recovering_coalitions],
            "fraction_table": {str(k): str(v) for k, v in self.fraction_table.items()},
        }


def share_count(n: int, m: int) -> int:
    """Number of usable logical channels, i.e. key shares, for n relays needing m."""
    if n < 1 or m < 1:
        raise ValueError("n and m must both be >= 1")
    return usable_channel_count(n, m)


def _subset_sums(values: np.ndarray, n: int) -> np.ndarray:
    """out[mask] = sum of values[s] over all s that are subsets of mask."""
    out = values.copy()
    for i in range(n):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 1, :] += view[:, 0, :]
    return out


def known_share_counts(topology: ChannelTopology, model: KnowledgeModel) -> np.ndarray:
    """Number of shares known by every coalition, indexed by coalition bitmask."""
    n = topology.n_relays
    masks = np.arange(1 << n, dtype=np.int64)
    usable = (popcounts(masks) >= topology.min_active).astype(np.int64)
    inside = _subset_sums(usable, n)
    if model is KnowledgeModel.COLLECTIVE:
        return inside
    # a channel is missed exactly when it lies inside the complement
    total = inside[-1]
    return total - inside[masks ^ topology.full_mask]


def find_minimal_coalitions(topology: ChannelTopology, model: KnowledgeModel) -> CoalitionReport:
    """Evaluate every one of the 2**n coalitions and keep the minimal recovering ones.

    A coalition recovers the final key when it knows every share. It is
    minimal when dropping any one of its relays loses that ability; since
    knowledge is monotone in the coalition, this also rules out every
    smaller subset.
    """
    n, m = topology.n_relays, topology.min_active
    total = share_count(n, m)
    if total == 0:
        raise NoUsableChannels(f"no usable channels for n={n}, m={m}")
    counts = known_share_counts(topology, model)
    recover = counts == total
    masks = np.arange(1 << n, dtype=np.int64)
    minimal = recover.copy()
    for i in range(n):
        bit = 1 << i
        has = (masks & bit) != 0
        minimal &= ~has | ~recover[masks ^ bit]
    found = tuple(mask_to_relays(int(c)) for c in masks[minimal])
    sizes = popcounts(masks)
    table = {}
    for k in range(n + 1):
        table[k] = Fraction(int(counts[sizes == k].sum()), comb(n, k) * total)
    return CoalitionReport(
        n_relays=n,
        min_active=m,
        model=model,
        share_count=total,
        minimal_recovering_coalitions=found,
        min_coalition_size=min(len(c) for c in found),
        fraction_table=table,
    )


def sweep(max_n: int, models: Iterable[KnowledgeModel] = tuple(KnowledgeModel)) -> list[CoalitionReport]:
    """Reports for every n in 1..max_n, every m in 1..n, every model."""
    models = list(models)
    out = []
    for n in range(1, max_n + 1):
        for m in range(1, n + 1):
            topo = ChannelTopology(n, m)
            for model in models:
                out.append(find_minimal_coalitions(topo, model))
    return out
