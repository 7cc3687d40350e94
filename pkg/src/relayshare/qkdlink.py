"""BB84-style exchange across a chain of pass-through relays.

Every party on the path that interacts with the signal measures it in a
uniformly random basis and resends the outcome in that same basis. A
measurement in the basis the signal was prepared in returns the prepared
bit; a measurement in the conjugate basis returns a uniformly random bit.

Relays that are switched off are transparent and never touch the signal.
Honest relays that are on announce their basis during sifting, so a slot is
kept only when Alice, Bob and every announcing relay used the same basis.
A covert interceptor measures and resends like a relay but announces nothing,
so its basis mismatches surface as bit errors in the sifted key.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class QuantumSlotOutcome:
    alice_bit: int
    alice_basis: int
    relay_bases: tuple[int, ...]
    bob_basis: int
    bob_bit: int
    sifted: bool
    tapped: bool
    interceptor_bases: tuple[int, ...] = ()


@dataclass(frozen=True)
class LinkStats:
    """Sifting and error counts for one logical channel."""

    slots_sent: int = 0
    slots_sifted: int = 0
    errors_in_sifted: int = 0

    @property
    def qber(self) -> Optional[float]:
        if self.slots_sifted == 0:
            return None
        return self.errors_in_sifted / self.slots_sifted

    def __add__(self, other: "LinkStats") -> "LinkStats":
        return LinkStats(
            self.slots_sent + other.slots_sent,
            self.slots_sifted + other.slots_sifted,
            self.errors_in_sifted + other.errors_in_sifted,
        )


@dataclass
class SlotBatch:
    """Vectorised outcomes for a block of timeslots.

    ``honest`` and ``covert`` are ``(slots, n_relays)`` boolean masks giving,
    per slot, which relays measure openly and which intercept covertly.
    """

    alice_bit: np.ndarray
    alice_basis: np.ndarray
    relay_bases: np.ndarray
    bob_basis: np.ndarray
    bob_bit: np.ndarray
    honest: np.ndarray
    covert: np.ndarray
    sifted: np.ndarray

    @property
    def tapped(self) -> np.ndarray:
        return self.covert.any(axis=1)

    @property
    def errors(self) -> np.ndarray:
        return self.sifted & (self.alice_bit != self.bob_bit)

    def __len__(self):
        return len(self.alice_bit)


def propagate(alice_bit, alice_basis, measuring, bases, rand_bits, bob_basis, bob_rand):
    """Bob's measured bit, given every random input of the slot explicitly.

    All arguments broadcast over a leading slot axis; ``measuring``, ``bases``
    and ``rand_bits`` carry one column per relay position, ordered from Alice
    to Bob. ``rand_bits`` is the outcome a party gets when its basis does not
    match the incoming signal.
    """
    bit = np.asarray(alice_bit, dtype=np.uint8).copy()
    basis = np.asarray(alice_basis, dtype=np.uint8).copy()
    measuring = np.asarray(measuring, dtype=bool)
    bases = np.asarray(bases, dtype=np.uint8)
    rand_bits = np.asarray(rand_bits, dtype=np.uint8)
    for i in range(measuring.shape[-1]):
        m = measuring[..., i]
        outcome = np.where(bases[..., i] == basis, bit, rand_bits[..., i])
        bit = np.where(m, outcome, bit)
        basis = np.where(m, bases[..., i], basis)
    return np.where(np.asarray(bob_basis) == basis, bit, np.asarray(bob_rand)).astype(np.uint8)


def simulate_slots(
    honest: np.ndarray,
    covert: np.ndarray,
    rng: np.random.Generator,
    noise: float = 0.0,
) -> SlotBatch:
    """Run one quantum exchange per row of the ``honest``/``covert`` masks.

    Random draws are taken in a fixed shape per block, so the stream consumed
    depends only on the block size and relay count.
    """
    honest = np.asarray(honest, dtype=bool)
    covert = np.asarray(covert, dtype=bool)
    if honest.shape != covert.shape or honest.ndim != 2:
        raise ValueError("honest and covert must be equal-shape 2-D masks")
    if (honest & covert).any():
        raise ValueError("a relay cannot be both honestly active and covertly intercepting")
    n_slots, n = honest.shape
    draws = rng.integers(0, 2, size=(n_slots, 2 * n + 4), dtype=np.uint8)
    alice_bit = draws[:, 0]
    alice_basis = draws[:, 1]
    bob_basis = draws[:, 2]
    bob_rand = draws[:, 3]
    relay_bases = draws[:, 4 : 4 + n]
    relay_rand = draws[:, 4 + n :]
    bob_bit = propagate(alice_bit, alice_basis, honest | covert, relay_bases, relay_rand, bob_basis, bob_rand)
    if noise > 0.0:
        flips = rng.random(n_slots) < noise
        bob_bit = bob_bit ^ flips.astype(np.uint8)
    agree = (relay_bases == alice_basis[:, None]) | ~honest
    sifted = (bob_basis == alice_basis) & agree.all(axis=1)
    return SlotBatch(alice_bit, alice_basis, relay_bases, bob_basis, bob_bit, honest, covert, sifted)


def run_quantum_slot(
    active_relays: Sequence[int],
    covert_interceptors: Iterable[int],
    rng: np.random.Generator,
    noise: float = 0.0,
    n_relays: Optional[int] = None,
) -> QuantumSlotOutcome:
    """Simulate a single slot; relay ids are 1-based positions from Alice."""
    active = sorted(set(active_relays))
    covert = sorted(set(covert_interceptors))
    if set(active) & set(covert):
        raise ValueError("covert interceptors must be disjoint from the active relays")
    n = n_relays or max(active + covert + [1])
    honest_mask = np.zeros((1, n), dtype=bool)
    covert_mask = np.zeros((1, n), dtype=bool)
    honest_mask[0, [r - 1 for r in active]] = True
    covert_mask[0, [r - 1 for r in covert]] = True
    b = simulate_slots(honest_mask, covert_mask, rng, noise)
    return QuantumSlotOutcome(
        alice_bit=int(b.alice_bit[0]),
        alice_basis=int(b.alice_basis[0]),
        relay_bases=tuple(int(b.relay_bases[0, r - 1]) for r in active),
        bob_basis=int(b.bob_basis[0]),
        bob_bit=int(b.bob_bit[0]),
        sifted=bool(b.sifted[0]),
        tapped=bool(covert),
        interceptor_bases=tuple(int(b.relay_bases[0, r - 1]) for r in covert),
    )


def accumulate_link_stats(outcomes: Iterable[QuantumSlotOutcome]) -> LinkStats:
    sent = sifted = errors = 0
    for o in outcomes:
        sent += 1
        if o.sifted:
            sifted += 1
            errors += o.alice_bit != o.bob_bit
    return LinkStats(sent, sifted, int(errors))


def batch_link_stats(batch: SlotBatch) -> LinkStats:
    return LinkStats(len(batch), int(batch.sifted.sum()), int(batch.errors.sum()))
