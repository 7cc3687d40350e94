import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from relayshare.qkdlink import (
    LinkStats,
    QuantumSlotOutcome,
    accumulate_link_stats,
    batch_link_stats,
    propagate,
    run_quantum_slot,
    simulate_slots,
)

from oracles import bb84_chain

# (chain, P(sifted), P(error | sifted)); frozen from oracles.bb84_chain
CHAINS = [
    ("", Fraction(1, 2), Fraction(0)),
    ("h", Fraction(1, 4), Fraction(0)),
    ("hh", Fraction(1, 8), Fraction(0)),
    ("c", Fraction(1, 2), Fraction(1, 4)),
    ("cc", Fraction(1, 2), Fraction(3, 8)),
    ("hc", Fraction(1, 4), Fraction(1, 4)),
    ("ch", Fraction(1, 4), Fraction(1, 4)),
    ("hch", Fraction(1, 8), Fraction(1, 4)),
]


@pytest.mark.parametrize("chain, sift, err", CHAINS)
def test_oracle_values(chain, sift, err):
    s, e = bb84_chain(chain)
    assert s == sift
    assert e / s == err


def kernel_probabilities(chain: str) -> tuple[Fraction, Fraction]:
    """Push every equiprobable input through ``propagate`` and tally exactly."""
    k = len(chain)
    honest = [c == "h" for c in chain]
    sifted = errors = 0
    total = 0
    for bits in itertools.product((0, 1), repeat=4 + 2 * k):
        a_bit, a_basis, b_basis, b_rand = bits[:4]
        bases = list(bits[4 : 4 + k])
        rands = list(bits[4 + k :])
        bob = int(propagate(a_bit, a_basis, [True] * k, bases, rands, b_basis, b_rand))
        total += 1
        ok = b_basis == a_basis and all(b == a_basis for b, h in zip(bases, honest) if h)
        if ok:
            sifted += 1
            errors += bob != a_bit
    return Fraction(sifted, total), Fraction(errors, total)


@pytest.mark.parametrize("chain, sift, err", CHAINS)
def test_kernel_matches_oracle_exhaustively(chain, sift, err):
    s, e = kernel_probabilities(chain)
    assert s == sift
    assert e / s == err


def test_covert_error_rate_monotone_in_interceptors():
    rates = [kernel_probabilities("c" * k) for k in range(3)]
    errs = [e / s for s, e in rates]
    assert errs[0] == 0
    assert errs[1] >= Fraction(1, 4)
    assert errs[2] >= errs[1]


def test_transparent_relays_do_not_touch_the_signal():
    bob = propagate(1, 0, [False, False], [1, 1], [0, 0], 0, 0)
    assert int(bob) == 1


def sample(active, covert, n, seed=0):
    rng = np.random.default_rng(seed)
    return [run_quantum_slot(active, covert, rng, n_relays=3) for _ in range(n)]


def within_3se(hits, n, p):
    return abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_direct_link_sift_half_and_error_free():
    out = sample([], [], 4000, seed=1)
    stats = accumulate_link_stats(out)
    assert within_3se(stats.slots_sifted, 4000, 0.5)
    assert stats.errors_in_sifted == 0


def test_one_relay_sift_quarter_and_error_free():
    out = sample([1], [], 4000, seed=2)
    stats = accumulate_link_stats(out)
    assert within_3se(stats.slots_sifted, 4000, 0.25)
    assert stats.errors_in_sifted == 0
    assert all(len(o.relay_bases) == 1 for o in out)


def test_one_interceptor_quarter_errors():
    out = sample([], [1], 4000, seed=3)
    stats = accumulate_link_stats(out)
    assert all(o.tapped for o in out)
    assert within_3se(stats.errors_in_sifted, stats.slots_sifted, 0.25)


def test_outcome_invariants():
    for o in sample([1, 3], [2], 500, seed=4):
        public_agree = o.bob_basis == o.alice_basis and all(b == o.alice_basis for b in o.relay_bases)
        assert o.sifted == public_agree
    for o in sample([2], [], 500, seed=5):
        if o.sifted:
            assert o.bob_bit == o.alice_bit


def test_overlap_between_active_and_covert_rejected():
    with pytest.raises(ValueError):
        run_quantum_slot([1], [1], np.random.default_rng(0))


def test_accumulate_empty():
    stats = accumulate_link_stats([])
    assert stats == LinkStats(0, 0, 0)
    assert stats.qber is None


def test_accumulate_honest_thousand_slots_zero_qber():
    stats = accumulate_link_stats(sample([1, 2], [], 1000, seed=6))
    assert stats.slots_sent == 1000
    assert stats.qber == 0.0


def test_ten_thousand_slots_one_interceptor_qber_band():
    rng = np.random.default_rng(7)
    covert = np.zeros((10_000, 1), dtype=bool)
    covert[:, 0] = True
    stats = batch_link_stats(simulate_slots(np.zeros_like(covert), covert, rng))
    assert 0.20 <= stats.qber <= 0.30


def test_accumulate_counts_by_hand():
    outs = [
        QuantumSlotOutcome(1, 0, (), 0, 1, True, False),
        QuantumSlotOutcome(1, 0, (), 0, 0, True, True),
        QuantumSlotOutcome(0, 0, (), 1, 1, False, False),
    ]
    stats = accumulate_link_stats(outs)
    assert (stats.slots_sent, stats.slots_sifted, stats.errors_in_sifted) == (3, 2, 1)
    assert stats.qber == 0.5


@pytest.mark.parametrize("r", [0, 1, 2, 3])
def test_sift_rate_by_relay_count(r):
    rng = np.random.default_rng(100 + r)
    honest = np.zeros((10_000, 3), dtype=bool)
    honest[:, :r] = True
    stats = batch_link_stats(simulate_slots(honest, np.zeros_like(honest), rng))
    assert within_3se(stats.slots_sifted, 10_000, 2.0 ** -(r + 1))
    assert stats.errors_in_sifted == 0


def test_same_seed_same_outcomes():
    assert sample([1], [2], 200, seed=9) == sample([1], [2], 200, seed=9)
    assert sample([1], [2], 200, seed=9) != sample([1], [2], 200, seed=10)


def test_noise_raises_qber():
    rng = np.random.default_rng(11)
    honest = np.zeros((20_000, 1), dtype=bool)
    stats = batch_link_stats(simulate_slots(honest, honest.copy(), rng, noise=0.05))
    assert within_3se(stats.errors_in_sifted, stats.slots_sifted, 0.05)


def test_link_stats_add():
    assert LinkStats(1, 2, 3) + LinkStats(4, 5, 6) == LinkStats(5, 7, 9)
