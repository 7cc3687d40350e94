"""Full key-establishment session over a relay chain with random drop-out.

Each timeslot every relay independently decides whether to be on and
announces its choice on the authenticated classical channel. Alice and Bob
classify the slot by the announced configuration; if enough relays are on,
one quantum exchange runs across the active chain and, when sifted, its bit
is appended to that channel's share. Once every usable channel holds the
requested number of bits the final key is the XOR of all shares.

Slots are simulated in blocks of ``detection.cadence`` so that detection
tests run at block boundaries.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .adversary import Behavior, CompromiseScenario
from .channels import (
    ChannelTopology,
    KeyShare,
    SlotConfiguration,
    combine_shares,
    configuration_probabilities,
    popcounts,
    usable_mask_array,
)
from .detection import Checkpoint, DetectionParams, run_checks
from .errors import ConfigInvalid
from .qkdlink import LinkStats, simulate_slots


class Verdict(enum.Enum):
    COMPLETED = "completed"
    ABORTED = "aborted"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class SessionConfig:
    topology: ChannelTopology
    share_length_bits: int = 128
    max_slots: int = 100_000
    seed: int = 0
    compromise: Optional[CompromiseScenario] = None
    detection: DetectionParams = field(default_factory=DetectionParams)
    noise: float = 0.0

    def __post_init__(self):
        if not isinstance(self.share_length_bits, int) or self.share_length_bits < 8:
            raise ConfigInvalid(f"share_length_bits must be an integer >= 8, got {self.share_length_bits!r}")
        if not isinstance(self.max_slots, int) or self.max_slots < 1:
            raise ConfigInvalid(f"max_slots must be an integer >= 1, got {self.max_slots!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigInvalid(f"seed must be a non-negative integer, got {self.seed!r}")
        if not 0.0 <= self.noise < 0.5:
            raise ConfigInvalid(f"noise must lie in [0, 0.5), got {self.noise}")
        d = self.detection
        if not 0.0 < d.alpha < 1.0:
            raise ConfigInvalid(f"alpha must lie in (0, 1), got {d.alpha}")
        if not 0.0 < d.qber_threshold < 0.5:
            raise ConfigInvalid(f"qber_threshold must lie in (0, 0.5), got {d.qber_threshold}")
        if d.min_sample < 1 or d.cadence < 1:
            raise ConfigInvalid("min_sample and cadence must be >= 1")
        if self.compromise is not None and max(self.compromise.coalition) > self.topology.n_relays:
            raise ConfigInvalid(
                f"coalition {sorted(self.compromise.coalition)} names relays outside 1..{self.topology.n_relays}"
            )


@dataclass
class SlotLog:
    """Per-slot record; bitmasks use bit i for relay R{i+1}."""

    announced: np.ndarray
    actual: np.ndarray
    usable: np.ndarray
    sifted: np.ndarray
    alice_bit: np.ndarray
    bob_bit: np.ndarray

    def __len__(self):
        return len(self.announced)

    @classmethod
    def empty(cls) -> "SlotLog":
        z = np.zeros(0, dtype=np.int64)
        b = np.zeros(0, dtype=bool)
        u = np.zeros(0, dtype=np.uint8)
        return cls(z, z.copy(), b, b.copy(), u, u.copy())


@dataclass
class SessionResult:
    config: SessionConfig
    verdict: Verdict
    reason: Optional[str]
    final_key: Optional[np.ndarray]
    shares: dict[int, KeyShare]
    bob_shares: dict[int, KeyShare]
    per_channel_stats: dict[int, LinkStats]
    slot_log: SlotLog
    detections: list[Checkpoint]
    suspected_relays: tuple[int, ...] = ()

    @property
    def slots_run(self) -> int:
        return len(self.slot_log)


def _on_matrix(topology: ChannelTopology, rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.random((count, topology.n_relays)) < np.asarray(topology.probs)


def _masks(on: np.ndarray) -> np.ndarray:
    weights = np.int64(1) << np.arange(on.shape[1], dtype=np.int64)
    return on.astype(np.int64) @ weights


def draw_slot_configuration(topology: ChannelTopology, rng: np.random.Generator) -> SlotConfiguration:
    """Switch every relay on independently with its own probability."""
    mask = int(_masks(_on_matrix(topology, rng, 1))[0])
    return SlotConfiguration(mask, topology.is_usable(mask))


def draw_slot_configurations(topology: ChannelTopology, rng: np.random.Generator, count: int) -> np.ndarray:
    """Bitmasks of ``count`` independent slot configurations."""
    return _masks(_on_matrix(topology, rng, count))


def required_slots_estimate(config: SessionConfig) -> float:
    """Expected slots until the slowest channel gathers ``share_length_bits`` sifted bits.

    Each channel S yields bits at rate P(S occurs) * 2**-(|S|+1). This is an
    estimate of the mean for the rarest channel, not a bound on the session.
    Returns ``inf`` when the topology has no usable channel.
    """
    topo = config.topology
    usable = usable_mask_array(topo)
    if len(usable) == 0:
        return math.inf
    occur = configuration_probabilities(topo)[usable]
    sift = 0.5 ** (popcounts(usable).astype(float) + 1)
    return float(np.max(config.share_length_bits / (occur * sift)))


class Session:
    """Sequential state machine behind :func:`run_session`.

    ``advance`` may be driven directly with arbitrary block sizes; the RNG
    stream, and so the outcome, depends on the block pattern used.
    """

    def __init__(self, config: SessionConfig):
        self.config = config
        topo = config.topology
        self.topology = topo
        self.rng = np.random.default_rng(config.seed)
        self.usable = usable_mask_array(topo)
        size = 1 << topo.n_relays
        self.have = np.zeros(size, dtype=np.int64)
        self.sent = np.zeros(size, dtype=np.int64)
        self.sifted = np.zeros(size, dtype=np.int64)
        self.errors = np.zeros(size, dtype=np.int64)
        self.on_counts = np.zeros(topo.n_relays, dtype=np.int64)
        self.alice_parts: dict[int, list[np.ndarray]] = {}
        self.bob_parts: dict[int, list[np.ndarray]] = {}
        self.log_parts: list[SlotLog] = []
        self.slots_run = 0
        self.detections: list[Checkpoint] = []
        self.completed = False
        looks = math.ceil(config.max_slots / config.detection.cadence)
        self.look_alpha = config.detection.alpha / looks

    @property
    def remaining(self) -> int:
        return self.config.max_slots - self.slots_run

    def _draw_block(self, count: int):
        topo = self.topology
        announced_on = _on_matrix(topo, self.rng, count)
        covert = np.zeros_like(announced_on)
        scenario = self.config.compromise
        if scenario is not None:
            cols = [r - 1 for r in sorted(scenario.coalition)]
            if scenario.behavior is Behavior.NAIVE_ALWAYS_ON:
                announced_on[:, cols] = True
            elif scenario.behavior is Behavior.ALWAYS_ON_SPOOFING:
                covert[:, cols] = ~announced_on[:, cols]
        batch = simulate_slots(announced_on, covert, self.rng, self.config.noise)
        announced = _masks(announced_on)
        actual = announced | _masks(covert)
        usable = popcounts(announced) >= topo.min_active
        return announced_on, announced, actual, usable, batch

    def _completion_cut(self, announced: np.ndarray, sifted: np.ndarray) -> Optional[int]:
        """Slots of this block needed to finish every share, or None if it will not."""
        L = self.config.share_length_bits
        got = np.bincount(announced[sifted], minlength=len(self.have))
        if not np.all(self.have[self.usable] + got[self.usable] >= L):
            return None
        cut = 0
        positions = np.flatnonzero(sifted)
        chans = announced[positions]
        for c in self.usable:
            need = L - self.have[c]
            if need > 0:
                cut = max(cut, int(positions[chans == c][need - 1]) + 1)
        return cut

    def advance(self, count: int) -> int:
        """Simulate up to ``count`` more slots; returns how many were consumed."""
        if self.completed or len(self.usable) == 0:
            return 0
        count = min(count, self.remaining)
        if count <= 0:
            return 0
        announced_on, announced, actual, usable, batch = self._draw_block(count)
        sifted = usable & batch.sifted
        cut = self._completion_cut(announced, sifted)
        if cut is not None:
            self.completed = True
            count = cut
        sl = slice(0, count)
        announced, actual, usable, sifted = announced[sl], actual[sl], usable[sl], sifted[sl]
        alice, bob = batch.alice_bit[sl], batch.bob_bit[sl]
        errors = sifted & (alice != bob)
        size = len(self.have)
        self.sent += np.bincount(announced[usable], minlength=size)
        self.sifted += np.bincount(announced[sifted], minlength=size)
        self.errors += np.bincount(announced[errors], minlength=size)
        self.on_counts += announced_on[sl].sum(axis=0)

        L = self.config.share_length_bits
        idx = np.flatnonzero(sifted)
        chans = announced[idx]
        order = np.argsort(chans, kind="stable")
        idx, chans = idx[order], chans[order]
        uniq, starts = np.unique(chans, return_index=True)
        bounds = list(starts[1:]) + [len(idx)]
        for c, a, b in zip(uniq, starts, bounds):
            c = int(c)
            room = L - int(self.have[c])
            if room <= 0:
                continue
            take = idx[a:b][:room]
            self.alice_parts.setdefault(c, []).append(alice[take])
            self.bob_parts.setdefault(c, []).append(bob[take])
            self.have[c] += len(take)

        self.log_parts.append(SlotLog(announced, actual, usable, sifted, alice, bob))
        self.slots_run += count
        return count

    def link_stats(self) -> dict[int, LinkStats]:
        active = np.flatnonzero(self.sent)
        return {
            int(c): LinkStats(int(self.sent[c]), int(self.sifted[c]), int(self.errors[c]))
            for c in active
        }

    def checkpoint(self, alpha: Optional[float] = None) -> Checkpoint:
        cp = run_checks(
            self.slots_run,
            self.on_counts,
            self.slots_run,
            self.topology.probs,
            self.link_stats(),
            self.config.detection,
            alpha=self.look_alpha if alpha is None else alpha,
        )
        self.detections.append(cp)
        return cp

    def _shares(self, parts: dict[int, list[np.ndarray]]) -> dict[int, KeyShare]:
        return {
            int(c): KeyShare(int(c), np.concatenate(parts[int(c)]) if int(c) in parts else np.zeros(0, np.uint8))
            for c in self.usable
        }

    def slot_log(self) -> SlotLog:
        if not self.log_parts:
            return SlotLog.empty()
        return SlotLog(*(np.concatenate([getattr(p, f) for p in self.log_parts]) for f in
                         ("announced", "actual", "usable", "sifted", "alice_bit", "bob_bit")))

    def run(self) -> SessionResult:
        cfg = self.config
        abort: Optional[Checkpoint] = None
        if len(self.usable):
            while True:
                self.advance(min(cfg.detection.cadence, self.remaining))
                cp = self.checkpoint()
                if cp.flagged and cfg.compromise is not None:
                    abort = cp
                    break
                if self.completed or self.remaining <= 0:
                    break
        return self.result(abort)

    def result(self, abort: Optional[Checkpoint] = None) -> SessionResult:
        shares = self._shares(self.alice_parts)
        bob_shares = self._shares(self.bob_parts)
        final_key = None
        reason = None
        if abort is not None:
            verdict = Verdict.ABORTED
            reason = abort.flags[0].describe()
        elif self.completed:
            verdict = Verdict.COMPLETED
            final_key = combine_shares([shares[c] for c in sorted(shares)])
        else:
            verdict = Verdict.BUDGET_EXHAUSTED
            reason = "no usable channels" if len(self.usable) == 0 else f"slot budget {self.config.max_slots} spent"
        suspects = sorted({r.relay_id for cp in self.detections for r in cp.dropout if r.flagged})
        return SessionResult(
            config=self.config,
            verdict=verdict,
            reason=reason,
            final_key=final_key,
            shares=shares,
            bob_shares=bob_shares,
            per_channel_stats=self.link_stats(),
            slot_log=self.slot_log(),
            detections=self.detections,
            suspected_relays=tuple(suspects),
        )


def run_session(config: SessionConfig) -> SessionResult:
    """Run a session to completion, abort, or exhaustion of the slot budget.

    Detection runs after every block. A flagged test aborts the session only
    when a compromise scenario is configured; honest sessions record flags
    but always run on.
    """
    return Session(config).run()
