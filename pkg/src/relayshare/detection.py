"""Tests Alice and Bob run to spot a misbehaving relay.

Two independent signals are checked:

* each relay's announced on-frequency against its declared on-probability,
  with an exact two-sided binomial test;
* each logical channel's quantum bit error rate against a fixed threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from scipy.special import bdtr, bdtrc

from .channels import format_channel
from .qkdlink import LinkStats

# relative slack when comparing outcome probabilities against the observed one
_PMF_RTOL = 1e-7


@dataclass(frozen=True)
class DetectionParams:
    alpha: float = 1e-3
    qber_threshold: float = 0.11
    min_sample: int = 100
    cadence: int = 500


@dataclass(frozen=True)
class DropoutTestResult:
    relay_id: Optional[int]
    observed_on: int
    total_slots: int
    expected_p: float
    p_value: float
    alpha: float
    flagged: bool

    def describe(self) -> str:
        return (
            f"dropout_test: relay R{self.relay_id} on {self.observed_on}/{self.total_slots} "
            f"(expected p {self.expected_p:g}) p_value {self.p_value:.3g} < {self.alpha:.3g}"
        )


@dataclass(frozen=True)
class QberTestResult:
    channel: int
    qber: Optional[float]
    sifted_count: int
    threshold: float
    flagged: bool

    def describe(self) -> str:
        return f"qber_test: channel {format_channel(self.channel)} qber {self.qber:.2f} > {self.threshold:g}"


@dataclass
class Checkpoint:
    """All test results from one evaluation point of a session."""

    slot: int
    qber: list[QberTestResult] = field(default_factory=list)
    dropout: list[DropoutTestResult] = field(default_factory=list)

    @property
    def flags(self) -> list:
        return [r for r in [*self.qber, *self.dropout] if r.flagged]

    @property
    def flagged(self) -> bool:
        return bool(self.flags)


def _binom_logpmf(j: int, n: int, p: float) -> float:
    return (
        math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
        + j * math.log(p) + (n - j) * math.log1p(-p)
    )


def binomial_two_sided_pvalue(k: int, n: int, p: float) -> float:
    """Exact two-sided binomial p-value.

    Sums the probability of every outcome that is no more likely than the
    observed count ``k`` out of ``n`` trials. The pmf is unimodal, so that set
    is two tails; the far tail's edge is found by bisection.
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")
    mode = min(n, math.floor((n + 1) * p))
    cutoff = _binom_logpmf(k, n, p) + math.log1p(_PMF_RTOL)
    if k <= mode:
        # first j above the mode that is no more likely than k
        lo, hi = max(mode, k + 1), n + 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _binom_logpmf(mid, n, p) <= cutoff:
                hi = mid
            else:
                lo = mid + 1
        pv = bdtr(k, n, p) + (bdtrc(lo - 1, n, p) if lo <= n else 0.0)
    else:
        # last j at or below the mode that is no more likely than k
        lo, hi = -1, mode
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if _binom_logpmf(mid, n, p) <= cutoff:
                lo = mid
            else:
                hi = mid - 1
        pv = bdtrc(k - 1, n, p) + (bdtr(lo, n, p) if lo >= 0 else 0.0)
    return float(min(1.0, pv))


def binomial_dropout_test(
    observed_on: int,
    total: int,
    p: float,
    alpha: float = 1e-3,
    relay_id: Optional[int] = None,
) -> DropoutTestResult:
    if total < 1:
        raise ValueError("total must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    pv = binomial_two_sided_pvalue(observed_on, total, p)
    return DropoutTestResult(relay_id, observed_on, total, p, pv, alpha, pv < alpha)


def qber_test(
    channel: int,
    stats: LinkStats,
    threshold: float = 0.11,
    min_sample: int = 100,
) -> QberTestResult:
    if not 0.0 < threshold < 0.5:
        raise ValueError(f"threshold must lie in (0, 0.5), got {threshold}")
    q = stats.qber
    flagged = stats.slots_sifted >= min_sample and q is not None and q > threshold
    return QberTestResult(channel, q, stats.slots_sifted, threshold, flagged)


def qber_tests(
    stats: Mapping[int, LinkStats],
    threshold: float = 0.11,
    min_sample: int = 100,
) -> list[QberTestResult]:
    return [qber_test(ch, stats[ch], threshold, min_sample) for ch in sorted(stats)]


def run_checks(
    slot: int,
    on_counts: Sequence[int],
    total_slots: int,
    probs: Sequence[float],
    stats: Mapping[int, LinkStats],
    params: DetectionParams,
    alpha: Optional[float] = None,
) -> Checkpoint:
    """Evaluate every QBER test, then every relay's drop-out test.

    ``alpha`` overrides ``params.alpha`` for the drop-out tests; sessions use
    this to split their significance budget over repeated looks.
    """
    a = params.alpha if alpha is None else alpha
    cp = Checkpoint(slot)
    cp.qber = qber_tests(stats, params.qber_threshold, params.min_sample)
    if total_slots >= 1:
        cp.dropout = [
            binomial_dropout_test(int(on_counts[i]), total_slots, probs[i], a, relay_id=i + 1)
            for i in range(len(probs))
        ]
    return cp
