"""Secret sharing over randomly dropped-out QKD relays on a single physical path."""

__version__ = "0.1.0"

from .adversary import (
    Behavior,
    CompromiseScenario,
    KnowledgeModel,
    can_recover_final_key,
    information_fraction,
    known_shares,
)
from .analysis import CoalitionReport, find_minimal_coalitions, share_count
from .channels import (
    ChannelTopology,
    KeyShare,
    SlotConfiguration,
    combine_shares,
    enumerate_usable_channels,
    expected_usable_fraction,
)
from .detection import DetectionParams, binomial_dropout_test, qber_test
from .errors import ConfigInvalid, DuplicateChannel, LengthMismatch, NoUsableChannels
from .protocol import SessionConfig, SessionResult, Verdict, run_session
from .qkdlink import LinkStats, accumulate_link_stats, run_quantum_slot

__all__ = [
    "Behavior",
    "ChannelTopology",
    "CoalitionReport",
    "CompromiseScenario",
    "ConfigInvalid",
    "DetectionParams",
    "DuplicateChannel",
    "KeyShare",
    "KnowledgeModel",
    "LengthMismatch",
    "LinkStats",
    "NoUsableChannels",
    "SessionConfig",
    "SessionResult",
    "SlotConfiguration",
    "Verdict",
    "accumulate_link_stats",
    "binomial_dropout_test",
    "can_recover_final_key",
    "combine_shares",
    "enumerate_usable_channels",
    "expected_usable_fraction",
    "find_minimal_coalitions",
    "information_fraction",
    "known_shares",
    "qber_test",
    "run_quantum_slot",
    "run_session",
    "share_count",
]
