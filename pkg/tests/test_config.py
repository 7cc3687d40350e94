import pytest
from hypothesis import given
from hypothesis import strategies as st

from relayshare.adversary import Behavior, CompromiseScenario
from relayshare.channels import ChannelTopology
from relayshare.config import dump_config, load_config, parse_config
from relayshare.detection import DetectionParams
from relayshare.errors import ConfigInvalid
from relayshare.protocol import SessionConfig

BASE = """\
[topology]
n_relays = 3
min_active = 1
on_prob = 0.5

[session]
share_length_bits = 64
seed = 9
"""


@st.composite
def session_configs(draw):
    n = draw(st.integers(1, 8))
    m = draw(st.integers(1, n + 1))
    probs = st.floats(0.01, 0.99, allow_nan=False)
    on_prob = draw(st.one_of(probs, st.lists(probs, min_size=n, max_size=n).map(tuple)))
    compromise = None
    if draw(st.booleans()):
        coalition = draw(st.sets(st.integers(1, n), min_size=1))
        compromise = CompromiseScenario(coalition, draw(st.sampled_from(list(Behavior))))
    detection = DetectionParams(
        alpha=draw(st.floats(1e-9, 0.5)),
        qber_threshold=draw(st.floats(0.01, 0.49)),
        min_sample=draw(st.integers(1, 1000)),
        cadence=draw(st.integers(1, 5000)),
    )
    return SessionConfig(
        topology=ChannelTopology(n, m, on_prob),
        share_length_bits=draw(st.integers(8, 4096)),
        max_slots=draw(st.integers(1, 10**7)),
        seed=draw(st.integers(0, 2**32)),
        compromise=compromise,
        detection=detection,
        noise=draw(st.floats(0.0, 0.49)),
    )


@given(session_configs())
def test_round_trip(cfg):
    text = dump_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert dump_config(again) == text


def test_defaults_fill_in():
    cfg = parse_config(BASE)
    assert cfg.topology == ChannelTopology(3, 1, 0.5)
    assert cfg.share_length_bits == 64
    assert cfg.seed == 9
    assert cfg.compromise is None
    assert cfg.detection == DetectionParams()


def test_adversary_section():
    cfg = parse_config(BASE + "\n[adversary]\ncoalition = 1, 3\nbehavior = naive_always_on\n")
    assert cfg.compromise == CompromiseScenario({1, 3}, Behavior.NAIVE_ALWAYS_ON)


def test_per_relay_probabilities():
    cfg = parse_config(BASE.replace("on_prob = 0.5", "on_prob = 0.25, 0.5, 0.75"))
    assert cfg.topology.probs == (0.25, 0.5, 0.75)


@pytest.mark.parametrize(
    "text, fragment",
    [
        (BASE.replace("n_relays = 3", "n_relays = 21"), "<config>:2: [topology] n_relays"),
        (BASE.replace("n_relays = 3", "n_relays = three"), "<config>:2: [topology] n_relays: cannot parse"),
        (BASE.replace("share_length_bits = 64", "share_length_bits = 4"), "<config>:7: [session] share_length_bits"),
        (BASE.replace("on_prob = 0.5", "on_prob = 1.0"), "<config>:4: [topology] on_prob"),
        (BASE + "colour = red\n", "<config>:9: [session] colour: unknown field"),
        (BASE + "[extras]\n", "<config>:9: [extras]: unknown section"),
        (BASE + "[adversary]\ncoalition = 5\n", "<config>:10: [adversary] coalition"),
        (BASE + "[adversary]\nbehavior = loud\n", "[adversary] behavior: cannot parse"),
        (BASE + "[detection]\nalpha = 2\n", "<config>:10: [detection] alpha"),
        ("[session]\nseed = 1\n", "[topology] n_relays: required field missing"),
        ("no section header\n", "<config>"),
    ],
)
def test_errors_name_line_and_field(text, fragment):
    with pytest.raises(ConfigInvalid) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigInvalid, match="cannot read config"):
        load_config(tmp_path / "absent.ini")


@pytest.mark.parametrize("name, m", [("honest_m1", 1), ("honest_m2", 2), ("spoofing", 1), ("naive", 1)])
def test_shipped_configs_parse(configs_dir, name, m):
    cfg = load_config(configs_dir / f"{name}.ini")
    assert cfg.topology.n_relays == 3
    assert cfg.topology.min_active == m
