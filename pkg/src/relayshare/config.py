"""Session config files: INI-style ``key = value`` lines grouped in sections.

Example::

    [topology]
    n_relays = 3
    min_active = 1
    on_prob = 0.5

    [session]
    share_length_bits = 128
    max_slots = 100000
    seed = 7

    [adversary]
    coalition = 1
    behavior = always_on_spoofing

    [detection]
    alpha = 0.001
    qber_threshold = 0.11
    min_sample = 100
    cadence = 500

``[adversary]`` is optional; ``on_prob`` may be a comma-separated list with
one probability per relay.
"""

from __future__ import annotations

import configparser
import re
from pathlib import Path
from typing import Callable, Optional

from .adversary import Behavior, CompromiseScenario
from .channels import ChannelTopology
from .detection import DetectionParams
from .errors import ConfigInvalid
from .protocol import SessionConfig

SCHEMA: dict[str, set[str]] = {
    "topology": {"n_relays", "min_active", "on_prob"},
    "session": {"share_length_bits", "max_slots", "seed", "noise"},
    "adversary": {"coalition", "behavior"},
    "detection": {"alpha", "qber_threshold", "min_sample", "cadence"},
}
REQUIRED = {"topology": {"n_relays"}}


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            current = m.group(1).strip().lower()
            if key is None and current == section:
                return lineno
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if k == key:
                return lineno
    return None


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser = parser
        self.text = text
        self.source = source

    def error(self, section: str, key: Optional[str], msg: str) -> ConfigInvalid:
        line = _line_of(self.text, section, key)
        where = f"{self.source}:{line}" if line else self.source
        field = f"[{section}] {key}" if key else f"[{section}]"
        return ConfigInvalid(f"{where}: {field}: {msg}")

    def get(self, section: str, key: str, conv: Callable, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except (ValueError, KeyError) as exc:
            raise self.error(section, key, f"cannot parse {raw!r}: {exc}") from None


def _probs(raw: str):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty")
    vals = tuple(float(p) for p in parts)
    # any comma marks a per-relay list, so "0.5," stays a one-element tuple
    return vals if "," in raw else vals[0]


def _relays(raw: str) -> frozenset[int]:
    return frozenset(int(r) for r in re.split(r"[,\s]+", raw.strip()) if r)


def _field_error(r: _Reader, exc: ConfigInvalid, section: str) -> ConfigInvalid:
    """Attach file/line context to a validation error raised by a dataclass."""
    msg = str(exc)
    word = msg.split(" ", 1)[0]
    owner = next((s for s, keys in SCHEMA.items() if word in keys), section)
    return r.error(owner, word if word in SCHEMA[owner] else None, msg)


def parse_config(text: str, source: str = "<config>") -> SessionConfig:
    """Parse config text into a validated :class:`SessionConfig`.

    Raises :class:`ConfigInvalid` naming the offending line and field.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigInvalid(f"{source}: {exc}") from None
    r = _Reader(parser, text, source)

    for section in parser.sections():
        if section not in SCHEMA:
            raise r.error(section, None, f"unknown section (expected one of {sorted(SCHEMA)})")
        for key in parser.options(section):
            if key not in SCHEMA[section]:
                raise r.error(section, key, f"unknown field (expected one of {sorted(SCHEMA[section])})")
    for section, keys in REQUIRED.items():
        for key in keys:
            if not parser.has_option(section, key):
                raise ConfigInvalid(f"{source}: [{section}] {key}: required field missing")

    def build(section, fn):
        try:
            return fn()
        except ConfigInvalid as exc:
            raise _field_error(r, exc, section) from None

    n = r.get("topology", "n_relays", int)
    m = r.get("topology", "min_active", int, 1)
    p = r.get("topology", "on_prob", _probs, 0.5)
    topology = build("topology", lambda: ChannelTopology(n, m, p))

    scenario = None
    if parser.has_section("adversary"):
        coalition = r.get("adversary", "coalition", _relays, frozenset())
        behavior = r.get("adversary", "behavior", lambda s: Behavior(s.strip().lower()), Behavior.PASSIVE)
        scenario = build("adversary", lambda: CompromiseScenario(coalition, behavior))

    defaults = DetectionParams()
    detection = DetectionParams(
        alpha=r.get("detection", "alpha", float, defaults.alpha),
        qber_threshold=r.get("detection", "qber_threshold", float, defaults.qber_threshold),
        min_sample=r.get("detection", "min_sample", int, defaults.min_sample),
        cadence=r.get("detection", "cadence", int, defaults.cadence),
    )
    base = SessionConfig.__dataclass_fields__
    kwargs = dict(
        topology=topology,
        share_length_bits=r.get("session", "share_length_bits", int, base["share_length_bits"].default),
        max_slots=r.get("session", "max_slots", int, base["max_slots"].default),
        seed=r.get("session", "seed", int, base["seed"].default),
        noise=r.get("session", "noise", float, base["noise"].default),
        compromise=scenario,
        detection=detection,
    )
    return build("session", lambda: SessionConfig(**kwargs))


def load_config(path) -> SessionConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigInvalid(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def dump_config(config: SessionConfig) -> str:
    """Serialise a config so that ``parse_config(dump_config(c)) == c``."""
    topo = config.topology
    p = topo.on_prob
    if isinstance(p, tuple):
        on_prob = ", ".join(repr(x) for x in p) + ("," if len(p) == 1 else "")
    else:
        on_prob = repr(float(p))
    lines = [
        "[topology]",
        f"n_relays = {topo.n_relays}",
        f"min_active = {topo.min_active}",
        f"on_prob = {on_prob}",
        "",
        "[session]",
        f"share_length_bits = {config.share_length_bits}",
        f"max_slots = {config.max_slots}",
        f"seed = {config.seed}",
        f"noise = {config.noise!r}",
        "",
    ]
    if config.compromise is not None:
        lines += [
            "[adversary]",
            "coalition = " + ", ".join(str(r) for r in sorted(config.compromise.coalition)),
            f"behavior = {config.compromise.behavior.value}",
            "",
        ]
    d = config.detection
    lines += [
        "[detection]",
        f"alpha = {d.alpha!r}",
        f"qber_threshold = {d.qber_threshold!r}",
        f"min_sample = {d.min_sample}",
        f"cadence = {d.cadence}",
        "",
    ]
    return "\n".join(lines)
