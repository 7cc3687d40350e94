"""Machine-readable records and aligned-text summaries.

Records are JSON objects, one per line, each tagged with a ``record`` field.
Output is a pure function of its inputs so that identical sessions yield
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, TextIO

import numpy as np

from .analysis import CoalitionReport
from .channels import format_channel, mask_to_relays
from .detection import Checkpoint
from .errors import RelayShareError
from .protocol import SessionResult, SlotLog
from .qkdlink import LinkStats


class SlotLogError(RelayShareError, ValueError):
    """A slot log file is malformed or truncated."""


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_records(records: Iterable[dict], fh: TextIO) -> None:
    for rec in records:
        fh.write(dumps(rec) + "\n")


def bitstring(bits: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in bits)


def key_digest(bits: np.ndarray) -> str:
    """Short SHA-256 digest of a bit string (length is mixed in)."""
    h = hashlib.sha256()
    h.update(len(bits).to_bytes(8, "big"))
    h.update(np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes())
    return h.hexdigest()[:16]


def _qber(stats: LinkStats) -> Optional[float]:
    q = stats.qber
    return None if q is None else round(q, 12)


def checkpoint_records(cp: Checkpoint) -> list[dict]:
    out = []
    for r in cp.qber:
        out.append({
            "record": "qber_test",
            "slot": cp.slot,
            "channel": r.channel,
            "relays": list(mask_to_relays(r.channel)),
            "qber": None if r.qber is None else round(r.qber, 12),
            "sifted": r.sifted_count,
            "threshold": r.threshold,
            "flagged": r.flagged,
        })
    for r in cp.dropout:
        out.append({
            "record": "dropout_test",
            "slot": cp.slot,
            "relay": r.relay_id,
            "observed_on": r.observed_on,
            "total": r.total_slots,
            "expected_p": r.expected_p,
            "p_value": float(f"{r.p_value:.12g}"),
            "alpha": r.alpha,
            "flagged": r.flagged,
        })
    return out


def slot_records(log: SlotLog, full: bool = False) -> Iterator[dict]:
    for i in range(len(log)):
        rec = {
            "record": "slot",
            "slot": i,
            "announced": int(log.announced[i]),
            "actual": int(log.actual[i]),
            "usable": bool(log.usable[i]),
            "sifted": bool(log.sifted[i]),
        }
        if full and log.sifted[i]:
            rec["alice_bit"] = int(log.alice_bit[i])
            rec["bob_bit"] = int(log.bob_bit[i])
        yield rec


def session_records(result: SessionResult, reveal_key: bool = False, full_log: bool = False) -> Iterator[dict]:
    cfg = result.config
    topo = cfg.topology
    head = {
        "record": "session",
        "n_relays": topo.n_relays,
        "min_active": topo.min_active,
        "on_prob": list(topo.probs),
        "seed": cfg.seed,
        "share_length_bits": cfg.share_length_bits,
        "scenario": None if cfg.compromise is None else {
            "coalition": sorted(cfg.compromise.coalition),
            "behavior": cfg.compromise.behavior.value,
        },
        "verdict": result.verdict.value,
        "reason": result.reason,
        "slots_run": result.slots_run,
        "share_count": len(result.shares),
        "key_digest": None if result.final_key is None else key_digest(result.final_key),
        "suspected_relays": list(result.suspected_relays),
    }
    if reveal_key and result.final_key is not None:
        head["final_key"] = bitstring(result.final_key)
    yield head
    for c in sorted(result.shares):
        share = result.shares[c]
        rec = {
            "record": "share",
            "channel": c,
            "relays": list(mask_to_relays(c)),
            "bits": len(share),
            "digest": key_digest(share.bits),
        }
        if reveal_key:
            rec["key"] = bitstring(share.bits)
        yield rec
    for c in sorted(result.per_channel_stats):
        s = result.per_channel_stats[c]
        yield {
            "record": "link",
            "channel": c,
            "relays": list(mask_to_relays(c)),
            "sent": s.slots_sent,
            "sifted": s.slots_sifted,
            "errors": s.errors_in_sifted,
            "qber": _qber(s),
        }
    if result.detections:
        yield from checkpoint_records(result.detections[-1])
    if full_log:
        yield from slot_records(result.slot_log, full=True)


def slot_log_lines(result: SessionResult, full: bool = False) -> Iterator[dict]:
    topo = result.config.topology
    yield {
        "record": "slotlog_header",
        "n_relays": topo.n_relays,
        "min_active": topo.min_active,
        "on_prob": list(topo.probs),
        "full_log": full,
    }
    yield from slot_records(result.slot_log, full=full)
    yield {"record": "slotlog_end", "slots": result.slots_run}


@dataclass
class ParsedSlotLog:
    n_relays: int
    min_active: int
    on_prob: tuple[float, ...]
    log: SlotLog
    has_bits: bool


def read_slot_log(lines: Iterable[str], source: str = "<slotlog>") -> ParsedSlotLog:
    """Parse a slot log; raises :class:`SlotLogError` on malformed or truncated input."""
    header = None
    end = None
    rows: list[dict] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if end is not None:
            raise SlotLogError(f"{source}:{lineno}: data after end record")
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SlotLogError(f"{source}:{lineno}: not a JSON record ({exc.msg})") from None
        kind = rec.get("record") if isinstance(rec, dict) else None
        if header is None:
            if kind != "slotlog_header":
                raise SlotLogError(f"{source}:{lineno}: expected slotlog_header record first")
            header = rec
        elif kind == "slot":
            if rec.get("slot") != len(rows):
                raise SlotLogError(f"{source}:{lineno}: expected slot {len(rows)}, got {rec.get('slot')}")
            rows.append(rec)
        elif kind == "slotlog_end":
            end = rec
        else:
            raise SlotLogError(f"{source}:{lineno}: unexpected record {kind!r}")
    if header is None:
        raise SlotLogError(f"{source}: empty slot log")
    if end is None:
        raise SlotLogError(f"{source}: truncated slot log (no end record after {len(rows)} slots)")
    if end.get("slots") != len(rows):
        raise SlotLogError(f"{source}: end record says {end.get('slots')} slots, found {len(rows)}")
    try:
        n = int(header["n_relays"])
        m = int(header["min_active"])
        probs = tuple(float(p) for p in header["on_prob"])
        announced = np.array([int(r["announced"]) for r in rows], dtype=np.int64)
        actual = np.array([int(r["actual"]) for r in rows], dtype=np.int64)
        usable = np.array([bool(r["usable"]) for r in rows], dtype=bool)
        sifted = np.array([bool(r["sifted"]) for r in rows], dtype=bool)
    except (KeyError, TypeError, ValueError) as exc:
        raise SlotLogError(f"{source}: missing or bad field: {exc}") from None
    has_bits = all("alice_bit" in r and "bob_bit" in r for r in rows if r.get("sifted"))
    alice = np.array([int(r.get("alice_bit", 0)) for r in rows], dtype=np.uint8)
    bob = np.array([int(r.get("bob_bit", 0)) for r in rows], dtype=np.uint8)
    log = SlotLog(announced, actual, usable, sifted, alice, bob)
    return ParsedSlotLog(n, m, probs, log, has_bits and bool(sifted.any()))


def slot_log_stats(log: SlotLog) -> dict[int, LinkStats]:
    """Per-announced-channel counts recomputed from a slot log."""
    out = {}
    errors = log.sifted & (log.alice_bit != log.bob_bit)
    for c in np.unique(log.announced[log.usable]):
        sel = log.usable & (log.announced == c)
        out[int(c)] = LinkStats(int(sel.sum()), int((sel & log.sifted).sum()), int((sel & errors).sum()))
    return out


def _table(rows: list[list[str]], indent: str = "  ") -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return [indent + "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]


def _fmt_q(q: Optional[float]) -> str:
    return "-" if q is None else f"{q:.4f}"


def checkpoint_text(cp: Checkpoint) -> list[str]:
    lines = [f"detection at slot {cp.slot}"]
    if cp.qber:
        rows = [["channel", "sifted", "qber", "threshold", "flag"]]
        for r in cp.qber:
            rows.append([format_channel(r.channel), str(r.sifted_count), _fmt_q(r.qber), f"{r.threshold:g}",
                         "FLAG" if r.flagged else "ok"])
        lines += _table(rows)
    if cp.dropout:
        rows = [["relay", "on", "total", "expected_p", "p_value", "alpha", "flag"]]
        for r in cp.dropout:
            rows.append([f"R{r.relay_id}", str(r.observed_on), str(r.total_slots), f"{r.expected_p:g}",
                         f"{r.p_value:.3g}", f"{r.alpha:.3g}", "FLAG" if r.flagged else "ok"])
        lines += _table(rows)
    return lines


def session_text(result: SessionResult, reveal_key: bool = False) -> str:
    cfg = result.config
    topo = cfg.topology
    probs = ", ".join(f"{p:g}" for p in topo.probs)
    lines = [
        f"topology     n={topo.n_relays} m={topo.min_active} on_prob=[{probs}]",
        f"seed         {cfg.seed}",
    ]
    if cfg.compromise is not None:
        lines.append(
            f"scenario     {cfg.compromise.behavior.value} coalition "
            f"{format_channel(cfg.compromise.mask)}"
        )
    lines.append(f"verdict      {result.verdict.value}" + (f" ({result.reason})" if result.reason else ""))
    lines.append(f"slots run    {result.slots_run}")
    if result.final_key is not None:
        lines.append(f"final key    {len(result.final_key)} bits, digest {key_digest(result.final_key)}")
        if reveal_key:
            lines.append(f"             {bitstring(result.final_key)}")
    lines.append(f"shares       {len(result.shares)}")
    rows = [["channel", "bits", "sent", "sifted", "errors", "qber"]]
    for c in sorted(result.shares):
        s = result.per_channel_stats.get(c, LinkStats())
        rows.append([format_channel(c), str(len(result.shares[c])), str(s.slots_sent), str(s.slots_sifted),
                     str(s.errors_in_sifted), _fmt_q(s.qber)])
    lines += _table(rows)
    if result.detections:
        lines += checkpoint_text(result.detections[-1])
    if result.suspected_relays:
        lines.append("suspected    " + ", ".join(f"R{r}" for r in result.suspected_relays))
    return "\n".join(lines) + "\n"


def coalition_text(report: CoalitionReport) -> str:
    coalitions = ", ".join(format_channel(sum(1 << (r - 1) for r in c)) for c in report.minimal_recovering_coalitions)
    lines = [
        f"n={report.n_relays} m={report.min_active} model={report.model.value}",
        f"  key shares            {report.share_count}",
        f"  min coalition size    {report.min_coalition_size}",
        f"  minimal coalitions    {coalitions}",
        "  mean information fraction by coalition size",
    ]
    rows = [["size", "fraction", "value"]]
    for k, v in report.fraction_table.items():
        rows.append([str(k), str(v), f"{float(v):.4f}"])
    lines += _table(rows, indent="    ")
    return "\n".join(lines) + "\n"


def sweep_text(reports: list[CoalitionReport]) -> str:
    rows = [["n", "m", "model", "shares", "min_coalition", "n_minimal"]]
    for r in reports:
        rows.append([str(r.n_relays), str(r.min_active), r.model.value, str(r.share_count),
                     str(r.min_coalition_size), str(len(r.minimal_recovering_coalitions))])
    return "\n".join(_table(rows, indent="")) + "\n"
