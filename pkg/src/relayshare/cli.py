"""Command-line entry point: ``relayshare {simulate,analyze,detect}``.

Exit codes: 0 ok/clean, 1 usage or config error, 2 security flag or abort,
3 slot budget exhausted.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .adversary import KnowledgeModel, coalition_view_summary
from .analysis import find_minimal_coalitions, sweep
from .channels import MAX_RELAYS, ChannelTopology, relays_to_mask
from .config import dump_config, load_config
from .detection import DetectionParams, run_checks
from .errors import ConfigInvalid, NoUsableChannels
from .protocol import Verdict, run_session
from .reporting import (
    SlotLogError,
    checkpoint_records,
    checkpoint_text,
    coalition_text,
    read_slot_log,
    session_records,
    session_text,
    slot_log_lines,
    slot_log_stats,
    sweep_text,
    write_records,
)

EXIT_OK, EXIT_ERROR, EXIT_FLAG, EXIT_BUDGET = 0, 1, 2, 3

VERDICT_EXIT = {
    Verdict.COMPLETED: EXIT_OK,
    Verdict.ABORTED: EXIT_FLAG,
    Verdict.BUDGET_EXHAUSTED: EXIT_BUDGET,
}


@dataclasses.dataclass
class RunManifest:
    config: str
    seed: int
    tool_version: str
    started: str
    finished: str
    outputs: list[str]


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit(text: str, records: list[dict], fmt: str) -> None:
    if fmt == "records":
        write_records(records, sys.stdout)
    else:
        sys.stdout.write(text)


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_ERROR


def cmd_simulate(args) -> int:
    started = _now()
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    except ConfigInvalid as exc:
        return _fail(str(exc))
    result = run_session(config)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = list(session_records(result, reveal_key=args.reveal_key, full_log=args.full_log))
    text = session_text(result, reveal_key=args.reveal_key)
    paths = {
        "records": out / "records.jsonl",
        "summary": out / "summary.txt",
        "slotlog": out / "slotlog.jsonl",
        "config": out / "config.ini",
        "manifest": out / "manifest.json",
    }
    with open(paths["records"], "w") as fh:
        write_records(records, fh)
    paths["summary"].write_text(text)
    with open(paths["slotlog"], "w") as fh:
        write_records(slot_log_lines(result, full=args.full_log), fh)
    paths["config"].write_text(dump_config(config))
    manifest = RunManifest(
        config=dump_config(config),
        seed=config.seed,
        tool_version=__version__,
        started=started,
        finished=_now(),
        outputs=[str(p) for p in paths.values()],
    )
    paths["manifest"].write_text(json.dumps(dataclasses.asdict(manifest), indent=2) + "\n")

    _emit(text, records, args.format)
    return VERDICT_EXIT[result.verdict]


def _models(name: str) -> list[KnowledgeModel]:
    return list(KnowledgeModel) if name == "both" else [KnowledgeModel(name)]


def cmd_analyze(args) -> int:
    models = _models(args.model)
    if args.sweep is not None:
        if not 1 <= args.sweep <= MAX_RELAYS:
            return _fail(f"--sweep must lie in [1, {MAX_RELAYS}]")
        reports = sweep(args.sweep, models)
        text = sweep_text(reports)
    else:
        if args.n is None:
            return _fail("analyze needs --n (or --sweep)")
        try:
            topo = ChannelTopology(args.n, args.m)
            reports = [find_minimal_coalitions(topo, model) for model in models]
        except (ConfigInvalid, NoUsableChannels) as exc:
            return _fail(str(exc))
        text = "".join(coalition_text(r) for r in reports)
    records = [r.as_record() for r in reports]

    if args.coalition:
        if args.sweep is not None:
            return _fail("--coalition cannot be combined with --sweep")
        try:
            relays = [int(x) for x in args.coalition.split(",") if x.strip()]
            view = coalition_view_summary(relays_to_mask(relays), topo)
        except ValueError as exc:
            return _fail(f"bad --coalition: {exc}")
        for model, v in view.items():
            text += (f"coalition {args.coalition} ({model}): knows {len(v['known'])} shares "
                     f"[{' '.join(v['known'])}], fraction {v['fraction']}, recovers key {v['recovers_key']}\n")
            records.append({"record": "coalition_view", "coalition": relays, "model": model,
                            "known": v["known"], "fraction": str(v["fraction"]),
                            "recovers_key": v["recovers_key"]})

    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "analysis.txt").write_text(text)
        with open(out / "analysis.jsonl", "w") as fh:
            write_records(records, fh)
    _emit(text, records, args.format)
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        with open(args.slotlog) as fh:
            parsed = read_slot_log(fh, source=args.slotlog)
    except OSError as exc:
        return _fail(f"{args.slotlog}: {exc.strerror}")
    except SlotLogError as exc:
        return _fail(str(exc))
    probs = parsed.on_prob
    if args.on_prob is not None:
        probs = (args.on_prob,) * parsed.n_relays
    params = DetectionParams(alpha=args.alpha, qber_threshold=args.qber_threshold, min_sample=args.min_sample)
    log = parsed.log
    on_counts = [int(((log.announced >> i) & 1).sum()) for i in range(parsed.n_relays)]
    stats = slot_log_stats(log) if parsed.has_bits else {}
    try:
        cp = run_checks(len(log), on_counts, len(log), probs, stats, params)
    except ValueError as exc:
        return _fail(str(exc))
    text = "\n".join(checkpoint_text(cp)) + "\n"
    if not parsed.has_bits:
        text += "qber tests skipped: slot log carries no sifted bits (record it with --full-log)\n"
    records = checkpoint_records(cp)
    records.append({"record": "detect_summary", "slots": len(log), "flagged": cp.flagged,
                    "qber_checked": parsed.has_bits})
    _emit(text, records, args.format)
    return EXIT_FLAG if cp.flagged else EXIT_OK


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="override the config seed")
    parser.add_argument("--out-dir", default=default, help="directory for report files")
    parser.add_argument("--format", choices=("text", "records"), default=argparse.SUPPRESS if suppress else "text",
                        help="stdout format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relayshare", description="Simulate, analyze and audit relay drop-out key sharing.")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one key-establishment session from a config file")
    _global_flags(sim, suppress=True)
    sim.add_argument("config")
    sim.add_argument("--full-log", action="store_true", help="record sifted bits in the slot log and records")
    sim.add_argument("--reveal-key", action="store_true", help="print raw key and share bits")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="exhaustive coalition analysis")
    _global_flags(ana, suppress=True)
    ana.add_argument("--n", type=int)
    ana.add_argument("--m", type=int, default=1)
    ana.add_argument("--model", choices=("individual", "collective", "both"), default="both")
    ana.add_argument("--sweep", type=int, metavar="MAX_N", help="tabulate every n <= MAX_N and m <= n")
    ana.add_argument("--coalition", help="comma-separated relay ids to report a view for")
    ana.set_defaults(func=cmd_analyze)

    det = sub.add_parser("detect", help="re-run detection tests on a recorded slot log")
    _global_flags(det, suppress=True)
    det.add_argument("slotlog")
    det.add_argument("--alpha", type=float, default=DetectionParams.alpha)
    det.add_argument("--qber-threshold", type=float, default=DetectionParams.qber_threshold)
    det.add_argument("--min-sample", type=int, default=DetectionParams.min_sample)
    det.add_argument("--on-prob", type=float, help="override the declared per-relay on-probability")
    det.set_defaults(func=cmd_detect)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    if args.command == "simulate" and args.out_dir is None:
        args.out_dir = "relayshare-out"
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
