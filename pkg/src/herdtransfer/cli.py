"""Command-line entry point: ``herdtransfer {run,compare,goalsearch,replay,validate}``."""
from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path

from .config import ScenarioConfig, load_config, parse_overrides
from .coordinator import replay, state_text
from .errors import ConfigurationError, DomainError, ProtocolError
from .goalsearch import TrialConfig, load_goal_map, run_goalsearch_experiment
from .messages import read_trace, write_trace
from .runner import compare, make_report, simulate, write_atomic
from .validate import run_checks


def _scenario(args: argparse.Namespace) -> ScenarioConfig:
    return load_config(args.config, parse_overrides(args.set or []))


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default="desk", help="bundled name (desk, scenario1-3) or path to a key = value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    p.add_argument("--out", default="out", help="output directory")


def cmd_run(args: argparse.Namespace) -> int:
    config = _scenario(args)
    curve, sim = simulate(config, record_trace=args.trace is not None)
    report = make_report(config, curve, "transfer" if config.transfer else "baseline")
    out = Path(args.out)
    write_atomic(out / "curve.csv", curve.to_csv())
    write_atomic(out / "report.txt", report.to_text())
    if args.trace is not None:
        buf = io.StringIO()
        write_trace(sim.trace or [], buf)
        write_atomic(args.trace, buf.getvalue())
    print(report.to_text(), end="")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    config = _scenario(args)
    result = compare(config)
    out = Path(args.out)
    write_atomic(out / "with_transfer.csv", result.with_transfer.to_csv())
    write_atomic(out / "without_transfer.csv", result.without_transfer.to_csv())
    text = result.report_text()
    write_atomic(out / "report.txt", text)
    print(text, end="")
    return 0


def cmd_goalsearch(args: argparse.Namespace) -> int:
    world = load_goal_map(args.map)
    out = Path(args.out)
    arms = {"on": [True], "off": [False], "both": [True, False]}[args.fusion]
    lines = []
    for fusion in arms:
        config = TrialConfig(episodes=args.episodes, trials=args.trials, fusion=fusion, seed=args.seed)
        result = run_goalsearch_experiment(config, world)
        tag = "fusion" if fusion else "nofusion"
        write_atomic(out / f"goalsearch_{tag}.csv", result.to_csv())
        for episode, row in result.report().items():
            lines.append(f"{tag}.episode{episode}=" + ",".join(repr(v) for v in row))
    text = "\n".join(lines) + "\n"
    write_atomic(out / "goalsearch_report.txt", text)
    print(text, end="")
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    config = _scenario(args)
    x1, y1, x2, y2 = config.corral_rect
    with open(args.trace) as fh:
        state = replay(read_trace(fh), config.agents, ((x1 + x2) / 2, (y1 + y2) / 2))
    text = state_text(state) + "\n"
    if args.state_out:
        write_atomic(args.state_out, text)
    print(f"closer={state.closer}")
    print(f"coordinate_messages={state.counter1}")
    print(f"entrances={len(state.entrances)}")
    print(f"fused_rounds={state.fused_rounds}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    results = run_checks()
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name}" + (f": {r.detail}" if r.detail else ""))
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="herdtransfer", description="Multi-agent herding with shared Q-tables.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its curve and report")
    _add_scenario_args(p)
    p.add_argument("--trace", help="also write the message trace to this file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="paired runs with and without transfer")
    _add_scenario_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("goalsearch", help="the three-agent goal-search benchmark")
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fusion", choices=("on", "off", "both"), default="both")
    p.add_argument("--map", help="goal map file (default: the bundled map)")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_goalsearch)

    p = sub.add_parser("replay", help="rebuild coordinator state from a message trace")
    _add_scenario_args(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--state-out", help="write the canonical coordinator state to this file")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("validate", help="run the invariant suite")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError, ProtocolError, OSError) as exc:
        print(f"herdtransfer: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
