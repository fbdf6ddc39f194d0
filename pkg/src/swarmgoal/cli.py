"""Command-line entry point: ``swarmgoal {run,sweep,compare,validate} <scenario>``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .errors import ProtocolInvariantError, ScenarioParseError, ScenarioValidationError
from .simulation import compare_fixed_T, emit_outputs, metrics_json, run_simulation, sweep_csv, sweep_h
from .worldmodel import load_scenario

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_PROTOCOL = 2
EXIT_INVALID = 3


def _h_list(text: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip().lower()
        if not tok:
            continue
        vals.append(math.inf if tok in ("inf", "infinity", "∞") else float(tok))
    if not vals:
        raise argparse.ArgumentTypeError("empty sensing-distance list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmgoal", description="Energy-optimal decentralized goal assignment simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log repair attempts and events")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", type=Path, help="scenario file (YAML or JSON)")
        p.add_argument("--out-dir", type=Path, default=None, help="directory for output files")
        p.add_argument("--trace", action=argparse.BooleanOptionalAction, default=True,
                       help="write the sampled trajectory CSV (default: on)")
        p.add_argument("--dt-scan", type=float, default=None, help="event-scan step [s] (overrides the scenario)")

    common(sub.add_parser("run", help="simulate one scenario"))
    p = sub.add_parser("sweep", help="repeat a scenario over several sensing distances")
    p.add_argument("--h", type=_h_list, default=[math.inf, 1.25, 1.0, 0.75, 0.5],
                   help="comma separated sensing distances, 'inf' allowed")
    common(p)
    p = sub.add_parser("compare", help="optimized arrival times vs one fixed arrival time")
    p.add_argument("--fixed-t", type=float, default=5.0, help="fixed arrival time [s]")
    common(p)
    p = sub.add_parser("validate", help="parse and validate a scenario")
    p.add_argument("scenario", type=Path)
    return parser


def _cfg(args):
    cfg = load_scenario(args.scenario)
    if getattr(args, "dt_scan", None):
        cfg = cfg.replace(dt_scan=args.dt_scan)
    return cfg.validate()


def _json_default(o):
    if hasattr(o, "to_json"):
        return o.to_json()
    raise TypeError(f"not serializable: {type(o).__name__}")


def cmd_run(args) -> int:
    cfg = _cfg(args)
    trace, metrics = run_simulation(cfg)
    if args.out_dir:
        emit_outputs(trace, metrics, args.out_dir, write_trace=args.trace)
    sys.stdout.write(metrics_json(metrics))
    return EXIT_OK if metrics.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cfg = _cfg(args)
    rows = sweep_h(cfg, args.h)
    text = sweep_csv(rows)
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if all(not r["error"] for r in rows) else EXIT_PROTOCOL


def cmd_compare(args) -> int:
    cfg = _cfg(args)
    report = compare_fixed_T(cfg, args.fixed_t)
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default) + "\n"
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "compare.json").write_text(text)
    sys.stdout.write(text)
    ok = report["metrics"]["optimized"].converged and not report["pair_dominance_violations"]
    return EXIT_OK if ok else EXIT_NOT_CONVERGED


def cmd_validate(args) -> int:
    cfg = load_scenario(args.scenario)
    print(f"ok: N={cfg.N} agents, M={cfg.M} goals, h={cfg.h}, R={cfg.R}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ProtocolInvariantError as exc:
        print(f"protocol invariant violated: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
