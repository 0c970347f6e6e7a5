"""Command line entry point: ``edgeflow run|check|list``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checks import Dumps
from .log.codec import DumpFormatError
from .scenario.format import ScenarioError
from .scenario.run import builtin_names, evaluate, execute, load_builtin, load_scenario
from .sim import SimulationError
from .sim.trace import TraceFormatError, read_trace


def _base(ref: str) -> Path | None:
    p = Path(ref)
    return p.parent if p.is_file() else None


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    res = execute(sc, seed=args.seed, until=args.until, trace_path=args.trace,
                  dump_dir=args.dump_dir, base=_base(args.scenario))
    sys.stdout.write(res.report())
    status = "pass" if res.passed else "fail"
    print(f"summary scenario={sc.name} seed={res.seed} events={len(res.trace)} "
          f"checks={len(res.results)} result={status}")
    return res.exit_code


def cmd_check(args) -> int:
    sc = load_scenario(args.scenario)
    trace = read_trace(args.trace)
    dumps = Dumps.load(args.dump_dir)
    seed, until = sc.seed, None
    for e in trace:
        if e.kind == "run_def":
            seed, until = e.get_int("seed"), e.get_int("run_until")
            break
    results = evaluate(sc, trace, dumps, seed, _base(args.scenario), until)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_list(args) -> int:
    for name in builtin_names():
        sc = load_builtin(name)
        nodes = len(sc.nodes)
        print(f"{name} nodes={nodes} faults={len(sc.faults)} checks={len(sc.checks)} run_until={sc.run_until}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgeflow", description="Edge/cloud pipeline fault-tolerance simulator")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file or built-in and evaluate its checks")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--until", type=int)
    r.add_argument("--trace")
    r.add_argument("--dump-dir")
    r.set_defaults(fn=cmd_run)
    c = sub.add_parser("check", help="evaluate a scenario's checks over a saved trace and dumps")
    c.add_argument("trace")
    c.add_argument("dump_dir")
    c.add_argument("--scenario", required=True)
    c.set_defaults(fn=cmd_check)
    ls = sub.add_parser("list", help="list built-in scenarios")
    ls.set_defaults(fn=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ScenarioError as exc:
        print(f"scenario error:\n{exc}", file=sys.stderr)
        return 2
    except (TraceFormatError, DumpFormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
