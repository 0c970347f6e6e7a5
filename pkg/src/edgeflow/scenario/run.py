"""Running scenarios end to end and evaluating their checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..checks import CheckResult, Dumps, run_check
from ..sim.trace import TraceEvent, format_trace
from .format import Scenario, parse_scenario
from .world import World

BUILTIN_ORDER = ("scenario1", "scenario2", "scenario3", "wan_outage", "case_study_5node", "threenode",
                 "degraded", "double_failure")


def builtin_names() -> list[str]:
    names = [p.name[:-4] for p in resources.files(__package__).joinpath("builtin").iterdir()
             if p.name.endswith(".scn")]
    ordered = [n for n in BUILTIN_ORDER if n in names]
    return ordered + sorted(n for n in names if n not in ordered)


def builtin_text(name: str) -> str:
    f = resources.files(__package__).joinpath("builtin").joinpath(f"{name}.scn")
    if not f.is_file():
        raise KeyError(f"no built-in scenario {name!r}")
    return f.read_text()


def load_builtin(name: str) -> Scenario:
    return parse_scenario(builtin_text(name))


def builtin_scenarios() -> list[Scenario]:
    return [load_builtin(n) for n in builtin_names()]


def load_scenario(ref: str, base: Path | None = None) -> Scenario:
    """A path to a scenario file, or the name of a built-in."""
    path = Path(ref)
    if base is not None and not path.is_absolute():
        candidate = base / path
        if candidate.is_file():
            path = candidate
    if path.is_file():
        return parse_scenario(path.read_text())
    return load_builtin(ref)


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    trace: list[TraceEvent]
    dumps: Dumps
    results: list[CheckResult] = field(default_factory=list)
    world: World | None = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def trace_text(self) -> str:
        return format_trace(self.trace)

    def report(self) -> str:
        return "".join(r.line() + "\n" for r in self.results)


def simulate(scenario: Scenario, seed: int | None = None, until: int | None = None) -> World:
    world = World(scenario, seed)
    world.run(until)
    return world


def evaluate(scenario: Scenario, trace, dumps: Dumps, seed: int, base: Path | None = None,
             until: int | None = None, timing=None) -> list[CheckResult]:
    results = []
    for spec in scenario.checks:
        ref = None
        if spec.name == "equivalence":
            other = load_scenario(spec.get("against"), base)
            ref = Dumps(simulate(other, seed, until).dumps())
        results.append(run_check(spec, trace, dumps, ref, timing))
    return results


def execute(scenario: Scenario, seed: int | None = None, until: int | None = None,
            trace_path=None, dump_dir=None, base: Path | None = None, checks: bool = True) -> RunResult:
    seed = scenario.seed if seed is None else seed
    world = simulate(scenario, seed, until)
    dumps = Dumps(world.dumps())
    res = RunResult(scenario, seed, world.trace, dumps, world=world)
    if trace_path is not None:
        Path(trace_path).write_text(res.trace_text())
    if dump_dir is not None:
        world.write_dumps(dump_dir)
    if checks:
        res.results = evaluate(scenario, world.trace, dumps, seed, base, until, world.timing)
    return res
