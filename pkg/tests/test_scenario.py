import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeflow.cli import main
from edgeflow.scenario import (FaultEvent, ScenarioError, WorkloadItem, builtin_names, execute, format_scenario,
                               load_builtin, parse_scenario)
from edgeflow.scenario.run import builtin_text

BUILTINS = builtin_names()


def test_builtins_are_listed_in_a_stable_order():
    assert BUILTINS[:6] == ["scenario1", "scenario2", "scenario3", "wan_outage", "case_study_5node", "threenode"]
    assert {"degraded", "double_failure"} <= set(BUILTINS)


def test_parse_scenario3():
    sc = load_builtin("scenario3")
    assert (sc.name, sc.seed, sc.run_until, sc.batch) == ("scenario3", 7, 8000, 16)
    assert [n.node_id for n in sc.nodes] == ["EN-1", "EN-2", "EN-3", "CN-1", "CN-2", "CN-3"]
    assert sc.faults == [FaultEvent(1800, "crash", "EN-3"), FaultEvent(5000, "restart", "EN-3")]
    pc3 = next(s for s in sc.pipeline if s.stage_id == "PC-3")
    assert (pc3.kind, pc3.input, pc3.output, pc3.affinity) == ("bridge", "ET-2", "CT-2", "edge")
    assert sum(w.count for w in sc.workload) == 200


def test_undefined_topic_error_names_the_line():
    text = builtin_text("scenario1").replace("input=CT-1 output=CT-2", "input=ET-9 output=CT-2")
    line = text.splitlines().index(next(ln for ln in text.splitlines() if "ET-9" in ln)) + 1
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert f"line {line}:" in str(err.value) and "ET-9" in str(err.value)


def test_errors_are_collected():
    text = builtin_text("scenario1").replace("count=50", "count=x", 2).replace("role=master", "role=boss", 1)
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert len(err.value.errors) >= 3


def test_empty_fault_section_is_fine():
    assert load_builtin("scenario1").faults == []


@pytest.mark.parametrize("name", BUILTINS)
def test_builtins_round_trip_through_the_text_format(name):
    sc = load_builtin(name)
    assert parse_scenario(format_scenario(sc)) == sc


def fault_schedules():
    """Per node, alternating crash/restart at increasing times."""
    def build(per_node):
        out = []
        for node, times in per_node.items():
            for i, t in enumerate(sorted(times)):
                out.append(FaultEvent(t, "crash" if i % 2 == 0 else "restart", node))
        return sorted(out, key=lambda e: e.time)
    return st.dictionaries(st.sampled_from(["EN-1", "EN-2", "CN-3"]),
                           st.sets(st.integers(0, 6000), max_size=4), max_size=3).map(build)


@settings(max_examples=40, deadline=None)
@given(fault_schedules(), st.lists(st.tuples(st.integers(0, 6000), st.integers(0, 500)), max_size=6),
       st.integers(0, 2**31))
def test_random_scenarios_round_trip(faults, work, seed):
    sc = load_builtin("scenario1")
    sc = dataclasses.replace(sc, seed=seed, faults=faults,
                             workload=[WorkloadItem(t, "PC-1", n) for t, n in work])
    text = format_scenario(sc)
    back = parse_scenario(text)
    assert back == sc
    assert format_scenario(back) == text


def test_same_seed_same_trace():
    a = execute(load_builtin("scenario1"), seed=7)
    b = execute(load_builtin("scenario1"), seed=7)
    assert a.trace_text() == b.trace_text()
    assert a.report() == b.report()


def test_case_study_passes():
    res = execute(load_builtin("case_study_5node"))
    assert res.passed, res.report()
    roles = [n.role for n in res.scenario.nodes if n.cluster == "edge"]
    assert sorted(roles) == ["master"] * 3 + ["worker"] * 2


def test_run_until_zero_emits_only_setup():
    res = execute(load_builtin("scenario1"), until=0, checks=False)
    kinds = {e.kind for e in res.trace}
    assert {"run_def", "node_def", "topic_def", "stage_def"} <= kinds
    # boot only: nothing delivered, appended or generated yet
    assert not kinds & {"deliver", "append", "source_generate", "sink_deliver", "config_commit"}
    assert all(e.time == 0 for e in res.trace)


def test_wiring_matches_the_file():
    res = execute(load_builtin("scenario2"), until=0, checks=False)
    stages = {e.get("stage"): (e.get("kind"), e.get("input"), e.get("output")) for e in res.trace
              if e.kind == "stage_def"}
    assert stages["PC-3"] == ("bridge", "ET-2", "CT-2")
    nodes = [e.get("id") for e in res.trace if e.kind == "node_def"]
    assert nodes == ["EN-1", "EN-2", "EN-3", "CN-1", "CN-2", "CN-3"]


def test_faults_happen_at_their_times():
    res = execute(load_builtin("scenario3"), checks=False)
    assert [(e.time, e.kind, e.node) for e in res.trace if e.kind in ("crash", "restart")] == \
        [(1800, "crash", "EN-3"), (5000, "restart", "EN-3")]


def test_exit_code_follows_the_checks():
    sc = load_builtin("scenario3")
    assert execute(sc).exit_code == 0
    strict = dataclasses.replace(sc, checks=[c if c.name != "reschedule" else
                                             dataclasses.replace(c, params=(("stage", "PC-3"), ("node", "EN-3"),
                                                                            ("bound", 0)))
                                             for c in sc.checks])
    res = execute(strict)
    assert res.exit_code == 1
    assert [r.name for r in res.results if not r.passed] == ["reschedule"]


# -- command line ------------------------------------------------------------------------

def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in out] == BUILTINS


def test_cli_run_then_check(tmp_path, capsys):
    trace, dumps = tmp_path / "s.trace", tmp_path / "dumps"
    assert main(["run", "scenario1", "--trace", str(trace), "--dump-dir", str(dumps)]) == 0
    out = capsys.readouterr().out
    assert "result=fail" not in out and out.splitlines()[-1].startswith("summary scenario=scenario1 seed=7")
    assert main(["check", str(trace), str(dumps), "--scenario", "scenario1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == len(load_builtin("scenario1").checks)
    assert all("result=pass" in ln for ln in lines)


def test_cli_run_failing_scenario_file(tmp_path, capsys):
    text = builtin_text("scenario3").replace("bound=2000", "bound=0")
    path = tmp_path / "strict.scn"
    path.write_text(text)
    assert main(["run", str(path), "--seed", "7"]) == 1
    assert "check=reschedule result=fail" in capsys.readouterr().out


def test_cli_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("[scenario]\nname=x seed=q\n")
    assert main(["run", str(bad)]) == 2
    assert main(["run", "no_such_builtin"]) == 2
    junk = tmp_path / "junk.trace"
    junk.write_text("not a trace\n")
    (tmp_path / "d").mkdir()
    assert main(["check", str(junk), str(tmp_path / "d"), "--scenario", "scenario1"]) == 2
    err = capsys.readouterr().err
    assert "scenario error" in err and "input error" in err
