import dataclasses
import random

import pytest

from edgeflow.checks import (CheckResult, Dumps, check_buffering, check_config_agreement, check_equivalence,
                             check_isolation, check_leader_uniqueness, check_no_loss, check_order,
                             check_partition_soundness, check_reschedule, run_check, survivor_containment)
from edgeflow.log import DumpFormatError, Record, encode_records
from edgeflow.scenario import CheckSpec, execute, load_builtin
from edgeflow.sim.trace import make_event


def trace_of(*rows):
    return [make_event(t, i, kind, node, detail) for i, (t, kind, node, detail) in enumerate(rows)]


def sink(records, name="sink__PC-4__CN-1.log"):
    return Dumps({name: encode_records(records)})


def recs(n, producer="cam-EN-1"):
    return [Record(producer, s, f"{producer}/{s}".encode(), s) for s in range(n)]


def acks(n, producer="cam-EN-1", chunk=10):
    return [(100 + s, "source_ack", "EN-1", {"producer": producer, "seqs": list(range(s, min(s + chunk, n)))})
            for s in range(0, n, chunk)]


@pytest.fixture(scope="module")
def scenario1():
    return execute(load_builtin("scenario1"))


def test_result_line_and_evidence_rule():
    assert CheckResult("x", True, "").line() == "check=x result=pass evidence="
    with pytest.raises(ValueError):
        CheckResult("x", False, "")


def test_no_loss_counts_every_acked_record():
    trace = trace_of(*acks(100))
    r = check_no_loss(trace, sink(recs(100)))
    assert r.passed and r.evidence == "delivered=100/100"


def test_no_loss_names_the_missing_record():
    trace = trace_of(*acks(100))
    r = check_no_loss(trace, sink(recs(100)[:37] + recs(100)[38:]))
    assert not r.passed and "first=cam-EN-1#37" in r.evidence and "missing=1/100" in r.evidence


def test_no_loss_on_a_real_run(scenario1):
    r = check_no_loss(scenario1.trace, scenario1.dumps)
    assert r.passed and r.evidence == "delivered=200/200"


def test_equivalence_with_itself_and_after_a_drop(scenario1):
    d = scenario1.dumps
    assert check_equivalence(d, d).passed
    a = sink(recs(20))
    b = sink(recs(20)[:5] + recs(20)[6:])
    r = check_equivalence(a, b)
    assert not r.passed and "cam-EN-1#5" in r.evidence
    changed = recs(20)
    changed[3] = Record("cam-EN-1", 3, b"other", 3)
    assert "payload_differs=cam-EN-1#3" in check_equivalence(a, sink(changed)).evidence


def test_equivalence_ignores_duplicates_and_file_split():
    a = sink(recs(10) + recs(10)[4:7])
    b = Dumps({"sink__PC-4__CN-1.log": encode_records(recs(10)[:5]),
               "sink__PC-4__CN-2.log": encode_records(recs(10)[5:])})
    assert check_equivalence(a, b).passed


def test_order_passes_with_replayed_duplicates():
    r = recs(10)
    assert check_order(sink(r[:6] + r[3:])).passed


def test_order_interleaved_producers_pass():
    a, b = recs(5, "cam-EN-1"), recs(5, "cam-EN-2")
    mixed = [x for pair in zip(a, b) for x in pair]
    assert check_order(sink(mixed)).passed


def test_shuffled_dump_fails_order():
    r = recs(30)
    random.Random(4).shuffle(r)
    res = check_order(sink(r))
    assert not res.passed and "offset=" in res.evidence


def test_reschedule_bound_zero_fails():
    trace = load_builtin("scenario3")
    res = execute(trace, checks=False)
    assert check_reschedule(res.trace, "EN-3", "PC-3", 2000).passed
    r = check_reschedule(res.trace, "EN-3", "PC-3", 0)
    assert not r.passed and "> bound 0ms" in r.evidence


def test_reschedule_on_a_node_that_never_hosted_the_stage(scenario1):
    r = run_check(CheckSpec("reschedule", (("node", "EN-1"), ("stage", "PC-1"), ("bound", 100))),
                  scenario1.trace, scenario1.dumps)
    assert not r.passed and r.evidence.startswith("misconfigured")


@pytest.mark.parametrize("seed", range(1, 21))
def test_reschedule_any_live_target_is_accepted(seed):
    res = execute(load_builtin("scenario3"), seed=seed, checks=False)
    host = [e.get("target") for e in res.trace if e.kind == "placement" and e.get("stage") == "PC-3"]
    assert check_reschedule(res.trace, "EN-3", "PC-3", 2000).passed, host


def test_buffering_vacuous_without_traffic_or_partition(scenario1):
    r = check_buffering(scenario1.trace)
    assert r.passed and "vacuous" in r.evidence
    r = check_buffering(scenario1.trace, 5000, 5500)
    assert r.passed and "generated=0" in r.evidence


def test_buffering_on_wan_outage_and_truncated_run():
    sc = load_builtin("wan_outage")
    full = execute(sc, checks=False)
    r = check_buffering(full.trace)
    assert r.passed and "drain=ok" in r.evidence
    cut = execute(sc, until=3000, checks=False)
    r = check_buffering(cut.trace)
    assert r.passed and "drain=not-evaluated" in r.evidence


def test_buffering_flags_a_bridge_append_to_the_cloud():
    trace = trace_of((0, "node_def", "kernel", {"id": "CN-1", "cluster": "cloud"}),
                     (0, "stage_def", "kernel", {"stage": "PC-2", "kind": "bridge", "input": "ET-1"}),
                     (10, "partition", "kernel", {"domain": "wan"}),
                     (20, "append", "CN-1", {"stage": "PC-2", "topic": "CT-1"}),
                     (30, "heal", "kernel", {"domain": "wan"}))
    r = check_buffering(trace)
    assert not r.passed and "t=20" in r.evidence


def test_malformed_dump_is_a_parse_error_not_a_failure():
    bad = Dumps({"sink__PC-4__CN-1.log": encode_records(recs(3))[:-2]})
    with pytest.raises(DumpFormatError, match="sink__PC-4__CN-1.log"):
        check_no_loss(trace_of(*acks(3)), bad)
    with pytest.raises(DumpFormatError):
        Dumps({"sink__bad.log": b""}).sink_view()


def test_load_dumps_from_directory(tmp_path, scenario1):
    scenario1.world.write_dumps(tmp_path)
    d = Dumps.load(tmp_path)
    assert d.sink_view() == scenario1.dumps.sink_view()
    assert set(d.node_status().values()) == {"up"}
    with pytest.raises(DumpFormatError):
        Dumps.load(tmp_path / "missing")


def test_invariant_checks_find_their_evidence():
    crash = trace_of((5, "crash", "EN-1", {}), (7, "append", "EN-1", {}))
    assert "t=7" in check_isolation(crash).evidence
    cut = trace_of((5, "partition", "kernel", {"domain": "wan"}), (9, "deliver", "CN-1", {"domain": "wan"}))
    assert not check_partition_soundness(cut).passed
    two = trace_of((1, "leader_elected", "EN-1", {"cluster": "edge", "term": 2}),
                   (2, "leader_elected", "EN-2", {"cluster": "edge", "term": 2}))
    assert not check_leader_uniqueness(two).passed
    split = trace_of((0, "node_def", "kernel", {"id": "EN-1", "cluster": "edge"}),
                     (0, "node_def", "kernel", {"id": "EN-2", "cluster": "edge"}),
                     (1, "config_apply", "EN-1", {"epoch": 3, "term": 1, "digest": "aa"}),
                     (2, "config_apply", "EN-2", {"epoch": 3, "term": 1, "digest": "bb"}))
    assert not check_config_agreement(split).passed


def test_survivor_containment():
    trace = trace_of(*acks(10))
    files = {"topic__ET-1__EN-1.log": encode_records(recs(10)),
             "topic__ET-1__EN-2.log": encode_records(recs(4)),
             "nodes.txt": b"node=EN-1 status=crashed\nnode=EN-2 status=up\n"}
    r = survivor_containment(trace, Dumps(files), at=1000)
    assert not r.passed and "first=cam-EN-1#4" in r.evidence
    assert survivor_containment(trace, Dumps(files), at=100).passed  # only the first chunk was acked by then


def test_checks_are_pure(scenario1):
    before = [e.format() for e in scenario1.trace]
    first = [run_check(s, scenario1.trace, scenario1.dumps, scenario1.dumps) for s in scenario1.scenario.checks]
    again = [run_check(s, scenario1.trace, scenario1.dumps, scenario1.dumps) for s in scenario1.scenario.checks]
    assert first == again
    assert [e.format() for e in scenario1.trace] == before


def test_unknown_check_name(scenario1):
    with pytest.raises(ValueError):
        run_check(dataclasses.replace(CheckSpec("nope")), scenario1.trace, scenario1.dumps)
