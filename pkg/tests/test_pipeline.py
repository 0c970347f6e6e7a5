import dataclasses

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from edgeflow.checks import Dumps, check_buffering, check_no_loss
from edgeflow.log import LogCluster, Record, decode_records
from edgeflow.pipeline import (SINK, SOURCE, TRANSFORM, AnnotatedPayload, AnnotationError, DedupState, SourceRunner,
                               StageRunner, StageSpec, get_transform)
from edgeflow.scenario import FaultEvent, ScenarioError, execute, load_builtin, parse_scenario
from edgeflow.pipeline.transforms import is_annotated
from edgeflow.scenario.run import builtin_text
from edgeflow.sim import EDGE_LAN

annotate = get_transform("annotate")


# -- transforms ----------------------------------------------------------------------

def test_annotate_adds_camera_date_and_timestamp():
    rec = Record("cam-EN-1", 4, b"\xffjpeg", 90_000_000)
    out = annotate(rec)
    assert out.identity == rec.identity and out.origin_time == rec.origin_time
    ap = AnnotatedPayload.from_bytes(out.payload)
    assert (ap.camera_id, ap.date, ap.timestamp, ap.body) == ("cam-EN-1", "2018-01-02", 90_000_000, b"\xffjpeg")
    assert AnnotatedPayload.from_bytes(annotate(Record("c", 0, b"", 0)).payload).date == "2018-01-01"


def test_annotate_twice_is_an_error():
    out = annotate(Record("cam-EN-1", 0, b"x", 0))
    with pytest.raises(AnnotationError):
        annotate(out)
    with pytest.raises(AnnotationError):
        AnnotatedPayload.from_bytes(b"plain")


@given(st.text(min_size=1, max_size=10).filter(lambda s: ";" not in s and "=" not in s and "\n" not in s),
       st.integers(0, 2**40), st.binary(max_size=64), st.integers(0, 10**12))
def test_annotate_is_pure_and_keeps_the_body(producer, seq, body, t):
    assume(not is_annotated(body))  # those are rejected, see above
    rec = Record(producer, seq, body, t)
    a, b = annotate(rec), annotate(rec)
    assert a == b
    assert AnnotatedPayload.from_bytes(a.payload).body == body


def test_filter_and_identity():
    keep = get_transform("filter_even_seq")
    assert keep(Record("p", 2, b"", 0)) is not None and keep(Record("p", 3, b"", 0)) is None
    r = Record("p", 1, b"a", 0)
    assert get_transform("identity")(r) is r
    with pytest.raises(KeyError):
        get_transform("nope")


# -- dedup ----------------------------------------------------------------------------

pairs = st.lists(st.tuples(st.sampled_from(["a", "b", "c"]), st.integers(0, 30)), max_size=80)


@given(pairs)
def test_dedup_matches_a_plain_set(seen):
    d = DedupState()
    ref = set()
    for p in seen:
        assert d.observe(*p) == (p not in ref)
        ref.add(p)
    assert len(d) == len(ref)
    assert all(d.seen(*p) for p in ref)
    assert DedupState.from_snapshot(d.snapshot()) == d


def test_dedup_snapshot_is_compact():
    d = DedupState()
    for s in list(range(100)) + [150]:
        d.observe("p", s)
    assert d.snapshot() == {"p": [99, [150]]}


def test_dedup_copy_is_independent():
    d = DedupState()
    d.observe("p", 0)
    c = d.copy()
    c.observe("p", 1)
    assert not d.seen("p", 1)


# -- runners against a bare log cluster ---------------------------------------------

B3 = ("B-1", "B-2", "B-3")


@pytest.fixture
def lc():
    c = LogCluster(B3, seed=5)
    for t in ("IN", "OUT"):
        c.create_topic(t, 3, B3)
    return c


def spec(sid="PC-2", kind=TRANSFORM, inp="IN", out="OUT"):
    return StageSpec(sid, kind, inp, out, "edge")


def start(lc, s, batch=16):
    node = lc.sim.nodes[lc.client_id]
    return StageRunner(node, s, node.services["client"], batch).start()


def test_batch_of_ten_commits_offset_ten(lc):
    sent = [Record("p", i, b"x", 0) for i in range(10)]
    lc.append("IN", sent)
    start(lc, spec(), batch=10)
    lc.run_for(200)
    assert lc.fetch_committed(spec().group, "IN") == 10
    assert lc.fetch("OUT", 0) == sent
    batches = [e for e in lc.sim.trace if e.kind == "stage_batch"]
    assert [(e.get("offset"), e.get("count")) for e in batches] == [("0", "10")]


def test_crash_between_output_ack_and_commit_replays_the_batch(lc):
    sent = [Record("p", i, b"x", 0) for i in range(10)]
    lc.append("IN", sent)
    start(lc, spec(), batch=10)
    out = lc.broker("B-1").replicas["OUT"]
    while out.commit < 9:
        lc.run_for(1)
    # the append is acknowledged on the leader; the stage host dies before committing
    lc.crash(lc.client_id)
    lc.restart(lc.client_id)
    assert lc.fetch_committed(spec().group, "IN") == 0
    mark = len(lc.sim.trace)
    start(lc, spec(), batch=10)
    lc.run_for(300)
    replay = [e for e in lc.sim.trace[mark:] if e.kind == "stage_batch"]
    assert [(e.get("offset"), e.get("out")) for e in replay] == [("0", "10")]
    # the brokers recognise the replayed identities, so the topic holds one copy each
    assert lc.fetch("OUT", 0) == sent


def test_sink_crash_before_commit_duplicates_are_removed_by_dedup(lc):
    sent = [Record("p", i, b"x", 0) for i in range(10)]
    lc.append("IN", sent)
    node = lc.sim.nodes[lc.client_id]
    start(lc, spec("PC-4", SINK, "IN", None), batch=10)
    while not node.durable.get("sink/PC-4"):
        lc.run_for(1)
    # the offset commit never reaches the brokers
    lc.sim.set_partition(EDGE_LAN, True)
    lc.crash(lc.client_id)
    lc.run_for(2)
    lc.sim.set_partition(EDGE_LAN, False)
    lc.restart(lc.client_id)
    start(lc, spec("PC-4", SINK, "IN", None), batch=10)
    lc.run_for(300)
    data = lc.sim.nodes[lc.client_id].durable.get("sink/PC-4")
    delivered = [r.identity for r in decode_records(data)]
    assert delivered == [r.identity for r in sent] * 2
    view = Dumps({f"sink__PC-4__{lc.client_id}.log": data}).sink_view()
    assert sorted(view) == [r.identity for r in sent]


def source(lc, seed=1):
    node = lc.sim.nodes[lc.client_id]
    return SourceRunner(node, StageSpec("PC-1", SOURCE, None, "IN", "edge"), node.services["client"], seed).start()


def test_generate_produces_consecutive_seqs_for_the_node_camera(lc):
    src = source(lc)
    src.generate(0)
    assert not [e for e in lc.sim.trace if e.kind == "source_generate"]
    src.generate(100)
    lc.run_for(500)
    got = lc.fetch("IN", 0, 200)
    assert [r.identity for r in got] == [(f"cam-{lc.client_id}", s) for s in range(100)]
    assert src.next_seq == 100


def test_generated_payloads_depend_on_seed_only(lc):
    a = source(lc, seed=3)
    a.generate(3)
    lc.run_for(100)
    b = LogCluster(B3, seed=99)
    b.create_topic("IN", 3, B3)
    source(b, seed=3).generate(3)
    b.run_for(100)
    assert lc.fetch("IN", 0) == b.fetch("IN", 0)


# -- placement and moves in a full deployment -------------------------------------------

def test_bridge_host_crash_during_wan_outage_drains_after_heal():
    base = execute(load_builtin("wan_outage"))
    host = next(e.get("target") for e in base.trace if e.kind == "placement" and e.get("stage") == "PC-2")
    sc = load_builtin("wan_outage")
    sc = dataclasses.replace(sc, faults=sc.faults + [FaultEvent(2500, "crash", host)])
    sc.faults.sort(key=lambda f: f.time)
    res = execute(sc)
    assert check_no_loss(res.trace, res.dumps).passed
    assert check_buffering(res.trace).passed
    assert any(e.kind == "placement" and e.get("stage") == "PC-2" and e.time > 2500 for e in res.trace)


MOVE = """
[moves]
time=2000 stage=PC-2 kind=transform output=ET-2
time=2000 stage=PC-3 kind=bridge input=ET-2 affinity=edge
"""


def scenario1_with(extra, workload=None):
    text = builtin_text("scenario1").replace("name=equivalence against=scenario2\n", "")
    if workload is not None:
        head, rest = text.split("[workload]\n", 1)
        text = head + "[workload]\n" + workload + "[faults]\n" + rest.split("[faults]\n", 1)[1]
    return parse_scenario(text.replace("[checks]", extra.strip() + "\n[checks]"))


def test_move_mid_stream_delivers_every_record():
    sc = scenario1_with(MOVE, "time=1000 stage=PC-1 count=50\ntime=3000 stage=PC-1 count=50\n")
    res = execute(sc)
    assert res.passed, res.report()
    produced = {(e.get("producer"), s) for e in res.trace if e.kind == "source_ack" for s in e.get_list("seqs")}
    assert len(produced) == 100
    view = res.dumps.sink_view()
    assert {(p, str(s)) for p, s in view} == produced
    moves = [e for e in res.trace if e.kind == "move"]
    assert [e.get("stage") for e in moves] == ["PC-2", "PC-3"]
    assert any(e.kind == "placement" and e.get("stage") == "PC-3" and e.time >= 2000 for e in res.trace)


def test_move_into_a_cluster_without_up_nodes_stays_pending():
    sc = scenario1_with("[moves]\ntime=2000 stage=PC-4 transform=filter_even_seq\n")
    sc.faults = [FaultEvent(1500, "crash", n) for n in ("CN-1", "CN-2", "CN-3")]
    res = execute(sc, checks=False)
    assert any(e.kind == "move" for e in res.trace)
    assert not [e for e in res.trace if e.kind == "placement" and e.time >= 1500]
    assert res.world.current_config("cloud") is None


def test_move_that_breaks_the_chain_is_rejected():
    bad = "[moves]\ntime=2000 stage=PC-3 kind=bridge input=ET-2 affinity=edge\n"
    with pytest.raises(ScenarioError) as err:
        scenario1_with(bad)
    assert "moves at 2000" in str(err.value)
