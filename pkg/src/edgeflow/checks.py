"""Post-hoc property checks over a trace and the dumps of a run.

Every check is a pure function of its inputs and returns a
``CheckResult``. A failed result always names a concrete piece of
evidence: an event (by time and seq) or a record identity.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .log.codec import DumpFormatError, Record, decode_records
from .sim.trace import TraceEvent

PASS = "pass"
FAIL = "fail"


class CheckConfigError(ValueError):
    """The check does not apply to this run (misconfigured parameters)."""


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    evidence: str

    def __post_init__(self):
        if not self.passed and not self.evidence:
            raise ValueError("a failed check needs evidence")

    @property
    def result(self) -> str:
        return PASS if self.passed else FAIL

    def line(self) -> str:
        return f"check={self.name} result={self.result} evidence={self.evidence}"


def _at(e: TraceEvent) -> str:
    return f"t={e.time}/seq={e.seq}/{e.kind}@{e.node}"


# -- dumps -----------------------------------------------------------------------

class Dumps:
    """Topic replica and sink files of one run, keyed by file name."""

    def __init__(self, files: dict[str, bytes]):
        self.files = dict(files)
        self._cache: dict[str, list[Record]] = {}

    @classmethod
    def load(cls, directory) -> "Dumps":
        path = Path(directory)
        if not path.is_dir():
            raise DumpFormatError(f"{directory}: not a dump directory")
        files = {p.name: p.read_bytes() for p in sorted(path.iterdir())
                 if p.name.endswith(".log") or p.name == "nodes.txt"}
        return cls(files)

    def records(self, name: str) -> list[Record]:
        if name not in self._cache:
            try:
                self._cache[name] = decode_records(self.files[name])
            except DumpFormatError as exc:
                raise DumpFormatError(f"{name}: {exc}") from None
        return self._cache[name]

    def _split(self, prefix: str) -> dict[tuple[str, str], str]:
        out = {}
        for name in sorted(self.files):
            if name.startswith(prefix) and name.endswith(".log"):
                parts = name[:-4].split("__")
                if len(parts) != 3:
                    raise DumpFormatError(f"unexpected dump file name {name}")
                out[(parts[1], parts[2])] = name
        return out

    def sink_files(self) -> dict[tuple[str, str], str]:
        return self._split("sink__")

    def topic_files(self) -> dict[tuple[str, str], str]:
        return self._split("topic__")

    def node_status(self) -> dict[str, str]:
        raw = self.files.get("nodes.txt", b"").decode()
        out = {}
        for line in raw.splitlines():
            kv = dict(tok.split("=", 1) for tok in line.split())
            out[kv["node"]] = kv["status"]
        return out

    def sink_view(self) -> dict[tuple[str, int], bytes]:
        """Deduplicated sink contents: identity to payload of its first copy."""
        view: dict[tuple[str, int], bytes] = {}
        for key in sorted(self.sink_files()):
            for r in self.records(self.sink_files()[key]):
                view.setdefault(r.identity, r.payload)
        return view

    def replica_identities(self, nodes=None, topics=None) -> set[tuple[str, int]]:
        out = set()
        for (topic, node), name in self.topic_files().items():
            if (nodes is None or node in nodes) and (topics is None or topic in topics):
                out.update(r.identity for r in self.records(name))
        return out


# -- trace helpers ------------------------------------------------------------------

def acked_identities(trace, before: int | None = None) -> dict[tuple[str, int], TraceEvent]:
    """Source records whose append was acknowledged, with the ack event."""
    out = {}
    for e in trace:
        if e.kind != "source_ack" or (before is not None and e.time >= before):
            continue
        p = e.get("producer")
        for s in e.get_list("seqs"):
            out.setdefault((p, int(s)), e)
    return out


def node_clusters(trace) -> dict[str, str]:
    return {e.get("id"): e.get("cluster") for e in trace if e.kind == "node_def"}


def _windows(trace, domain: str, end: int):
    """(start, heal_time or None) pairs for partitions of ``domain``."""
    out, start = [], None
    for e in trace:
        if e.kind == "partition" and e.get("domain") == domain:
            start = e.time
        elif e.kind == "heal" and e.get("domain") == domain and start is not None:
            out.append((start, e.time))
            start = None
    if start is not None:
        out.append((start, None))
    return out


def _end_time(trace) -> int:
    return trace[-1].time if trace else 0


# -- data checks ---------------------------------------------------------------------

def check_no_loss(trace, dumps: Dumps) -> CheckResult:
    acked = acked_identities(trace)
    view = dumps.sink_view()
    missing = sorted(set(acked) - set(view))
    if missing:
        p, s = missing[0]
        return CheckResult("no_loss", False, f"missing={len(missing)}/{len(acked)} first={p}#{s} acked_at={_at(acked[missing[0]])}")
    return CheckResult("no_loss", True, f"delivered={len(acked)}/{len(acked)}")


def check_equivalence(a: Dumps, b: Dumps) -> CheckResult:
    va, vb = a.sink_view(), b.sink_view()
    only_a = sorted(set(va) - set(vb))
    only_b = sorted(set(vb) - set(va))
    if only_a:
        return CheckResult("equivalence", False, f"missing_in_b={only_a[0][0]}#{only_a[0][1]} count={len(only_a)}")
    if only_b:
        return CheckResult("equivalence", False, f"missing_in_a={only_b[0][0]}#{only_b[0][1]} count={len(only_b)}")
    diff = sorted(k for k in va if va[k] != vb[k])
    if diff:
        return CheckResult("equivalence", False, f"payload_differs={diff[0][0]}#{diff[0][1]} count={len(diff)}")
    return CheckResult("equivalence", True, f"identical={len(va)}")


def check_order(dumps: Dumps) -> CheckResult:
    files = dumps.sink_files()
    total = 0
    for key in sorted(files):
        seen = set()
        last: dict[str, int] = {}
        for off, r in enumerate(dumps.records(files[key])):
            if r.identity in seen:
                continue
            seen.add(r.identity)
            prev = last.get(r.producer_id)
            if prev is not None and r.producer_seq < prev:
                return CheckResult("order", False,
                                   f"file={files[key]} offset={off} {r.producer_id}#{r.producer_seq} after #{prev}")
            last[r.producer_id] = r.producer_seq
            total += 1
    return CheckResult("order", True, f"files={len(files)} records={total}")


# -- management checks -------------------------------------------------------------------

def check_reschedule(trace, node: str, stage: str, bound: int) -> CheckResult:
    name = "reschedule"
    crash = None
    host = None
    for e in trace:
        if e.kind == "placement" and e.get("stage") == stage:
            host = e.get("target")
        elif e.kind == "crash" and e.node == node and host == node:
            crash = e
            break
    if crash is None:
        raise CheckConfigError(f"{stage} was never hosted on {node} when it crashed")
    crashed = {node}
    placed = None
    for e in trace:
        if e.seq <= crash.seq:
            continue
        if e.kind == "crash":
            crashed.add(e.node)
        elif e.kind == "restart":
            crashed.discard(e.node)
        elif e.kind == "placement" and e.get("stage") == stage:
            target = e.get("target")
            if target not in ("pending", node) and target not in crashed:
                placed = e
                break
    if placed is None:
        return CheckResult(name, False, f"{stage} never re-placed after {_at(crash)}")
    delay = placed.time - crash.time
    if delay > bound:
        return CheckResult(name, False, f"re-placed after {delay}ms > bound {bound}ms at {_at(placed)}")
    target = placed.get("target")
    for e in trace:
        if (e.seq > placed.seq and e.node == target and e.get("stage") == stage
                and e.kind in ("stage_batch", "source_generate") and (e.get_int("count") or 0) > 0):
            return CheckResult(name, True, f"{stage} on {target} after {delay}ms, processing at t={e.time}")
    return CheckResult(name, False, f"{stage} placed on {target} at {_at(placed)} but never processed records")


def _bridges(trace) -> set[str]:
    out = set()
    for e in trace:
        if e.kind in ("stage_def", "move"):
            if e.get("kind") == "bridge":
                out.add(e.get("stage"))
    return out


def check_buffering(trace, start: int | None = None, end: int | None = None) -> CheckResult:
    name = "buffering"
    clusters = node_clusters(trace)
    topic_cluster = {e.get("topic"): e.get("cluster") for e in trace if e.kind == "topic_def"}
    if start is None:
        wins = _windows(trace, "wan", _end_time(trace))
        if not wins:
            return CheckResult(name, True, "no WAN partition; vacuous")
        start, end = wins[0]
    bridges = _bridges(trace)
    limit = end if end is not None else float("inf")
    inside = [e for e in trace if start <= e.time < limit]
    leaked = [e for e in inside if e.kind == "append" and e.get("stage") in bridges
              and clusters.get(e.node) == "cloud"]
    if leaked:
        return CheckResult(name, False, f"bridge append to cloud during partition at {_at(leaked[0])}")
    generated = sum(e.get_int("count") for e in inside if e.kind == "source_generate")
    edge_acks = [e for e in inside if e.kind == "append_ack" and topic_cluster.get(e.get("topic")) == "edge"]
    if generated and not edge_acks:
        return CheckResult(name, False, f"{generated} records generated in [{start},{limit}) but no edge append acked")
    parts = [f"window=[{start},{'end' if end is None else end})", f"generated={generated}", f"edge_acks={len(edge_acks)}"]
    if end is None:
        parts.append("drain=not-evaluated")
        return CheckResult(name, True, " ".join(parts))
    # backlog: records committed on each bridge input up to the heal
    inputs = {}
    for e in trace:
        if e.kind in ("stage_def", "move") and e.get("stage") in bridges and e.get("kind") == "bridge":
            inputs[e.get("stage")] = e.get("input")
    for stage, topic in sorted(inputs.items()):
        backlog = 0
        for e in trace:
            if e.kind == "append_ack" and e.get("topic") == topic and e.time < end:
                backlog = max(backlog, e.get_int("last") + 1)
        drained = None
        for e in trace:
            # a backlog that was already consumed before the heal counts as drained
            if (e.kind == "offset_commit" and e.get("topic") == topic
                    and e.get("group", "").rsplit(".g", 1)[0] == stage and e.get_int("offset") >= backlog):
                drained = e
                break
        if backlog and drained is None:
            return CheckResult(name, False, f"{stage} never drained {topic} backlog of {backlog} after heal at {end}")
        if drained is not None:
            parts.append(f"{stage}_drained_at={drained.time}")
    parts.append(f"drain=ok")
    return CheckResult(name, True, " ".join(parts))


def _degraded_windows(trace, cluster: str):
    out, start = [], None
    for e in trace:
        if e.kind == "degraded_status" and e.get("cluster") == cluster:
            bad = "degraded_no_quorum" in e.get_list("status")
            if bad and start is None:
                start = e.time
            elif not bad and start is not None:
                out.append((start, e.time))
                start = None
    if start is not None:
        out.append((start, None))
    return out


def check_degraded(trace, cluster: str = "edge", start: int | None = None, end: int | None = None) -> CheckResult:
    name = "degraded"
    if start is None:
        wins = _degraded_windows(trace, cluster)
        if not wins:
            return CheckResult(name, False, f"{cluster} never lost its config quorum")
        start, end = wins[0]
    limit = end if end is not None else _end_time(trace) + 1
    inside = [e for e in trace if start <= e.time < limit]
    commits = [e for e in inside if e.kind == "config_commit" and e.get("cluster") == cluster]
    if commits:
        return CheckResult(name, False, f"config committed without quorum at {_at(commits[0])}")
    delivered = sum(1 for e in inside if e.kind == "sink_deliver")
    if not delivered:
        return CheckResult(name, False, f"no sink delivery in [{start},{limit})")
    return CheckResult(name, True, f"window=[{start},{limit}) sink_deliveries={delivered} new_epochs=0")


def check_progress(trace, after: int, minimum: int = 1) -> CheckResult:
    fresh = set()
    seen = set()
    for e in trace:
        if e.kind != "sink_deliver":
            continue
        ident = (e.get("producer"), e.get("seq"))
        if e.time > after and ident not in seen:
            fresh.add(ident)
        seen.add(ident)
    ok = len(fresh) >= minimum
    return CheckResult("progress", ok, f"new_sink_records_after_{after}={len(fresh)} min={minimum}")


def check_failover(trace, cluster: str, bound: int) -> CheckResult:
    name = "failover"
    clusters = node_clusters(trace)
    leader = None
    crashes = []
    for e in trace:
        if e.kind == "leader_elected" and e.get("cluster") == cluster:
            leader = e.node
        elif e.kind == "crash" and e.node == leader and clusters.get(e.node) == cluster:
            crashes.append(e)
            leader = None
    if not crashes:
        raise CheckConfigError(f"no {cluster} config leader crashed")
    notes = []
    for c in crashes:
        nxt = next((e for e in trace if e.seq > c.seq and e.kind == "config_commit"
                    and e.get("cluster") == cluster and e.node != c.node), None)
        if nxt is None:
            return CheckResult(name, False, f"no epoch committed after leader crash {_at(c)}")
        delay = nxt.time - c.time
        if delay > bound:
            return CheckResult(name, False, f"first commit {delay}ms after {_at(c)} exceeds {bound}ms")
        notes.append(f"{c.node}->{nxt.node}:{delay}ms")
    return CheckResult(name, True, " ".join(notes))


# -- invariant checks -----------------------------------------------------------------------

def check_isolation(trace) -> CheckResult:
    down = set()
    for e in trace:
        if e.kind == "crash":
            down.add(e.node)
        elif e.kind == "restart":
            down.discard(e.node)
        elif e.node in down:
            return CheckResult("isolation", False, f"event on crashed node {_at(e)}")
    return CheckResult("isolation", True, f"events={len(trace)}")


def check_partition_soundness(trace) -> CheckResult:
    cut = set()
    for e in trace:
        if e.kind == "partition":
            cut.add(e.get("domain"))
        elif e.kind == "heal":
            cut.discard(e.get("domain"))
        elif e.kind == "deliver" and e.get("domain") in cut:
            return CheckResult("partition_soundness", False, f"delivery across cut link {_at(e)}")
    return CheckResult("partition_soundness", True, "no delivery over a partitioned link")


def check_leader_uniqueness(trace) -> CheckResult:
    seen: dict[tuple[str, str], str] = {}
    for e in trace:
        if e.kind == "leader_elected":
            key = (e.get("cluster"), e.get("term"))
            if key in seen and seen[key] != e.node:
                return CheckResult("leader_uniqueness", False,
                                   f"term {key[1]} of {key[0]} led by {seen[key]} and {e.node} {_at(e)}")
            seen[key] = e.node
    return CheckResult("leader_uniqueness", True, f"terms={len(seen)}")


def check_config_agreement(trace) -> CheckResult:
    clusters = node_clusters(trace)
    by_epoch: dict[tuple[str, str], tuple[str, TraceEvent]] = {}
    for e in trace:
        if e.kind != "config_apply":
            continue
        key = (clusters.get(e.node, "?"), e.get("epoch"))
        val = (e.get("term"), e.get("digest"))
        prev = by_epoch.get(key)
        if prev is None:
            by_epoch[key] = (val, e)
        elif prev[0] != val:
            return CheckResult("config_agreement", False,
                               f"epoch {key[1]} differs: {_at(prev[1])} vs {_at(e)}")
    return CheckResult("config_agreement", True, f"epochs={len(by_epoch)}")


def check_affinity(trace) -> CheckResult:
    clusters = node_clusters(trace)
    affinity: dict[str, str] = {}
    n = 0
    for e in trace:
        if e.kind in ("stage_def", "move"):
            affinity[e.get("stage")] = e.get("affinity")
        elif e.kind in ("stage_start", "stage_batch", "source_generate", "sink_deliver"):
            want = affinity.get(e.get("stage"))
            n += 1
            if want not in (None, "any") and clusters.get(e.node) != want:
                return CheckResult("affinity", False, f"{e.get('stage')} ({want}) ran on {e.node} {_at(e)}")
    return CheckResult("affinity", True, f"stage_events={n}")


def survivor_containment(trace, dumps: Dumps, at: int, topics=None) -> CheckResult:
    """Every record acked before ``at`` is held by some replica that is still up.

    ``topics`` limits which replicas count, e.g. to the topic the source wrote.
    """
    acked = acked_identities(trace, before=at)
    alive = {n for n, s in dumps.node_status().items() if s == "up"}
    held = dumps.replica_identities(alive, topics)
    missing = sorted(set(acked) - held)
    if missing:
        return CheckResult("survivor_containment", False,
                           f"missing={len(missing)} first={missing[0][0]}#{missing[0][1]}")
    return CheckResult("survivor_containment", True, f"acked={len(acked)} held_by={','.join(sorted(alive))}")


TRACE_ONLY = {
    "isolation": check_isolation,
    "partition_soundness": check_partition_soundness,
    "leader_uniqueness": check_leader_uniqueness,
    "config_agreement": check_config_agreement,
    "affinity": check_affinity,
}


def run_check(spec, trace, dumps: Dumps, equivalent: Dumps | None = None, timing=None) -> CheckResult:
    """Evaluate one ``CheckSpec`` from a scenario file."""
    p = dict(spec.params)
    name = spec.name
    try:
        if name in TRACE_ONLY:
            return TRACE_ONLY[name](trace)
        if name == "no_loss":
            return check_no_loss(trace, dumps)
        if name == "order":
            return check_order(dumps)
        if name == "equivalence":
            if equivalent is None:
                raise CheckConfigError("no reference run to compare against")
            return check_equivalence(dumps, equivalent)
        if name == "reschedule":
            return check_reschedule(trace, p["node"], p["stage"], p["bound"])
        if name == "buffering":
            return check_buffering(trace, p.get("start"), p.get("end"))
        if name == "degraded":
            return check_degraded(trace, p.get("cluster", "edge"), p.get("start"), p.get("end"))
        if name == "progress":
            return check_progress(trace, p.get("after", 0), p.get("min", 1))
        if name == "failover":
            bound = p.get("bound", 3 * (timing.election_max if timing else 300))
            return check_failover(trace, p.get("cluster", "edge"), bound)
    except CheckConfigError as exc:
        return CheckResult(name, False, f"misconfigured: {exc}")
    raise CheckConfigError(f"unknown check {name}")
