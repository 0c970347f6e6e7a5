"""Randomized append/crash/promote schedules on one 3-replica topic.

Each case is driven by its own seeded generator. The reference model is a
plain list that receives every attempted append in order, as if nothing
ever failed; the real run must keep every acknowledged record, expose a
dense prefix, keep replicas prefix-consistent, and only ever contain
records the reference model also saw, in the same relative order.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass, field

from edgeflow.log import LogCluster, Record

BROKERS = ("B-1", "B-2", "B-3")
TOPIC = "T"


@dataclass
class Outcome:
    case: int
    ops: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    acked: int = 0
    committed: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations


def committed_log(lc: LogCluster, node: str) -> list[Record]:
    r = lc.broker(node).replicas[TOPIC]
    return r.records[: r.commit + 1]


def is_subsequence(small, big) -> bool:
    it = iter(big)
    return all(any(x == y for y in it) for x in small)


def check_prefixes(lc: LogCluster, out: Outcome, where: str) -> None:
    live = [b for b in BROKERS if b in lc.alive() and TOPIC in lc.broker(b).replicas]
    for i, a in enumerate(live):
        ra = lc.broker(a).replicas[TOPIC]
        if ra.commit >= ra.end:
            out.violations.append(f"{where}: {a} commit {ra.commit} beyond end {ra.end}")
        if len(lc.fetch(TOPIC, 0, 10**6, via=a)) != ra.commit + 1:
            out.violations.append(f"{where}: {a} exposes records beyond its commit index")
        for b in live[i + 1:]:
            rb = lc.broker(b).replicas[TOPIC]
            if ra.role == "catchup" or rb.role == "catchup":
                continue
            n = min(ra.commit, rb.commit) + 1
            if ra.records[:n] != rb.records[:n]:
                out.violations.append(f"{where}: {a} and {b} differ below offset {n}")


def heal(lc: LogCluster, down: set) -> None:
    for b in sorted(down):
        lc.restart(b)
    lc.recover_all()
    down.clear()
    lc.run_for(50)
    a = lc.assignments[TOPIC]
    for b in BROKERS:
        if b not in a.replicas:
            lc.re_replicate(TOPIC, b)
    for _ in range(6):
        lc.run_for(150)
        lc.mark_caught_up(TOPIC)
    if lc.assignments[TOPIC].leader is None:
        lc.promote_leader(TOPIC)
        lc.run_for(150)


def run_case(case: int, steps: tuple[int, int] = (8, 24)) -> Outcome:
    rng = random.Random(case)
    out = Outcome(case)
    lc = LogCluster(BROKERS, seed=case)
    lc.create_topic(TOPIC, 3, BROKERS)
    reference: list[Record] = []
    acked: list[Record] = []
    seqs = defaultdict(int)
    down: set[str] = set()
    for step in range(rng.randint(*steps)):
        op = rng.choices(["append", "crash", "restart", "promote", "tick"], weights=[6, 2, 2, 1, 1])[0]
        if op == "append":
            p = rng.choice(("cam-a", "cam-b"))
            k = rng.randint(1, 4)
            recs = [Record(p, seqs[p] + i, f"{p}/{seqs[p] + i}".encode(), lc.now) for i in range(k)]
            seqs[p] += k
            reference.extend(recs)
            res = lc.append(TOPIC, recs, limit=800)
            out.ops.append(("append", p, k, res))
            if res is not None:
                acked.extend(recs)
                if res[1] - res[0] + 1 != k:
                    out.violations.append(f"step {step}: ack range {res} for {k} records")
        elif op == "crash":
            live = sorted(lc.alive())
            if not live:
                continue
            b = rng.choice(live)
            lc.crash(b)
            down.add(b)
            out.ops.append(("crash", b))
            if rng.random() < 0.6:
                lc.drop_failed(b)
        elif op == "restart":
            if not down:
                continue
            b = rng.choice(sorted(down))
            down.discard(b)
            lc.restart(b)
            lc.recover_all()
            out.ops.append(("restart", b))
            lc.run_for(30)
            lc.mark_caught_up(TOPIC)
        elif op == "promote":
            for b in sorted(down):
                lc.drop_failed(b)
            a = lc.assignments[TOPIC]
            if a.leader is None or a.leader not in lc.alive():
                lc.promote_leader(TOPIC)
            out.ops.append(("promote", lc.assignments[TOPIC].leader))
        else:
            lc.run_for(rng.randint(1, 200))
            lc.mark_caught_up(TOPIC)
            out.ops.append(("tick",))
        check_prefixes(lc, out, f"step {step}")
    heal(lc, down)
    check_prefixes(lc, out, "final")
    leader = lc.assignments[TOPIC].leader
    if leader is None:
        out.violations.append("no leader after healing")
        return out
    log = committed_log(lc, leader)
    ids = [r.identity for r in log]
    out.acked, out.committed = len(acked), len(log)
    missing = [r.identity for r in acked if r.identity not in set(ids)]
    if missing:
        out.violations.append(f"durability: acked {missing[0]} lost ({len(missing)} total)")
    if len(set(ids)) != len(ids):
        out.violations.append("duplicate record in committed log")
    if not is_subsequence(log, reference):
        out.violations.append("committed log is not a subsequence of the reference")
    last = {}
    for off, r in enumerate(log):
        if r.producer_seq <= last.get(r.producer_id, -1):
            out.violations.append(f"producer order: {r.identity} at offset {off}")
            break
        last[r.producer_id] = r.producer_seq
    return out


def run_suite(cases: range) -> list[Outcome]:
    return [run_case(c) for c in cases]
