"""Stage runners: the processing loops hosted by a node agent.

A stage consumes its input topic from the group's committed offset,
suppresses duplicates, transforms, appends downstream and only then
commits the new offset together with its dedup snapshot. A crash anywhere
in that sequence replays the batch; duplicates it creates are dropped by
the next consumer.
"""

from __future__ import annotations

import random

from ..log.client import LogClient
from ..log.codec import Record, encode_records
from ..sim import Node, Sleep, Task
from .dedup import DedupState
from .spec import SINK, SOURCE, StageSpec
from .transforms import get_transform

BATCH = 16
POLL = 50
BACKOFF = 50


def producer_id(node_id: str) -> str:
    return f"cam-{node_id}"


def synthetic_body(seed: int, producer: str, seq: int) -> bytes:
    rng = random.Random(f"{seed}/{producer}/{seq}")
    return f"{producer}#{seq}:".encode() + rng.randbytes(16)


def sink_key(stage_id: str) -> str:
    return f"sink/{stage_id}"


class StageRunner:
    def __init__(self, node: Node, spec: StageSpec, client: LogClient, batch: int = BATCH):
        self.node = node
        self.spec = spec
        self.client = client
        self.batch = batch
        self.transform = get_transform(spec.transform)
        self.task: Task | None = None
        self.processed = 0

    def start(self) -> "StageRunner":
        s = self.spec
        self.node.trace("stage_start", stage=s.stage_id, kind=s.kind, generation=s.generation,
                        input=s.input or "none", output=s.output or "none")
        self.task = self.node.spawn(self.run(), s.stage_id)
        return self

    def stop(self) -> None:
        if self.task is not None:
            self.task.cancel()
        self.node.trace("stage_stop", stage=self.spec.stage_id, generation=self.spec.generation)

    def _resume(self):
        s = self.spec
        while True:
            reply = yield from self.client.fetch_committed(s.group, s.input)
            if reply is not None and reply.ok:
                break
            yield Sleep(BACKOFF)
        offset = s.start_offset if reply.offset is None else reply.offset
        return offset, DedupState.from_snapshot(reply.dedup)

    def run(self):
        s = self.spec
        c = self.client
        offset, dedup = yield from self._resume()
        while True:
            reply = yield from c.fetch(s.input, offset, self.batch)
            if reply is None or not reply.ok:
                yield Sleep(BACKOFF)
                continue
            recs = reply.records
            if not recs:
                yield Sleep(POLL)
                continue
            trial = dedup.copy()
            fresh = [r for r in recs if trial.observe(r.producer_id, r.producer_seq)]
            outs = [o for o in map(self.transform, fresh) if o is not None]
            if s.kind == SINK:
                self._deliver(outs)
            elif outs:
                while True:
                    rep = yield from c.append(s.output, outs, stage=s.stage_id)
                    if rep is not None and rep.ok:
                        break
                    yield Sleep(BACKOFF)
            rep = yield from c.commit_offset(s.group, s.input, offset + len(recs), trial.snapshot())
            if rep is not None and rep.ok:
                self.node.trace("stage_batch", stage=s.stage_id, input=s.input, offset=offset,
                                count=len(recs), fresh=len(fresh), out=len(outs))
                offset += len(recs)
                dedup = trial
                self.processed += len(recs)
            else:
                # outcome unknown: restart from whatever the group last committed
                offset, dedup = yield from self._resume()

    def _deliver(self, outs: list[Record]) -> None:
        if not outs:
            return
        self.node.durable.append(sink_key(self.spec.stage_id), encode_records(outs))
        for r in outs:
            self.node.trace("sink_deliver", stage=self.spec.stage_id, producer=r.producer_id,
                            seq=r.producer_seq)


class SourceRunner:
    """Turns ``generate`` requests into records appended to the output topic."""

    def __init__(self, node: Node, spec: StageSpec, client: LogClient, seed: int, batch: int = BATCH):
        if spec.kind != SOURCE:
            raise ValueError(f"{spec.stage_id} is not a source")
        self.node = node
        self.spec = spec
        self.client = client
        self.seed = seed
        self.batch = batch
        self.transform = get_transform(spec.transform)
        self.producer = producer_id(node.node_id)
        self.outbox: list[Record] = []
        self.task: Task | None = None

    @property
    def _seq_key(self) -> str:
        return f"producer/{self.spec.stage_id}"

    @property
    def next_seq(self) -> int:
        raw = self.node.durable.get(self._seq_key)
        return int(raw) if raw else 0

    def start(self) -> "SourceRunner":
        s = self.spec
        self.node.trace("stage_start", stage=s.stage_id, kind=s.kind, generation=s.generation,
                        input="none", output=s.output)
        self.task = self.node.spawn(self.run(), s.stage_id)
        return self

    def stop(self) -> None:
        if self.task is not None:
            self.task.cancel()
        self.node.trace("stage_stop", stage=self.spec.stage_id, generation=self.spec.generation)

    def generate(self, count: int) -> None:
        if count <= 0:
            return
        first = self.next_seq
        now = self.node.now
        for seq in range(first, first + count):
            body = synthetic_body(self.seed, self.producer, seq)
            out = self.transform(Record(self.producer, seq, body, now))
            if out is not None:
                self.outbox.append(out)
        self.node.durable.put(self._seq_key, str(first + count).encode())
        self.node.trace("source_generate", stage=self.spec.stage_id, producer=self.producer,
                        first=first, count=count)

    def run(self):
        s = self.spec
        while True:
            if not self.outbox:
                yield Sleep(POLL // 5)
                continue
            chunk = self.outbox[:self.batch]
            rep = yield from self.client.append(s.output, chunk, stage=s.stage_id)
            if rep is None or not rep.ok:
                yield Sleep(BACKOFF)
                continue
            del self.outbox[:len(chunk)]
            self.node.trace("source_ack", stage=s.stage_id, producer=self.producer,
                            seqs=[r.producer_seq for r in chunk], first=rep.first, last=rep.last)


def make_runner(node: Node, spec: StageSpec, client: LogClient, seed: int, batch: int = BATCH):
    if spec.kind == SOURCE:
        return SourceRunner(node, spec, client, seed, batch)
    return StageRunner(node, spec, client, batch)
