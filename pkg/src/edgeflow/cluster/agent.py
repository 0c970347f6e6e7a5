"""Per-node agent: heartbeats, config following and stage supervision."""

from __future__ import annotations

from dataclasses import dataclass

from ..log.client import LogClient
from ..pipeline.runtime import BATCH, SourceRunner, make_runner
from ..sim import Message, Node
from .controller import Heartbeat, MetadataUpdate


@dataclass
class Generate(Message):
    service = "agent"
    stage: str
    count: int


class NodeAgent:
    service = "agent"

    def __init__(self, node: Node, masters, client: LogClient, timing, seed: int, batch: int = BATCH):
        self.node = node
        self.masters = sorted(masters)
        self.client = client
        self.timing = timing
        self.seed = seed
        self.batch = batch
        self.known_epoch = 0
        self.config = None
        self.runners: dict = {}
        node.set_timer(0, self._beat)

    @property
    def broker(self):
        return self.node.services.get("broker")

    def _beat(self) -> None:
        b = self.broker
        report = b.report() if b is not None else {}
        for m in self.masters:
            self.node.send(m, Heartbeat(self.node.node_id, self.node.incarnation, self.known_epoch, report))
        self.node.set_timer(self.timing.heartbeat_interval, self._beat)

    def handle(self, src: str, msg) -> None:
        if isinstance(msg, MetadataUpdate):
            if msg.epoch > self.known_epoch:
                self.known_epoch = msg.epoch
                self._apply(msg.config)
        elif isinstance(msg, Generate):
            r = self.runners.get(msg.stage)
            if isinstance(r, SourceRunner):
                r.generate(msg.count)
            else:
                self.node.trace("generate_drop", stage=msg.stage, count=msg.count)

    def _apply(self, cfg) -> None:
        self.config = cfg
        b = self.broker
        for topic in sorted(cfg.topics):
            if b is not None:
                b.apply_assignment(cfg.topics[topic])
        self.client.learn(cfg.topics.values())
        me = self.node.node_id
        desired = {sid: cfg.stages[sid] for sid, n in cfg.placements.items() if n == me}
        for sid in sorted(self.runners):
            if desired.get(sid) != self.runners[sid].spec:
                self.runners.pop(sid).stop()
        for sid in sorted(desired):
            if sid not in self.runners:
                self.runners[sid] = make_runner(self.node, desired[sid], self.client, self.seed, self.batch).start()
