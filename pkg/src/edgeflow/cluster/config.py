"""Cluster configuration: the state machine replicated by the config store.

Every committed command bumps ``epoch`` by exactly one. Commands are
``(kind, payload)`` pairs; the payload is JSON so the durable config log
stays language neutral::

    epoch(8) | term(8) | cmd_kind(1) | payload_len(4) | payload
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, replace

from ..log.assign import TopicAssignment
from ..pipeline.spec import StageSpec

UP = "up"
SUSPECTED = "suspected"
FAILED = "failed"

MASTER = "master"
WORKER = "worker"

_ALLOWED = {
    (UP, SUSPECTED), (SUSPECTED, UP), (SUSPECTED, FAILED), (FAILED, UP),
}

CMD_LEADER = 1
CMD_NODE_STATUS = 2
CMD_PLACE = 3
CMD_TOPIC = 4
CMD_STAGE = 5
CMD_STAGE_REMOVE = 6
CMD_BATCH = 7

CMD_NAMES = {
    CMD_LEADER: "leader", CMD_NODE_STATUS: "node_status", CMD_PLACE: "place",
    CMD_TOPIC: "topic", CMD_STAGE: "stage", CMD_STAGE_REMOVE: "stage_remove",
    CMD_BATCH: "batch",
}

_ENTRY = struct.Struct(">QQBI")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NodeDescriptor:
    node_id: str
    cluster: str
    role: str
    status: str = UP


@dataclass(frozen=True)
class Command:
    kind: int
    payload: dict

    @property
    def name(self) -> str:
        return CMD_NAMES.get(self.kind, str(self.kind))

    def encode_payload(self) -> bytes:
        return json.dumps(self.payload, sort_keys=True, separators=(",", ":")).encode()

    def digest(self) -> str:
        return f"{zlib.crc32(bytes([self.kind]) + self.encode_payload()):08x}"


@dataclass(frozen=True)
class ConfigEntry:
    epoch: int
    term: int
    command: Command


def encode_entry(e: ConfigEntry) -> bytes:
    payload = e.command.encode_payload()
    return _ENTRY.pack(e.epoch, e.term, e.command.kind, len(payload)) + payload


def decode_entries(data: bytes) -> list[ConfigEntry]:
    out = []
    pos = 0
    while pos < len(data):
        if pos + _ENTRY.size > len(data):
            raise ConfigError(f"truncated config entry at byte {pos}")
        epoch, term, kind, n = _ENTRY.unpack_from(data, pos)
        pos += _ENTRY.size
        if pos + n > len(data):
            raise ConfigError(f"config payload overruns log at byte {pos}")
        payload = json.loads(data[pos:pos + n])
        pos += n
        out.append(ConfigEntry(epoch, term, Command(kind, payload)))
    return out


# -- command constructors --------------------------------------------------------

def cmd_leader(node: str, term: int) -> Command:
    return Command(CMD_LEADER, {"leader": node, "term": term})


def cmd_node_status(node: str, status: str) -> Command:
    return Command(CMD_NODE_STATUS, {"node": node, "status": status})


def cmd_place(stage: str, node: str | None) -> Command:
    return Command(CMD_PLACE, {"stage": stage, "node": node})


def cmd_topic(a: TopicAssignment) -> Command:
    return Command(CMD_TOPIC, a.to_dict())


def cmd_stage(spec: StageSpec) -> Command:
    return Command(CMD_STAGE, spec.to_dict())


def cmd_stage_remove(stage: str) -> Command:
    return Command(CMD_STAGE_REMOVE, {"stage": stage})


def cmd_batch(cmds) -> Command:
    return Command(CMD_BATCH, {"cmds": [[c.kind, c.payload] for c in cmds]})


class ClusterConfig:
    """Desired and observed state of one cluster."""

    def __init__(self, cluster: str, members, topics=(), stages=()):
        self.cluster = cluster
        self.epoch = 0
        self.term = 0
        self.leader: str | None = None
        self.members: dict[str, NodeDescriptor] = {m.node_id: m for m in members}
        self.topics: dict[str, TopicAssignment] = {t.topic: t for t in topics}
        self.stages: dict[str, StageSpec] = {s.stage_id: s for s in stages}
        self.placements: dict[str, str | None] = {s.stage_id: None for s in stages}

    def copy(self) -> "ClusterConfig":
        c = ClusterConfig.__new__(ClusterConfig)
        c.cluster = self.cluster
        c.epoch, c.term, c.leader = self.epoch, self.term, self.leader
        c.members = dict(self.members)
        c.topics = dict(self.topics)
        c.stages = dict(self.stages)
        c.placements = dict(self.placements)
        return c

    def status(self, node: str) -> str | None:
        m = self.members.get(node)
        return m.status if m else None

    def up_nodes(self) -> list[str]:
        return sorted(n for n, m in self.members.items() if m.status == UP)

    def stage_count(self, node: str) -> int:
        return sum(1 for p in self.placements.values() if p == node)

    def replica_count(self, node: str) -> int:
        return sum(1 for a in self.topics.values() if node in a.replicas)

    def apply(self, entry: ConfigEntry) -> str | None:
        """Apply a committed entry; returns the reason if its command was rejected.

        A rejected command (say, a placement on a node that failed after it
        was proposed) leaves the state untouched but still consumes the
        epoch, so every replica of the log stays in step.
        """
        if entry.epoch != self.epoch + 1:
            raise ConfigError(f"epoch gap: have {self.epoch}, got {entry.epoch}")
        trial = self.copy()
        try:
            trial._apply(entry.command)
        except ConfigError as exc:
            self.epoch = entry.epoch
            return str(exc)
        self.leader, self.term = trial.leader, trial.term
        self.members, self.topics = trial.members, trial.topics
        self.stages, self.placements = trial.stages, trial.placements
        self.epoch = entry.epoch
        return None

    def _apply(self, cmd: Command) -> None:
        p = cmd.payload
        if cmd.kind == CMD_LEADER:
            self.leader, self.term = p["leader"], p["term"]
        elif cmd.kind == CMD_NODE_STATUS:
            m = self.members[p["node"]]
            if (m.status, p["status"]) not in _ALLOWED:
                raise ConfigError(f"illegal status change {m.status}->{p['status']} for {m.node_id}")
            self.members[m.node_id] = replace(m, status=p["status"])
        elif cmd.kind == CMD_PLACE:
            if p["stage"] not in self.stages:
                raise ConfigError(f"placement of unknown stage {p['stage']}")
            node = p["node"]
            if node is not None and self.status(node) not in (UP, SUSPECTED):
                raise ConfigError(f"placement on {node} which is {self.status(node)}")
            self.placements[p["stage"]] = node
        elif cmd.kind == CMD_TOPIC:
            a = TopicAssignment.from_dict(p)
            self.topics[a.topic] = a
        elif cmd.kind == CMD_STAGE:
            spec = StageSpec.from_dict(p)
            self.stages[spec.stage_id] = spec
            self.placements.setdefault(spec.stage_id, None)
        elif cmd.kind == CMD_STAGE_REMOVE:
            self.stages.pop(p["stage"], None)
            self.placements.pop(p["stage"], None)
        elif cmd.kind == CMD_BATCH:
            for kind, payload in p["cmds"]:
                self._apply(Command(kind, payload))
        else:
            raise ConfigError(f"unknown command kind {cmd.kind}")
