"""Broker: hosts topic replicas on one node.

The leader of a topic assigns offsets, writes locally, pushes records to
followers and acknowledges an append once a quorum of the in-sync replicas
hold it durably. Followers only ever extend their log with contiguous
records from the current leader, so every in-sync log is a prefix of the
leader's. A replica that restarts comes back ``recovering`` and stays
silent until the controller either reinstates it or tells it to catch up
from scratch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..sim import Message, Node
from .assign import TopicAssignment
from .codec import Record, encode_record, iter_frames

LEADER = "leader"
FOLLOWER = "follower"
CATCHUP = "catchup"
RECOVERING = "recovering"
NONE = "none"

CHUNK = 64


# -- wire messages ------------------------------------------------------------

@dataclass
class Append(Message):
    service = "broker"
    topic: str
    records: list
    stage: str | None = None
    req: object = None


@dataclass
class AppendReply(Message):
    reply_to: object
    ok: bool
    first: int | None = None
    last: int | None = None
    error: str | None = None
    leader: str | None = None


@dataclass
class Fetch(Message):
    service = "broker"
    topic: str
    offset: int
    max: int
    req: object = None


@dataclass
class FetchReply(Message):
    reply_to: object
    ok: bool
    records: list = field(default_factory=list)
    commit: int = -1
    error: str | None = None
    leader: str | None = None


@dataclass
class CommitOffset(Message):
    service = "broker"
    group: str
    topic: str
    offset: int
    dedup: dict | None = None
    req: object = None


@dataclass
class CommitReply(Message):
    reply_to: object
    ok: bool
    offset: int | None = None
    error: str | None = None
    leader: str | None = None


@dataclass
class FetchCommitted(Message):
    service = "broker"
    group: str
    topic: str
    req: object = None


@dataclass
class CommittedReply(Message):
    reply_to: object
    ok: bool
    offset: int | None = None
    dedup: dict | None = None
    error: str | None = None
    leader: str | None = None


@dataclass
class Replicate(Message):
    service = "broker"
    topic: str
    leader_epoch: int
    leader_start: int
    prev_end: int
    records: list
    commit: int
    groups: dict
    epochs: list = field(default_factory=list)


@dataclass
class ReplicateAck(Message):
    service = "broker"
    topic: str
    leader_epoch: int
    end: int
    gap: bool = False


@dataclass
class AssignTopic(Message):
    service = "broker"
    assignment: TopicAssignment


# -- replica state ------------------------------------------------------------

class Replica:
    def __init__(self, broker: "Broker", topic: str):
        self.broker = broker
        self.topic = topic
        self.assignment: TopicAssignment | None = None
        self.role = NONE
        self.records: list[Record] = []
        self.starts: list[int] = []
        self.index: dict[tuple[str, int], int] = {}
        # [leader_epoch, first offset] for each epoch present in the log
        self.epochs: list[list[int]] = []
        self.commit = -1
        self.leader_epoch = 0
        self.synced = True
        self.groups: dict[str, tuple[int, dict]] = {}
        # leader only
        self.leader_start = 0
        self.nxt: dict[str, int] = {}
        self.match: dict[str, int] = {}
        self.pending: list = []
        self.caught_up: set[str] = set()

    @property
    def end(self) -> int:
        return len(self.records)

    @property
    def last_epoch(self) -> int:
        return self.epochs[-1][0] if self.epochs else 0

    @property
    def position(self) -> tuple[int, int]:
        """(epoch of the last record, log end): larger means more up to date."""
        return self.last_epoch, self.end

    @property
    def node(self) -> Node:
        return self.broker.node

    # durable helpers
    def _key(self, kind: str) -> str:
        return f"{kind}/{self.topic}"

    def load(self) -> None:
        d = self.node.durable
        data = d.get(self._key("log")) or b""
        for start, _, rec in iter_frames(data):
            self.starts.append(start)
            self.index.setdefault(rec.identity, len(self.records))
            self.records.append(rec)
        hw = d.get(self._key("hw"))
        self.commit = int(hw) if hw else -1
        raw = d.get(self._key("assign"))
        if raw:
            self.assignment = TopicAssignment.from_dict(json.loads(raw))
            self.leader_epoch = self.assignment.leader_epoch
        ep = d.get(self._key("epochs"))
        if ep:
            self.epochs = [e for e in json.loads(ep) if e[1] < self.end]
        g = d.get(self._key("groups"))
        if g:
            self.groups = {k: (v[0], v[1]) for k, v in json.loads(g).items()}

    def set_epochs(self, epochs: list) -> None:
        epochs = [list(e) for e in epochs if e[1] < self.end]
        if epochs != self.epochs:
            self.epochs = epochs
            self.node.durable.put(self._key("epochs"), json.dumps(epochs).encode())

    def write(self, records: list[Record], epoch: int | None = None) -> None:
        if not records:
            return
        if epoch is not None and self.last_epoch != epoch:
            self.epochs.append([epoch, self.end])
            self.node.durable.put(self._key("epochs"), json.dumps(self.epochs).encode())
        d = self.node.durable
        key = self._key("log")
        first = self.end
        for rec in records:
            self.starts.append(d.size(key))
            d.append(key, encode_record(rec))
            self.index.setdefault(rec.identity, len(self.records))
            self.records.append(rec)
        self.node.trace("durable_write", topic=self.topic, first=first, count=len(records))

    def truncate(self, end: int) -> None:
        if end >= self.end:
            return
        d = self.node.durable
        d.truncate(self._key("log"), self.starts[end] if end < len(self.starts) else d.size(self._key("log")))
        for rec in self.records[end:]:
            if self.index.get(rec.identity, -1) >= end:
                del self.index[rec.identity]
        del self.records[end:]
        del self.starts[end:]
        self.set_epochs(self.epochs)
        if self.commit >= end:
            # only reached for catch-up replicas that restart from scratch
            self._set_commit(end - 1, force=True)
        self.node.trace("truncate", topic=self.topic, end=end)

    def _set_commit(self, commit: int, force: bool = False) -> None:
        if commit > self.commit or force:
            self.commit = commit
            self.node.durable.put(self._key("hw"), str(commit).encode())

    def save_groups(self) -> None:
        data = {k: [v[0], v[1]] for k, v in sorted(self.groups.items())}
        self.node.durable.put(self._key("groups"), json.dumps(data, sort_keys=True).encode())

    def merge_groups(self, groups: dict) -> None:
        changed = False
        for g, (off, dedup) in groups.items():
            cur = self.groups.get(g)
            if cur is None or off > cur[0]:
                self.groups[g] = (off, dedup)
                changed = True
        if changed:
            self.save_groups()


class Broker:
    service = "broker"

    def __init__(self, node: Node, tick_interval: int = 100):
        self.node = node
        self.tick_interval = tick_interval
        self.replicas: dict[str, Replica] = {}
        if node.restarted:
            for key in node.durable.keys("log/"):
                r = Replica(self, key[4:])
                r.load()
                r.role = RECOVERING
                self.replicas[r.topic] = r
        node.set_timer(tick_interval, self._tick)

    # -- assignment ----------------------------------------------------------
    def create_replica(self, a: TopicAssignment) -> None:
        """Genesis topic creation: durable empty log plus assignment."""
        self.apply_assignment(a)

    def apply_assignment(self, a: TopicAssignment) -> None:
        me = self.node.node_id
        r = self.replicas.get(a.topic)
        if r is not None and r.assignment is not None and a.version <= r.assignment.version:
            return
        if r is None:
            if me not in a.replicas:
                return
            r = Replica(self, a.topic)
            self.node.durable.put(r._key("log"), b"")
            self.replicas[a.topic] = r
            self.node.trace("topic_create", topic=a.topic)
        self.node.durable.put(r._key("assign"), json.dumps(a.to_dict(), sort_keys=True).encode())
        prev_role, prev_epoch = r.role, r.leader_epoch
        r.assignment = a
        r.leader_epoch = a.leader_epoch
        if me not in a.replicas:
            self._set_role(r, NONE)
            return
        if prev_role == RECOVERING:
            if a.leader == me and a.reinstated == me:
                self._become_leader(r)
            elif me in a.in_sync:
                pass
            else:
                self._become_catchup(r)
            return
        if a.leader == me:
            if prev_role == LEADER and prev_epoch == a.leader_epoch:
                self._update_members(r)
            else:
                self._become_leader(r)
        elif me in a.in_sync:
            if prev_role == CATCHUP and prev_epoch == a.leader_epoch:
                self._set_role(r, FOLLOWER)
            else:
                r.synced = prev_role == FOLLOWER and prev_epoch == a.leader_epoch
                self._set_role(r, FOLLOWER)
        else:
            if prev_role != CATCHUP or prev_epoch != a.leader_epoch:
                self._become_catchup(r)

    def _set_role(self, r: Replica, role: str) -> None:
        if r.role != role:
            r.role = role
            self.node.trace("role", topic=r.topic, role=role, epoch=r.leader_epoch)
        if role != LEADER:
            r.pending = []
            r.caught_up = set()

    def _become_catchup(self, r: Replica) -> None:
        r.truncate(0)
        r.groups = {}
        r.save_groups()
        r.synced = True
        self._set_role(r, CATCHUP)

    def _become_leader(self, r: Replica) -> None:
        r.role = NONE
        self._set_role(r, LEADER)
        r.leader_start = r.end
        r.match = {}
        r.nxt = {}
        r.pending = []
        r.caught_up = set()
        self._update_members(r)

    def _update_members(self, r: Replica) -> None:
        followers = r.assignment.followers
        for f in list(r.match):
            if f not in followers:
                del r.match[f]
                r.nxt.pop(f, None)
        for f in followers:
            if f not in r.match:
                r.match[f] = 0
                r.nxt[f] = r.end
                self._send_chunk(r, f, r.end, probe=True)
        r.caught_up &= set(followers) - set(r.assignment.in_sync)
        self._advance_commit(r)

    # -- leader side -----------------------------------------------------------
    def _send_chunk(self, r: Replica, follower: str, start: int, probe: bool = False) -> None:
        recs = [] if probe else r.records[start:start + CHUNK]
        groups = {g: v for g, v in r.groups.items()}
        self.node.send(follower, Replicate(r.topic, r.leader_epoch, r.leader_start, start, recs,
                                           r.commit, groups, [list(e) for e in r.epochs]))
        r.nxt[follower] = start + len(recs)

    def _advance_commit(self, r: Replica) -> None:
        a = r.assignment
        me = self.node.node_id
        ends = sorted((r.end if n == me else r.match.get(n, 0) for n in a.in_sync), reverse=True)
        if not ends:
            return
        new_commit = ends[a.quorum - 1] - 1 if len(ends) >= a.quorum else -1
        # records inherited from earlier leaders become readable once every
        # in-sync copy holds them, even if fewer than a quorum remain
        new_commit = max(new_commit, min(ends[-1], r.leader_start) - 1)
        if new_commit <= r.commit:
            return
        r._set_commit(new_commit)
        done = [p for p in r.pending if p[0] <= new_commit]
        r.pending = [p for p in r.pending if p[0] > new_commit]
        for last, first, src, req in done:
            self.node.trace("append_ack", topic=r.topic, first=first, last=last, commit=new_commit, client=src)
            self.node.send(src, AppendReply(req, True, first, last))

    def _on_append(self, src: str, msg: Append, r: Replica) -> None:
        start = r.end
        # a retried append finds its records already in the log; keep one copy
        seen = [r.index[rec.identity] for rec in msg.records if rec.identity in r.index]
        recs = [rec for rec in msg.records if rec.identity not in r.index]
        if not recs and not seen:
            self.node.send(src, AppendReply(msg.req, True, start, start - 1))
            return
        self.node.trace("append", topic=r.topic, first=start, count=len(recs), dup=len(seen), client=src,
                        stage=msg.stage or "-")
        r.write(recs, r.leader_epoch)
        offsets = seen + list(range(start, r.end))
        first, last = min(offsets), max(offsets)
        r.pending.append((last, first, src, msg.req))
        if recs:
            for f in r.assignment.followers:
                if r.nxt.get(f) == start:
                    self._send_chunk(r, f, start)
        self._advance_commit(r)
        if last <= r.commit and r.pending and r.pending[-1][3] is msg.req:
            r.pending.pop()
            self.node.trace("append_ack", topic=r.topic, first=first, last=last, commit=r.commit, client=src)
            self.node.send(src, AppendReply(msg.req, True, first, last))

    def _on_ack(self, src: str, msg: ReplicateAck, r: Replica) -> None:
        if r.role != LEADER or msg.leader_epoch != r.leader_epoch or src not in r.match:
            return
        end = min(msg.end, r.end)
        if end > r.match[src]:
            r.match[src] = end
        if msg.gap or r.nxt.get(src, 0) < end:
            r.nxt[src] = end
        if end < r.end and r.nxt[src] <= end:
            self._send_chunk(r, src, end)
        if end >= r.end and src not in r.assignment.in_sync and src not in r.caught_up:
            r.caught_up.add(src)
            self.node.trace("replica_caught_up", topic=r.topic, follower=src, end=end)
        self._advance_commit(r)

    def _tick(self) -> None:
        for topic in sorted(self.replicas):
            r = self.replicas[topic]
            if r.role == LEADER:
                for f in r.assignment.followers:
                    self._send_chunk(r, f, r.match.get(f, 0))
        self.node.set_timer(self.tick_interval, self._tick)

    # -- follower side ---------------------------------------------------------
    def _on_replicate(self, src: str, msg: Replicate, r: Replica) -> None:
        if r.role not in (FOLLOWER, CATCHUP) or msg.leader_epoch != r.leader_epoch:
            return
        if r.assignment.leader != src:
            return
        if not r.synced:
            r.truncate(min(r.end, msg.leader_start))
            r.synced = True
        if msg.prev_end > r.end:
            self.node.send(src, ReplicateAck(r.topic, r.leader_epoch, r.end, gap=True))
            return
        skip = r.end - msg.prev_end
        overlap = msg.records[:skip]
        for i, rec in enumerate(overlap):
            if r.records[msg.prev_end + i] != rec:
                raise AssertionError(f"{r.topic}: divergent replica at {msg.prev_end + i} on {self.node.node_id}")
        r.write(msg.records[skip:])
        r.set_epochs(msg.epochs)
        commit = min(msg.commit, r.end - 1)
        if commit > r.commit:
            r._set_commit(commit)
        if msg.groups:
            r.merge_groups(msg.groups)
        self.node.send(src, ReplicateAck(r.topic, r.leader_epoch, r.end))

    # -- client requests -------------------------------------------------------
    def _hint(self, r: Replica | None) -> str | None:
        if r is None or r.assignment is None:
            return None
        return r.assignment.leader

    def handle(self, src: str, msg) -> None:
        if isinstance(msg, AssignTopic):
            self.apply_assignment(msg.assignment)
            return
        r = self.replicas.get(msg.topic)
        if isinstance(msg, Replicate):
            if r is not None:
                self._on_replicate(src, msg, r)
        elif isinstance(msg, ReplicateAck):
            if r is not None:
                self._on_ack(src, msg, r)
        elif isinstance(msg, Append):
            if r is None or r.role != LEADER:
                self.node.send(src, AppendReply(msg.req, False, error="not_leader", leader=self._hint(r)))
            else:
                self._on_append(src, msg, r)
        elif isinstance(msg, Fetch):
            if r is None or r.role not in (LEADER, FOLLOWER):
                self.node.send(src, FetchReply(msg.req, False, error="not_leader", leader=self._hint(r)))
            else:
                self.node.send(src, FetchReply(msg.req, True, self.read(r.topic, msg.offset, msg.max), r.commit))
        elif isinstance(msg, CommitOffset):
            self._on_commit_offset(src, msg, r)
        elif isinstance(msg, FetchCommitted):
            if r is None or r.role != LEADER:
                self.node.send(src, CommittedReply(msg.req, False, error="not_leader", leader=self._hint(r)))
            else:
                g = r.groups.get(msg.group)
                off, dedup = g if g else (None, None)
                self.node.send(src, CommittedReply(msg.req, True, off, dedup))

    def _on_commit_offset(self, src: str, msg: CommitOffset, r: Replica | None) -> None:
        if r is None or r.role != LEADER:
            self.node.send(src, CommitReply(msg.req, False, error="not_leader", leader=self._hint(r)))
            return
        cur = r.groups.get(msg.group)
        if msg.offset > r.commit + 1:
            self.node.send(src, CommitReply(msg.req, False, cur[0] if cur else None, error="beyond_commit"))
            return
        if cur is not None and msg.offset < cur[0]:
            self.node.send(src, CommitReply(msg.req, False, cur[0], error="regress"))
            return
        r.groups[msg.group] = (msg.offset, msg.dedup or {})
        r.save_groups()
        self.node.trace("offset_commit", topic=r.topic, group=msg.group, offset=msg.offset)
        self.node.send(src, CommitReply(msg.req, True, msg.offset))

    # -- local queries -----------------------------------------------------------
    def read(self, topic: str, offset: int, max_records: int) -> list[Record]:
        r = self.replicas[topic]
        stop = min(offset + max_records, r.commit + 1)
        return r.records[offset:stop] if offset < stop else []

    def report(self) -> dict:
        """Per-topic facts shipped to the controller with every heartbeat."""
        log_end, log_pos, caught_up, recovering = {}, {}, {}, []
        for topic in sorted(self.replicas):
            r = self.replicas[topic]
            if r.role == NONE:
                continue
            log_end[topic] = r.end
            log_pos[topic] = list(r.position)
            if r.role == RECOVERING:
                recovering.append(topic)
            if r.role == LEADER and r.caught_up:
                caught_up[topic] = (r.leader_epoch, sorted(r.caught_up))
        return {"log_end": log_end, "log_pos": log_pos, "caught_up": caught_up, "recovering": recovering}
