"""Quorum-replicated config log with term-based leader election.

A minimal Raft: randomized election timeouts, one vote per term, log
up-to-dateness check, majority commit of current-term entries, and a
leader marker entry appended on every election. Two extra rules:

* tie-break: a candidate that receives a vote request for the same term
  from a lower node id with an up-to-date log withdraws and votes for it;
* check-quorum: a leader that has not heard from a majority within the
  maximum election timeout steps down and stops accepting proposals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

from ..sim import Message, Node
from .config import ClusterConfig, Command, ConfigEntry, cmd_leader, decode_entries, encode_entry

FOLLOWER = "follower"
CANDIDATE = "candidate"
LEADER = "leader"


@dataclass
class RequestVote(Message):
    service = "config"
    term: int
    candidate: str
    last_index: int
    last_term: int


@dataclass
class VoteReply(Message):
    service = "config"
    term: int
    granted: bool


@dataclass
class AppendEntries(Message):
    service = "config"
    term: int
    leader: str
    prev_index: int
    prev_term: int
    entries: list = field(default_factory=list)
    commit: int = 0


@dataclass
class AppendEntriesReply(Message):
    service = "config"
    term: int
    success: bool
    match: int


class ConfigServer:
    service = "config"

    def __init__(self, node: Node, masters, genesis: Callable[[], ClusterConfig], timing,
                 on_apply=None, on_role=None):
        self.node = node
        self.me = node.node_id
        self.masters = sorted(masters)
        self.peers = [m for m in self.masters if m != self.me]
        self.timing = timing
        self.config = genesis()
        self.on_apply = on_apply
        self.on_role = on_role
        self.term = 0
        self.voted_for: str | None = None
        self.log: list[ConfigEntry] = []
        d = node.durable
        raw = d.get("raft/state")
        if raw:
            st = json.loads(raw)
            self.term, self.voted_for = st["term"], st["voted_for"]
        data = d.get("raft/log")
        if data:
            self.log = decode_entries(data)
        self.commit = 0
        self.applied = 0
        self.role = FOLLOWER
        self.leader_id: str | None = None
        self.votes: set[str] = set()
        self.next: dict[str, int] = {}
        self.match: dict[str, int] = {}
        self.last_ack: dict[str, int] = {}
        self.leader_since = 0
        self._token = 0
        self._reset_election()

    # -- persistence -----------------------------------------------------------
    def _save_state(self) -> None:
        self.node.durable.put("raft/state", json.dumps({"term": self.term, "voted_for": self.voted_for}).encode())

    def _append_local(self, entries) -> None:
        for e in entries:
            self.log.append(e)
            self.node.durable.append("raft/log", encode_entry(e))

    def _truncate(self, length: int) -> None:
        del self.log[length:]
        self.node.durable.put("raft/log", b"".join(encode_entry(e) for e in self.log))

    @property
    def last_index(self) -> int:
        return len(self.log)

    @property
    def last_term(self) -> int:
        return self.log[-1].term if self.log else 0

    def _term_at(self, index: int) -> int:
        return self.log[index - 1].term if index > 0 else 0

    @property
    def majority(self) -> int:
        return len(self.masters) // 2 + 1

    @property
    def is_leader(self) -> bool:
        return self.role == LEADER

    # -- timers ------------------------------------------------------------------
    def _reset_election(self) -> None:
        self._token += 1
        tok = self._token
        t = self.timing
        delay = self.node.rng.randint(t.election_min, t.election_max)
        self.node.set_timer(delay, lambda: self._on_election_timeout(tok))

    def _on_election_timeout(self, tok: int) -> None:
        if tok != self._token:
            return
        if self.role == LEADER:
            self._reset_election()
            return
        self._start_election()

    def _start_election(self) -> None:
        self.term += 1
        self.voted_for = self.me
        self._save_state()
        self._set_role(CANDIDATE)
        self.leader_id = None
        self.votes = {self.me}
        self.node.trace("election", term=self.term)
        self._reset_election()
        if len(self.votes) >= self.majority:
            self._become_leader()
            return
        for p in self.peers:
            self.node.send(p, RequestVote(self.term, self.me, self.last_index, self.last_term))

    def _set_role(self, role: str) -> None:
        old = self.role
        self.role = role
        if old != role and self.on_role is not None:
            self.on_role(role)

    def _step_down(self, term: int) -> None:
        if term > self.term:
            self.term = term
            self.voted_for = None
            self._save_state()
        if self.role != FOLLOWER:
            if self.role == LEADER:
                self.node.trace("leader_stepdown", term=self.term)
            self._set_role(FOLLOWER)
        self.votes = set()

    def _become_leader(self) -> None:
        self._set_role(LEADER)
        self.leader_id = self.me
        self.leader_since = self.node.now
        self.next = {p: self.last_index + 1 for p in self.peers}
        self.match = {p: 0 for p in self.peers}
        self.last_ack = {}
        self.node.trace("leader_elected", cluster=self.config.cluster, term=self.term)
        self._append_local([ConfigEntry(self.last_index + 1, self.term, cmd_leader(self.me, self.term))])
        self._broadcast()
        self._advance_commit()
        self.node.set_timer(self.timing.heartbeat_interval, self._heartbeat(self.term))

    def _heartbeat(self, term: int):
        def beat():
            if self.role != LEADER or self.term != term:
                return
            if not self.has_quorum():
                self.node.trace("leader_stepdown", term=self.term, reason="no_quorum")
                self._set_role(FOLLOWER)
                self.leader_id = None
                self._reset_election()
                return
            self._broadcast()
            self.node.set_timer(self.timing.heartbeat_interval, beat)
        return beat

    def has_quorum(self) -> bool:
        if self.role != LEADER:
            return False
        window = self.timing.election_max
        now = self.node.now
        if now - self.leader_since <= window:
            return True
        recent = sum(1 for p in self.peers if now - self.last_ack.get(p, -10**9) <= window)
        return recent + 1 >= self.majority

    def _broadcast(self) -> None:
        for p in self.peers:
            self._send_append(p)

    def _send_append(self, peer: str) -> None:
        prev = self.next[peer] - 1
        entries = self.log[prev:prev + 64]
        self.node.send(peer, AppendEntries(self.term, self.me, prev, self._term_at(prev), entries, self.commit))

    # -- proposals ----------------------------------------------------------------
    def propose(self, cmd: Command) -> int | None:
        """Append a command; returns its epoch, or None when not an operational leader."""
        if self.role != LEADER or not self.has_quorum():
            return None
        entry = ConfigEntry(self.last_index + 1, self.term, cmd)
        self._append_local([entry])
        for p in self.peers:
            if self.next[p] == entry.epoch:
                self.node.send(p, AppendEntries(self.term, self.me, entry.epoch - 1,
                                                self._term_at(entry.epoch - 1), [entry], self.commit))
                self.next[p] = entry.epoch + 1
        self._advance_commit()
        return entry.epoch

    def _advance_commit(self) -> None:
        for n in range(self.last_index, self.commit, -1):
            if self.log[n - 1].term != self.term:
                break
            count = 1 + sum(1 for p in self.peers if self.match.get(p, 0) >= n)
            if count >= self.majority:
                self.commit = n
                self._apply_committed()
                break

    def _apply_committed(self) -> None:
        while self.applied < self.commit:
            entry = self.log[self.applied]
            rejected = self.config.apply(entry)
            self.applied += 1
            cmd = entry.command
            self.node.trace("config_apply", epoch=entry.epoch, term=entry.term, cmd=cmd.name, digest=cmd.digest(),
                            rejected=rejected is not None)
            if self.role == LEADER:
                self.node.trace("config_commit", cluster=self.config.cluster, epoch=entry.epoch,
                                term=entry.term, cmd=cmd.name, rejected=rejected is not None)
            if self.on_apply is not None:
                self.on_apply(entry, rejected)

    # -- message handling ---------------------------------------------------------------
    def handle(self, src: str, msg) -> None:
        if msg.term > self.term:
            self._step_down(msg.term)
            if not isinstance(msg, (RequestVote, AppendEntries)):
                return
        if isinstance(msg, RequestVote):
            self._on_vote_request(src, msg)
        elif isinstance(msg, VoteReply):
            self._on_vote_reply(src, msg)
        elif isinstance(msg, AppendEntries):
            self._on_append(src, msg)
        elif isinstance(msg, AppendEntriesReply):
            self._on_append_reply(src, msg)

    def _log_ok(self, msg: RequestVote) -> bool:
        return (msg.last_term, msg.last_index) >= (self.last_term, self.last_index)

    def _on_vote_request(self, src: str, msg: RequestVote) -> None:
        grant = False
        if msg.term == self.term and self._log_ok(msg):
            if self.voted_for in (None, msg.candidate):
                grant = True
            elif self.role == CANDIDATE and self.voted_for == self.me and msg.candidate < self.me:
                # same-term tie: the higher id withdraws
                self._set_role(FOLLOWER)
                self.votes = set()
                grant = True
        if grant:
            self.voted_for = msg.candidate
            self._save_state()
            self._reset_election()
        self.node.send(src, VoteReply(self.term, grant))

    def _on_vote_reply(self, src: str, msg: VoteReply) -> None:
        if self.role != CANDIDATE or msg.term != self.term or not msg.granted:
            return
        self.votes.add(src)
        if len(self.votes) >= self.majority:
            self._become_leader()

    def _on_append(self, src: str, msg: AppendEntries) -> None:
        if msg.term < self.term:
            self.node.send(src, AppendEntriesReply(self.term, False, 0))
            return
        if self.role != FOLLOWER:
            self._set_role(FOLLOWER)
            self.votes = set()
        self.leader_id = msg.leader
        self._reset_election()
        if msg.prev_index > self.last_index or self._term_at(msg.prev_index) != msg.prev_term:
            hint = min(self.last_index, msg.prev_index - 1)
            self.node.send(src, AppendEntriesReply(self.term, False, max(hint, 0)))
            return
        idx = msg.prev_index
        for i, e in enumerate(msg.entries):
            pos = idx + i + 1
            if pos <= self.last_index:
                if self.log[pos - 1].term == e.term:
                    continue
                if pos <= self.commit:
                    raise AssertionError(f"{self.me}: conflict at committed index {pos}")
                self._truncate(pos - 1)
            self._append_local(msg.entries[i:])
            break
        match = idx + len(msg.entries)
        if msg.commit > self.commit:
            self.commit = min(msg.commit, match)
            self._apply_committed()
        self.node.send(src, AppendEntriesReply(self.term, True, match))

    def _on_append_reply(self, src: str, msg: AppendEntriesReply) -> None:
        if self.role != LEADER or msg.term != self.term:
            return
        self.last_ack[src] = self.node.now
        if msg.success:
            if msg.match > self.match.get(src, 0):
                self.match[src] = msg.match
            self.next[src] = max(self.next[src], msg.match + 1)
            self._advance_commit()
            if self.next[src] <= self.last_index and self.next[src] == msg.match + 1:
                self._send_append(src)
        else:
            self.next[src] = max(1, msg.match + 1)
            self._send_append(src)
