"""Client side of the log: leader discovery with redirects and rotation.

Every operation is a generator meant to run inside a node task::

    reply = yield from client.append("ET-1", records, stage="PC-1")

One call makes a bounded number of attempts and returns ``None`` when it
gives up; callers decide whether to retry.
"""

from __future__ import annotations

from ..sim import Call, Node
from .assign import Directory, TopicAssignment
from .broker import Append, CommitOffset, Fetch, FetchCommitted


class LogClient:
    def __init__(self, node: Node, directory: Directory, timeout: int = 250):
        self.node = node
        self.directory = directory
        self.timeout = timeout
        self.leaders: dict[str, str] = {}
        self._rotation: dict[str, int] = {}

    def learn(self, assignments) -> None:
        for a in assignments:
            if isinstance(a, TopicAssignment) and a.leader is not None:
                self.leaders[a.topic] = a.leader

    def _next_candidate(self, topic: str) -> str | None:
        nodes = self.directory.nodes_for(topic)
        if not nodes:
            return None
        i = self._rotation.get(topic, 0)
        self._rotation[topic] = i + 1
        return nodes[i % len(nodes)]

    def _request(self, topic: str, make):
        nodes = self.directory.nodes_for(topic)
        attempts = len(nodes) + 2
        target = self.leaders.get(topic)
        for _ in range(attempts):
            if target is None:
                target = self._next_candidate(topic)
                if target is None:
                    return None
            reply = yield Call(target, make(), self.timeout)
            if reply is None:
                self.leaders.pop(topic, None)
                target = None
                continue
            if reply.ok or reply.error != "not_leader":
                self.leaders[topic] = target
                return reply
            hint = reply.leader
            self.leaders.pop(topic, None)
            target = hint if hint and hint != target else None
        return None

    def append(self, topic: str, records, stage: str | None = None):
        recs = list(records)
        return (yield from self._request(topic, lambda: Append(topic, recs, stage)))

    def fetch(self, topic: str, offset: int, max_records: int):
        return (yield from self._request(topic, lambda: Fetch(topic, offset, max_records)))

    def commit_offset(self, group: str, topic: str, offset: int, dedup: dict | None = None):
        return (yield from self._request(topic, lambda: CommitOffset(group, topic, offset, dedup)))

    def fetch_committed(self, group: str, topic: str):
        return (yield from self._request(topic, lambda: FetchCommitted(group, topic)))
