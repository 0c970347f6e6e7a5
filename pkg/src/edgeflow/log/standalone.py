"""A self-contained log cluster with an omniscient controller.

Handy for exercising the replication protocol without the management
layer: topic assignments are pushed straight to brokers and leader
promotion reads log ends directly from the replicas.
"""

from __future__ import annotations

from ..sim import EDGE, Simulation, SimulationError
from .assign import (Directory, TopicAssignment, add_replica, create_assignment, drop_replica,
                     mark_in_sync, promote_leader, recover_replica)
from .broker import AssignTopic, Broker
from .client import LogClient
from .codec import Record


class TopicError(ValueError):
    pass


class LogCluster:
    def __init__(self, brokers=("B-1", "B-2", "B-3"), seed: int = 0, client: str = "C-1",
                 cluster: str = EDGE, timeout: int = 250):
        self.sim = Simulation(seed)
        self.cluster = cluster
        self.broker_ids = tuple(brokers)
        self.assignments: dict[str, TopicAssignment] = {}
        self.directory = Directory({}, {cluster: list(self.broker_ids)})
        self.timeout = timeout
        for b in self.broker_ids:
            self.sim.add_node(b, cluster, "worker", boot=self._boot)
        self.client_id = client
        self.sim.add_node(client, cluster, "worker", boot=self._boot_client)
        for n in self.sim.nodes.values():
            n.boot()

    def _boot(self, node) -> None:
        node.services["broker"] = Broker(node)
        for a in self.assignments.values():
            if node.node_id in a.replicas and not node.restarted:
                node.services["broker"].apply_assignment(a)

    def _boot_client(self, node) -> None:
        node.services["client"] = LogClient(node, self.directory, self.timeout)

    @property
    def now(self) -> int:
        return self.sim.now

    def broker(self, node_id: str) -> Broker:
        n = self.sim.node(node_id)
        if not n.up:
            raise SimulationError(f"{node_id} is down")
        return n.services["broker"]

    def alive(self) -> set[str]:
        return {b for b in self.broker_ids if self.sim.nodes[b].up}

    def waiting(self, topic: str) -> set[str]:
        """Live brokers whose replica of ``topic`` is still recovering."""
        return {b for b in self.alive()
                if getattr(self.broker(b).replicas.get(topic), "role", None) == "recovering"}

    def serving(self, topic: str) -> set[str]:
        return self.alive() - self.waiting(topic)

    def positions(self, topic: str) -> dict[str, tuple[int, int]]:
        pos = {}
        for b in sorted(self.alive()):
            r = self.broker(b).replicas.get(topic)
            if r is not None:
                pos[b] = r.position
        return pos

    # -- topic admin ---------------------------------------------------------
    def create_topic(self, topic: str, rf: int, placement) -> TopicAssignment:
        if topic in self.assignments:
            raise TopicError(f"duplicate topic {topic}")
        placement = tuple(placement)
        for n in placement:
            if n not in self.broker_ids or not self.sim.nodes[n].up:
                raise TopicError(f"{n} is not a live broker")
        try:
            a = create_assignment(topic, self.cluster, rf, placement)
        except ValueError as exc:
            raise TopicError(str(exc)) from None
        self.assignments[topic] = a
        self.directory.topic_cluster[topic] = self.cluster
        for n in placement:
            self.broker(n).create_replica(a)
        self.sim.emit("topic_def", topic=topic, rf=rf, replicas=list(placement))
        return a

    def _publish(self, a: TopicAssignment) -> None:
        self.assignments[a.topic] = a
        for b in self.broker_ids:
            if self.sim.nodes[b].up:
                self.sim.schedule(self.sim.now, b, AssignTopic(a))
        c = self.sim.nodes[self.client_id]
        if c.up:
            c.services["client"].learn([a])
        self.sim.run_until(self.sim.now + 1)

    def promote_leader(self, topic: str) -> str | None:
        a = self.assignments[topic]
        serving = self.serving(topic)
        if a.leader is not None and a.leader in serving:
            raise TopicError(f"{topic}: leader {a.leader} is still alive")
        if a.leader is not None and a.leader not in self.alive():
            new = drop_replica(a, a.leader, self.positions(topic), serving)
        else:
            new = promote_leader(a, self.positions(topic), serving)
        if new is not a:
            self._publish(new)
        return new.leader

    def drop_failed(self, node: str) -> None:
        for topic in sorted(self.assignments):
            a = self.assignments[topic]
            new = drop_replica(a, node, self.positions(topic), self.serving(topic))
            if new is not a:
                self._publish(new)

    def re_replicate(self, topic: str, node: str) -> TopicAssignment:
        a = self.assignments[topic]
        if node not in self.alive():
            raise TopicError(f"{node} is not alive")
        try:
            new = add_replica(a, node)
        except ValueError as exc:
            raise TopicError(str(exc)) from None
        self._publish(new)
        return new

    def mark_caught_up(self, topic: str) -> bool:
        """Promote caught-up followers into the in-sync set; True if any joined."""
        a = self.assignments[topic]
        if a.leader is None or a.leader not in self.alive():
            return False
        r = self.broker(a.leader).replicas[topic]
        joined = False
        for f in sorted(r.caught_up):
            if f not in a.in_sync:
                a = mark_in_sync(a, f)
                joined = True
        if joined:
            self._publish(a)
        return joined

    def recover(self, node: str) -> bool:
        """Try to bring a restarted broker's replicas out of the recovering state.

        Returns True if any assignment changed. A replica may have to wait
        for other in-sync members to restart first.
        """
        changed = False
        for topic in sorted(self.assignments):
            r = self.broker(node).replicas.get(topic)
            if r is None or r.role != "recovering":
                continue
            a = self.assignments[topic]
            new = recover_replica(a, node, self.positions(topic), self.serving(topic), self.waiting(topic))
            if new is not None:
                self._publish(new)
                changed = True
        return changed

    def recover_all(self) -> None:
        """Repeat recovery on every live broker until nothing changes."""
        while any([self.recover(b) for b in sorted(self.alive())]):
            pass

    # -- faults ----------------------------------------------------------------
    def crash(self, node: str) -> None:
        self.sim.crash_node(node)

    def restart(self, node: str) -> None:
        self.sim.restart_node(node)
        c = self.sim.nodes[self.client_id]
        if c.up:
            c.services["client"].learn(self.assignments.values())

    def run_for(self, ms: int) -> None:
        self.sim.run_until(self.sim.now + ms)

    # -- synchronous client calls ---------------------------------------------------
    def _call(self, make_gen, limit: int | None = None):
        node = self.sim.nodes[self.client_id]
        client = node.services["client"]
        task = node.spawn(make_gen(client), "client-op")
        deadline = self.sim.now + (limit or 4 * self.timeout * (len(self.broker_ids) + 2))
        while task.alive and self.sim.now < deadline:
            self.sim.run_until(self.sim.now + 1)
        if task.alive:
            task.cancel()
            return None
        return task.result

    def append(self, topic: str, records, limit: int | None = None):
        """Append one record or a list; returns (first, last) offsets or None if unacked."""
        if isinstance(records, Record):
            records = [records]
        reply = self._call(lambda c: c.append(topic, records), limit)
        if reply is None or not reply.ok:
            return None
        return reply.first, reply.last

    def fetch(self, topic: str, offset: int, max_records: int = 100, via: str | None = None):
        if via is not None:
            return self.broker(via).read(topic, offset, max_records)
        reply = self._call(lambda c: c.fetch(topic, offset, max_records))
        return None if reply is None or not reply.ok else reply.records

    def commit_offset(self, group: str, topic: str, offset: int, dedup=None):
        reply = self._call(lambda c: c.commit_offset(group, topic, offset, dedup))
        if reply is None:
            return None
        if not reply.ok:
            raise TopicError(f"commit rejected: {reply.error}")
        return reply.offset

    def fetch_committed(self, group: str, topic: str) -> int | None:
        reply = self._call(lambda c: c.fetch_committed(group, topic))
        if reply is None or not reply.ok:
            return None
        return 0 if reply.offset is None else reply.offset
