"""Replica-set bookkeeping for one topic.

A ``TopicAssignment`` is the controller's view of a topic: who leads, who
holds a copy, and which copies are known to be in sync. The functions here
are pure; the cluster controller commits their results to the config
store and brokers act on whatever version they last received.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


class AssignmentError(ValueError):
    pass


def quorum(rf: int) -> int:
    return rf // 2 + 1


@dataclass(frozen=True)
class TopicAssignment:
    topic: str
    cluster: str
    rf: int
    replicas: tuple[str, ...]
    leader: str | None
    in_sync: tuple[str, ...]
    leader_epoch: int = 1
    version: int = 1
    reinstated: str | None = None

    def __post_init__(self):
        if self.leader is not None and self.leader not in self.replicas:
            raise AssignmentError(f"{self.topic}: leader {self.leader} not a replica")
        if not set(self.in_sync) <= set(self.replicas):
            raise AssignmentError(f"{self.topic}: in_sync not within replicas")
        if len(set(self.replicas)) != len(self.replicas):
            raise AssignmentError(f"{self.topic}: duplicate replicas")

    @property
    def followers(self) -> tuple[str, ...]:
        return tuple(n for n in self.replicas if n != self.leader)

    @property
    def quorum(self) -> int:
        return quorum(self.rf)

    def to_dict(self) -> dict:
        return {
            "topic": self.topic, "cluster": self.cluster, "rf": self.rf,
            "replicas": list(self.replicas), "leader": self.leader,
            "in_sync": list(self.in_sync), "leader_epoch": self.leader_epoch,
            "version": self.version, "reinstated": self.reinstated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TopicAssignment":
        return cls(d["topic"], d["cluster"], d["rf"], tuple(d["replicas"]), d["leader"],
                   tuple(d["in_sync"]), d["leader_epoch"], d["version"], d.get("reinstated"))


def create_assignment(topic: str, cluster: str, rf: int, placement) -> TopicAssignment:
    placement = tuple(placement)
    if rf < 1:
        raise AssignmentError("replication factor must be positive")
    if len(set(placement)) != len(placement):
        raise AssignmentError(f"{topic}: placement nodes must be distinct")
    if len(placement) != rf:
        raise AssignmentError(f"{topic}: placement has {len(placement)} nodes, rf={rf}")
    return TopicAssignment(topic, cluster, rf, placement, placement[0], placement)


def _bump(a: TopicAssignment, **changes) -> TopicAssignment:
    new_leader = changes.get("leader", a.leader)
    epoch = a.leader_epoch + 1 if new_leader != a.leader or changes.pop("new_epoch", False) else a.leader_epoch
    changes.pop("new_epoch", None)
    changes.setdefault("reinstated", None)
    return replace(a, version=a.version + 1, leader_epoch=epoch, **changes)


def _rank(pos) -> tuple[int, int]:
    if pos is None:
        return (-1, -1)
    if isinstance(pos, int):
        return (0, pos)
    return tuple(pos)


def choose_leader(candidates, positions: dict) -> str | None:
    """Most up-to-date log wins; ties go to the lowest node id.

    A position is either a bare log end or ``(last_epoch, log_end)``; the
    epoch of the last record is compared first, as in Raft's vote check.
    """
    best = None
    for n in sorted(candidates):
        if best is None or _rank(positions.get(n)) > _rank(positions.get(best)):
            best = n
    return best


def promote_leader(a: TopicAssignment, positions: dict, alive) -> TopicAssignment:
    """Pick a new leader among live in-sync replicas.

    With no live in-sync replica the topic becomes unavailable
    (``leader=None``) and keeps its in-sync set so a restarted member can be
    reinstated later.
    """
    alive = set(alive)
    cands = [n for n in a.in_sync if n in alive and n != a.leader]
    new = choose_leader(cands, positions)
    return _bump(a, leader=new, new_epoch=True)


def drop_replica(a: TopicAssignment, node: str, positions: dict, alive) -> TopicAssignment:
    """Remove a failed replica, promoting a new leader if it led.

    An in-sync member is only removed while another in-sync member is
    alive: otherwise it may hold the only copy of acknowledged records.
    """
    if node not in a.replicas:
        return a
    alive = set(alive) - {node}
    others_isr = [n for n in a.in_sync if n != node]
    if node in a.in_sync and not any(n in alive for n in others_isr):
        if a.leader == node:
            return _bump(a, leader=None)
        return a
    replicas = tuple(n for n in a.replicas if n != node)
    in_sync = tuple(others_isr)
    leader = a.leader
    if leader == node or leader is None:
        leader = choose_leader([n for n in in_sync if n in alive], positions)
        return _bump(a, replicas=replicas, in_sync=in_sync, leader=leader, new_epoch=True)
    return _bump(a, replicas=replicas, in_sync=in_sync)


def demote_in_sync(a: TopicAssignment, node: str, positions: dict, alive) -> TopicAssignment:
    """Turn an in-sync replica back into a catching-up follower."""
    if node not in a.in_sync:
        return a
    alive = set(alive) - {node}
    in_sync = tuple(n for n in a.in_sync if n != node)
    if a.leader == node:
        leader = choose_leader([n for n in in_sync if n in alive], positions)
        return _bump(a, in_sync=in_sync, leader=leader, new_epoch=True)
    return _bump(a, in_sync=in_sync)


def reinstate(a: TopicAssignment, node: str) -> TopicAssignment:
    """Accept a restarted replica's durable log as the source of truth."""
    if node not in a.in_sync:
        raise AssignmentError(f"{a.topic}: {node} is not in sync")
    return _bump(a, leader=node, new_epoch=True, reinstated=node)


def recover_replica(a: TopicAssignment, node: str, positions: dict, serving, waiting) -> TopicAssignment | None:
    """Next assignment for a restarted replica, or None to wait.

    ``serving`` are live nodes whose replicas work normally, ``waiting`` the
    restarted ones still recovering. A member outside the in-sync set simply
    starts over. An in-sync member steps down to catch-up while another
    in-sync copy serves. With none serving, the topic waits for every in-sync
    member to come back and reinstates the most up-to-date one, because a
    member that crashed unnoticed may lack acknowledged records.
    """
    if node not in a.replicas or node not in a.in_sync:
        return refresh(a)
    if a.leader == node and a.reinstated == node:
        return None
    serving = set(serving)
    present = serving | set(waiting)
    if a.reinstated is not None and a.reinstated == a.leader and a.leader in present:
        serving.add(a.leader)
    if any(m in serving for m in a.in_sync if m != node):
        return demote_in_sync(a, node, positions, serving)
    if not all(m in present for m in a.in_sync):
        return None
    if choose_leader(a.in_sync, positions) != node:
        return None
    return reinstate(a, node)


def add_replica(a: TopicAssignment, node: str) -> TopicAssignment:
    """Re-replication: ``node`` joins as a follower that must catch up."""
    if node in a.replicas:
        raise AssignmentError(f"{a.topic}: {node} already holds a replica")
    return _bump(a, replicas=a.replicas + (node,))


def mark_in_sync(a: TopicAssignment, node: str) -> TopicAssignment:
    if node not in a.replicas:
        raise AssignmentError(f"{a.topic}: {node} is not a replica")
    if node in a.in_sync:
        return a
    return _bump(a, in_sync=a.in_sync + (node,))


def refresh(a: TopicAssignment) -> TopicAssignment:
    """Same content, new version: makes a restarted follower restart catch-up."""
    return _bump(a)


@dataclass(frozen=True)
class Directory:
    """Static address book: which cluster owns a topic, which nodes a cluster has."""

    topic_cluster: dict
    cluster_nodes: dict

    def nodes_for(self, topic: str) -> list[str]:
        return list(self.cluster_nodes.get(self.topic_cluster.get(topic), ()))
