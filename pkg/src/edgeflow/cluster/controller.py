"""Cluster controller: runs on every master, acts only while leading.

Reconciliation is level triggered. After every committed command and on
every heartbeat tick the leader diffs the committed config against what
it observes (heartbeat ages, broker reports) and proposes at most one
corrective command at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..log.assign import (TopicAssignment, add_replica, choose_leader, drop_replica, mark_in_sync,
                          promote_leader, recover_replica)
from ..pipeline.spec import ANY, StageSpec
from ..sim import Message, Node
from .config import (CMD_BATCH, CMD_NODE_STATUS, CMD_PLACE, CMD_TOPIC, FAILED, MASTER, SUSPECTED, UP,
                     ClusterConfig, Command, ConfigEntry, cmd_node_status, cmd_place, cmd_topic)
from .raft import LEADER, ConfigServer


@dataclass
class Heartbeat(Message):
    service = "controller"
    node: str
    incarnation: int
    known_epoch: int
    report: dict


@dataclass
class MetadataUpdate(Message):
    service = "agent"
    cluster: str
    epoch: int
    config: ClusterConfig


@dataclass
class AdminCommand(Message):
    service = "controller"
    command: Command
    label: str = "admin"


# -- placement policies ----------------------------------------------------------

def eligible_nodes(spec: StageSpec, config: ClusterConfig) -> list[str]:
    nodes = [n for n in config.up_nodes()
             if spec.affinity == ANY or config.members[n].cluster == spec.affinity]
    workers = [n for n in nodes if config.members[n].role != MASTER]
    return workers or nodes


def schedule_stage(spec: StageSpec, config: ClusterConfig) -> str | None:
    """Least-loaded eligible node, lowest id on ties; workers before masters."""
    best = None
    best_load = None
    for n in eligible_nodes(spec, config):
        load = sum(1 for s, p in config.placements.items() if p == n and s != spec.stage_id)
        if best is None or load < best_load:
            best, best_load = n, load
    return best


def pick_replica_node(a: TopicAssignment, config: ClusterConfig) -> str | None:
    """Node for a new copy of ``a``: fewest hosted replicas, lowest id on ties."""
    best = None
    best_load = None
    for n in config.up_nodes():
        if n in a.replicas or config.members[n].cluster != a.cluster:
            continue
        load = config.replica_count(n)
        if best is None or load < best_load:
            best, best_load = n, load
    return best


def reschedule_on_failure(failed: str, config: ClusterConfig) -> list[Command]:
    """Placement commands for every stage hosted on ``failed``."""
    cmds = []
    view = config.copy()
    for sid in sorted(view.placements):
        if view.placements[sid] == failed:
            target = schedule_stage(view.stages[sid], view)
            view.placements[sid] = target
            cmds.append(cmd_place(sid, target))
    return cmds


class Controller:
    service = "controller"

    def __init__(self, node: Node, raft: ConfigServer, timing, re_replication: bool = True):
        self.node = node
        self.raft = raft
        self.timing = timing
        self.re_replication = re_replication
        self.last_seen: dict[str, int] = {}
        self.heard: set[str] = set()
        self.reports: dict[str, tuple[int, dict]] = {}
        self.recovery_acted: dict[tuple[str, str], int] = {}
        self.short_warned: set = set()
        self.inflight: int | None = None
        self.admin_queue: list[AdminCommand] = []
        raft.on_apply = self.on_apply
        raft.on_role = self.on_role
        node.set_timer(timing.heartbeat_interval, self._tick)

    @property
    def config(self) -> ClusterConfig:
        return self.raft.config

    @property
    def ready(self) -> bool:
        return self.raft.role == LEADER and self.config.term == self.raft.term and self.config.leader == self.node.node_id

    # -- raft callbacks --------------------------------------------------------------
    def on_role(self, role: str) -> None:
        self.inflight = None
        if role == LEADER:
            # followers track heartbeats too, so a new leader starts from
            # real silence ages; nodes never heard from get a fresh grace period
            now = self.node.now
            for n in self.config.members:
                self.last_seen.setdefault(n, now)
            self.recovery_acted = {}
            self.short_warned = set()

    def on_apply(self, entry: ConfigEntry, rejected: str | None = None) -> None:
        if self.raft.role != LEADER:
            return
        if rejected is None:
            self._trace_commit(entry.command, entry.epoch)
        if entry.epoch == self.inflight:
            self.inflight = None
        self._push_metadata()
        self.reconcile()

    def _trace_commit(self, cmd: Command, epoch: int) -> None:
        p = cmd.payload
        if cmd.kind == CMD_NODE_STATUS:
            self.node.trace("node_status", target=p["node"], status=p["status"], epoch=epoch)
        elif cmd.kind == CMD_PLACE:
            self.node.trace("placement", stage=p["stage"], target=p["node"] or "pending", epoch=epoch)
        elif cmd.kind == CMD_TOPIC:
            self.node.trace("topic_update", topic=p["topic"], leader=p["leader"] or "none",
                            replicas=p["replicas"], in_sync=p["in_sync"], version=p["version"], epoch=epoch)
        elif cmd.kind == CMD_BATCH:
            for kind, payload in p["cmds"]:
                self._trace_commit(Command(kind, payload), epoch)

    def _push_metadata(self) -> None:
        cfg = self.config.copy()
        for n in sorted(cfg.members):
            if cfg.members[n].status != FAILED:
                self.node.send(n, MetadataUpdate(cfg.cluster, cfg.epoch, cfg))

    # -- messages --------------------------------------------------------------------
    def handle(self, src: str, msg) -> None:
        if isinstance(msg, Heartbeat):
            self.last_seen[msg.node] = self.node.now
            self.heard.add(msg.node)
            self.reports[msg.node] = (self.node.now, msg.report)
            if self.raft.role == LEADER and msg.known_epoch < self.config.epoch:
                self.node.send(msg.node, MetadataUpdate(self.config.cluster, self.config.epoch, self.config.copy()))
        elif isinstance(msg, AdminCommand):
            if not self.ready:
                self.node.trace("admin_rejected", label=msg.label, reason="not_leader")
                return
            self.admin_queue.append(msg)
            self.reconcile()

    def _tick(self) -> None:
        self.reconcile()
        self.node.set_timer(self.timing.heartbeat_interval, self._tick)

    # -- reconciliation ----------------------------------------------------------------
    def reconcile(self) -> None:
        if not self.ready or self.inflight is not None:
            return
        label = None
        if self.admin_queue:
            adm = self.admin_queue.pop(0)
            cmd, label = adm.command, adm.label
        else:
            cmd = self.next_command()
        if cmd is None:
            return
        epoch = self.raft.propose(cmd)
        if epoch is None:
            if label is not None:
                self.node.trace("admin_rejected", label=label, reason="no_quorum")
            return
        if label is not None:
            self.node.trace("admin_proposed", label=label, epoch=epoch)
        self.inflight = epoch

    def _positions(self, topic: str) -> dict[str, tuple[int, int]]:
        return {n: tuple(rep["log_pos"][topic]) for n, (_, rep) in self.reports.items()
                if topic in rep.get("log_pos", {})}

    def _waiting(self, topic: str, alive: set[str]) -> set[str]:
        """Live nodes whose last report says their replica is recovering."""
        return {n for n, (_, rep) in self.reports.items()
                if n in alive and topic in rep.get("recovering", ())}

    def _alive(self) -> set[str]:
        return set(self.config.up_nodes())

    def next_command(self) -> Command | None:
        cfg = self.config
        now = self.node.now
        t = self.timing
        # 1. membership from heartbeat evidence
        for n in sorted(cfg.members):
            st = cfg.members[n].status
            age = now - self.last_seen.get(n, now)
            if st == UP and age > t.suspect_timeout:
                return cmd_node_status(n, SUSPECTED)
            if st == SUSPECTED and age > t.fail_timeout:
                return cmd_node_status(n, FAILED)
            if st == SUSPECTED and n in self.heard and age <= t.suspect_timeout:
                return cmd_node_status(n, UP)
            if st == FAILED and n in self.heard and age <= t.suspect_timeout:
                return cmd_node_status(n, UP)
        alive = self._alive()
        # 2. data replicas
        for topic in sorted(cfg.topics):
            a = cfg.topics[topic]
            new = self._fix_topic(a, alive)
            if new is not None and new != a:
                return cmd_topic(new)
        # 3. stages
        for sid in sorted(cfg.stages):
            placed = cfg.placements.get(sid)
            if placed is not None and cfg.status(placed) in (UP, SUSPECTED):
                continue
            target = schedule_stage(cfg.stages[sid], cfg)
            if target != placed:
                return cmd_place(sid, target)
        return None

    def _fix_topic(self, a: TopicAssignment, alive: set[str]) -> TopicAssignment | None:
        cfg = self.config
        pos = self._positions(a.topic)
        waiting = self._waiting(a.topic, alive)
        serving = alive - waiting
        for n in a.replicas:
            if cfg.status(n) == FAILED:
                new = drop_replica(a, n, pos, serving)
                if new is not a:
                    return new
        for n in sorted(waiting & set(a.replicas)):
            at = self.reports[n][0]
            if at <= self.recovery_acted.get((n, a.topic), -1):
                continue
            new = recover_replica(a, n, pos, serving, waiting)
            if new is not None:
                self.recovery_acted[(n, a.topic)] = self.node.now
                return new
        if a.leader is None:
            if choose_leader([n for n in a.in_sync if n in serving], pos) is not None:
                return promote_leader(a, pos, serving)
            return None
        rep = self.reports.get(a.leader)
        if rep is not None:
            epoch, nodes = rep[1].get("caught_up", {}).get(a.topic, (None, []))
            if epoch == a.leader_epoch:
                for n in nodes:
                    if n in a.replicas and n not in a.in_sync and n in alive:
                        return mark_in_sync(a, n)
        if self.re_replication and len(a.replicas) < a.rf:
            target = pick_replica_node(a, cfg)
            if target is not None:
                return add_replica(a, target)
            key = (a.topic, len(a.replicas))
            if key not in self.short_warned:
                self.short_warned.add(key)
                self.node.trace("replica_shortfall", topic=a.topic, replicas=len(a.replicas), rf=a.rf)
        return None
