"""Builds a simulated deployment from a scenario and drives it."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

from ..cluster.agent import Generate, NodeAgent
from ..cluster.config import MASTER, ClusterConfig, NodeDescriptor, cmd_batch, cmd_place, cmd_stage, cmd_stage_remove
from ..cluster.controller import AdminCommand, Controller
from ..cluster.raft import ConfigServer
from ..cluster.timing import Timing
from ..log.assign import Directory, create_assignment
from ..log.broker import Broker
from ..log.client import LogClient
from ..pipeline.runtime import sink_key
from ..pipeline.spec import owner_cluster
from ..sim import CLUSTERS, KERNEL, WAN, Simulation, lan_of
from .format import Scenario, apply_move

NORMAL = "normal"
NO_QUORUM = "degraded_no_quorum"
WAN_DOWN = "degraded_wan_down"


class World:
    def __init__(self, scenario: Scenario, seed: int | None = None, timing: Timing | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.timing = timing or Timing()
        self.sim = Simulation(self.seed, scenario.latency)
        tc = scenario.topic_cluster
        self.topic_cluster = tc
        self.directory = Directory(dict(tc), {c: scenario.cluster_nodes(c) for c in CLUSTERS})
        self.pipeline = {s.stage_id: s for s in scenario.pipeline}
        self.genesis_topics = {
            t.topic: create_assignment(t.topic, t.cluster, t.rf, scenario.placement(t)) for t in scenario.topics
        }
        for n in scenario.nodes:
            self.sim.add_node(n.node_id, n.cluster, n.role, boot=self._boot)
        self._booted = False

    # -- genesis -----------------------------------------------------------------
    def genesis(self, cluster: str) -> ClusterConfig:
        sc = self.scenario
        members = [NodeDescriptor(n.node_id, n.cluster, n.role) for n in sc.nodes if n.cluster == cluster]
        topics = [a for a in self.genesis_topics.values() if a.cluster == cluster]
        stages = [s for s in sc.pipeline if owner_cluster(s, self.topic_cluster) == cluster]
        return ClusterConfig(cluster, members, topics, stages)

    def _boot(self, node) -> None:
        sc = self.scenario
        t = self.timing
        broker = Broker(node)
        node.services["broker"] = broker
        if not node.restarted:
            for a in self.genesis_topics.values():
                if node.node_id in a.replicas:
                    broker.create_replica(a)
        masters = sc.masters(node.cluster)
        if node.role == MASTER:
            cluster = node.cluster
            raft = ConfigServer(node, masters, lambda: self.genesis(cluster), t)
            node.services["config"] = raft
            node.services["controller"] = Controller(node, raft, t, sc.re_replication)
        client = LogClient(node, self.directory, t.request_timeout)
        node.services["client"] = client
        node.services["agent"] = NodeAgent(node, masters, client, t, self.seed, sc.batch)

    def _setup_events(self) -> None:
        sc = self.scenario
        self.sim.emit("run_def", KERNEL, scenario=sc.name, seed=self.seed, run_until=sc.run_until)
        for n in sc.nodes:
            self.sim.emit("node_def", KERNEL, id=n.node_id, cluster=n.cluster, role=n.role)
        for t in sc.topics:
            a = self.genesis_topics[t.topic]
            self.sim.emit("topic_def", KERNEL, topic=t.topic, cluster=t.cluster, rf=t.rf, replicas=list(a.replicas))
        for s in sc.pipeline:
            self.sim.emit("stage_def", KERNEL, stage=s.stage_id, kind=s.kind, input=s.input or "none",
                          output=s.output or "none", affinity=s.affinity, transform=s.transform)

    def boot(self) -> None:
        if self._booted:
            return
        self._booted = True
        self._setup_events()
        for n in self.scenario.nodes:
            self.sim.nodes[n.node_id].boot()
        sim = self.sim
        for e in self.scenario.faults:
            sim.call_at(e.time, lambda e=e: self._fault(e))
        for w in self.scenario.workload:
            sim.call_at(w.time, lambda w=w: self._generate(w.stage, w.count))
        by_time = defaultdict(list)
        for m in self.scenario.moves:
            by_time[m.time].append(m)
        for t in sorted(by_time):
            sim.call_at(t, lambda ms=by_time[t]: self._move(ms))

    # -- harness actions -------------------------------------------------------------
    def _fault(self, e) -> None:
        sim = self.sim
        if e.kind == "crash":
            sim.crash_node(e.target)
        elif e.kind == "restart":
            sim.restart_node(e.target)
        elif e.kind == "partition":
            sim.set_partition(e.target, True)
        else:
            sim.set_partition(e.target, False)
        for c in self.clusters:
            sim.emit("degraded_status", KERNEL, cluster=c, status=self.degraded_mode_status(c))

    @property
    def clusters(self) -> list[str]:
        return [c for c in CLUSTERS if self.scenario.cluster_nodes(c)]

    def current_config(self, cluster: str) -> ClusterConfig | None:
        """Freshest committed config held by a live master of ``cluster``."""
        best = None
        for m in self.scenario.masters(cluster):
            node = self.sim.nodes[m]
            if not node.up:
                continue
            cfg = node.services["config"].config
            if best is None or cfg.epoch > best.epoch:
                best = cfg
        return best

    def _generate(self, stage: str, count: int) -> None:
        cluster = owner_cluster(self.pipeline[stage], self.topic_cluster)
        cfg = self.current_config(cluster)
        host = cfg.placements.get(stage) if cfg is not None else None
        if host is None or not self.sim.nodes[host].up:
            self.sim.emit("workload_drop", KERNEL, stage=stage, count=count, host=host or "none")
            return
        self.sim.schedule(self.sim.now, host, Generate(stage, count))

    def move_stage(self, stage: str, **changes) -> None:
        from .format import MoveItem
        self._move([MoveItem(self.sim.now, stage, tuple((k, str(v)) for k, v in changes.items()))])

    def _move(self, moves) -> None:
        tc = self.topic_cluster
        per_cluster = defaultdict(list)
        for m in moves:
            old = self.pipeline[m.stage]
            new = apply_move(old, dict(m.changes), tc)
            self.pipeline[m.stage] = new
            src, dst = owner_cluster(old, tc), owner_cluster(new, tc)
            if src != dst:
                per_cluster[src].append(cmd_stage_remove(m.stage))
            per_cluster[dst] += [cmd_stage(new), cmd_place(m.stage, None)]
            self.sim.emit("move", KERNEL, stage=m.stage, kind=new.kind, generation=new.generation,
                          input=new.input or "none", output=new.output or "none", affinity=new.affinity)
        label = f"move@{self.sim.now}"
        for cluster in sorted(per_cluster):
            cmd = cmd_batch(per_cluster[cluster])
            for mnode in self.scenario.masters(cluster):
                if self.sim.nodes[mnode].up:
                    self.sim.schedule(self.sim.now, mnode, AdminCommand(cmd, label))

    # -- observation -------------------------------------------------------------------
    def degraded_mode_status(self, cluster: str) -> list[str]:
        sim = self.sim
        masters = self.scenario.masters(cluster)
        up = [m for m in masters if sim.nodes[m].up]
        states = []
        lan_cut = sim.links[lan_of(cluster)].partitioned
        if len(up) < len(masters) // 2 + 1 or (lan_cut and len(masters) > 1):
            states.append(NO_QUORUM)
        if sim.links[WAN].partitioned:
            states.append(WAN_DOWN)
        return states or [NORMAL]

    def run(self, until: int | None = None):
        self.boot()
        return self.sim.run_until(self.scenario.run_until if until is None else until)

    @property
    def trace(self):
        return self.sim.trace

    def dumps(self) -> dict[str, bytes]:
        """File name to content for every topic replica and sink on every node."""
        out = {}
        for nid in sorted(self.sim.nodes):
            d = self.sim.nodes[nid].durable
            for key in d.keys("log/"):
                out[f"topic__{key[4:]}__{nid}.log"] = d.get(key)
            for key in d.keys("sink/"):
                out[f"sink__{key[5:]}__{nid}.log"] = d.get(key)
        status = "".join(f"node={nid} status={self.sim.nodes[nid].status}\n" for nid in sorted(self.sim.nodes))
        out["nodes.txt"] = status.encode()
        return out

    def write_dumps(self, directory) -> None:
        path = Path(directory)
        path.mkdir(parents=True, exist_ok=True)
        for name, data in self.dumps().items():
            (path / name).write_bytes(data)


def sink_files(world: World) -> dict[tuple[str, str], bytes]:
    out = {}
    for nid, node in world.sim.nodes.items():
        for key in node.durable.keys("sink/"):
            out[(key[5:], nid)] = node.durable.get(key)
    return out


__all__ = ["World", "NORMAL", "NO_QUORUM", "WAN_DOWN", "sink_key", "sink_files"]
