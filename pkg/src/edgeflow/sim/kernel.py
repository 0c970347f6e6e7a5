"""Deterministic discrete-event kernel.

Virtual time is an integer number of milliseconds. Every event carries a
global insertion sequence number, so events at equal time run in the order
they were scheduled. Nodes live in one of two clusters (``edge`` or
``cloud``); traffic inside a cluster uses that cluster's LAN, anything
crossing between clusters uses the WAN.

Components running on a node are plain objects registered in
``Node.services``; they react to messages and timers. Longer interactions
are written as generator tasks that ``yield Sleep(...)`` or
``yield Call(...)`` and get resumed by the kernel.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, ClassVar, Generator

from .trace import KERNEL, TraceEvent, make_event

EDGE = "edge"
CLOUD = "cloud"
CLUSTERS = (EDGE, CLOUD)

EDGE_LAN = "edge_lan"
CLOUD_LAN = "cloud_lan"
WAN = "wan"
DOMAINS = (EDGE_LAN, CLOUD_LAN, WAN)

DEFAULT_LATENCY = {EDGE_LAN: 1, CLOUD_LAN: 1, WAN: 50}

UP = "up"
CRASHED = "crashed"


class SimulationError(RuntimeError):
    """Harness bug or violated internal invariant. Never swallowed."""


@dataclass
class Message:
    service: ClassVar[str] = ""


@dataclass
class Sleep:
    ms: int


@dataclass
class Call:
    dst: str
    msg: Any
    timeout: int


@dataclass
class Link:
    domain: str
    latency: int
    partitioned: bool = False


def lan_of(cluster: str) -> str:
    return EDGE_LAN if cluster == EDGE else CLOUD_LAN


class DurableStore:
    """Key to bytes map that survives crashes."""

    def __init__(self):
        self._data: dict[str, bytearray] = {}

    def get(self, key: str) -> bytes | None:
        v = self._data.get(key)
        return None if v is None else bytes(v)

    def put(self, key: str, value: bytes) -> None:
        self._data[key] = bytearray(value)

    def append(self, key: str, value: bytes) -> None:
        self._data.setdefault(key, bytearray()).extend(value)

    def truncate(self, key: str, size: int) -> None:
        if key in self._data:
            del self._data[key][size:]

    def delete(self, key: str) -> None:
        self._data.pop(key, None)

    def size(self, key: str) -> int:
        return len(self._data.get(key, b""))

    def keys(self, prefix: str = "") -> list[str]:
        return sorted(k for k in self._data if k.startswith(prefix))

    def snapshot(self) -> dict[str, bytes]:
        return {k: bytes(v) for k, v in self._data.items()}


class Task:
    """A generator running on one node; dies with the node."""

    def __init__(self, node: "Node", gen: Generator, name: str):
        self.node = node
        self.gen = gen
        self.name = name
        self.alive = True
        self.result = None

    def cancel(self) -> None:
        self.alive = False
        waiting = self.node._waiting
        for req in [r for r, t in waiting.items() if t is self]:
            del waiting[req]

    def _step(self, value=None) -> None:
        if not self.alive or self.node.status != UP:
            return
        try:
            op = self.gen.send(value)
        except StopIteration as stop:
            self.alive = False
            self.result = stop.value
            return
        node = self.node
        if isinstance(op, Sleep):
            node.set_timer(op.ms, self._step)
        elif isinstance(op, Call):
            req = node._next_req()
            op.msg.req = req
            node._waiting[req] = self
            node.send(op.dst, op.msg)
            node.set_timer(op.timeout, lambda: self._expire(req))
        else:
            raise SimulationError(f"task {self.name} yielded {op!r}")

    def _expire(self, req) -> None:
        if self.node._waiting.get(req) is self:
            del self.node._waiting[req]
            self._step(None)


class Node:
    """A simulated machine: durable disk plus volatile services."""

    def __init__(self, sim: "Simulation", node_id: str, cluster: str, role: str,
                 boot: Callable[["Node"], None] | None):
        if cluster not in CLUSTERS:
            raise SimulationError(f"unknown cluster {cluster!r}")
        self.sim = sim
        self.node_id = node_id
        self.cluster = cluster
        self.role = role
        self.status = UP
        self.incarnation = 0
        self.durable = DurableStore()
        self.rng = sim.rng_for(node_id)
        self._boot = boot
        self.services: dict[str, Any] = {}
        self._waiting: dict[Any, Task] = {}
        self._req = itertools.count()

    @property
    def up(self) -> bool:
        return self.status == UP

    @property
    def now(self) -> int:
        return self.sim.now

    @property
    def restarted(self) -> bool:
        return self.incarnation > 0

    def boot(self) -> None:
        if self._boot is not None:
            self._boot(self)

    def _next_req(self):
        return (self.node_id, self.incarnation, next(self._req))

    def _wipe(self) -> None:
        self.services = {}
        self._waiting = {}
        self._req = itertools.count()

    def send(self, dst: str, msg) -> None:
        self.sim.send(self.node_id, dst, msg)

    def set_timer(self, delay: int, fn: Callable[[], None]) -> None:
        self.sim._push(self.sim.now + delay, ("timer", self, self.incarnation, fn))

    def spawn(self, gen: Generator, name: str = "task") -> Task:
        task = Task(self, gen, name)
        self.set_timer(0, task._step)
        return task

    def trace(self, kind: str, /, **detail) -> None:
        self.sim.emit(kind, self.node_id, **detail)

    def receive(self, src: str | None, msg) -> None:
        reply_to = getattr(msg, "reply_to", None)
        if reply_to is not None:
            task = self._waiting.pop(reply_to, None)
            if task is not None:
                task._step(msg)
            return
        service = self.services.get(msg.service)
        if service is not None:
            service.handle(src, msg)


class Simulation:
    def __init__(self, seed: int = 0, latency: dict[str, int] | None = None):
        self.seed = seed
        self.now = 0
        self.rng = random.Random(seed)
        lat = dict(DEFAULT_LATENCY)
        lat.update(latency or {})
        for d, v in lat.items():
            if d not in DOMAINS:
                raise SimulationError(f"unknown domain {d!r}")
            if v <= 0:
                raise SimulationError(f"latency of {d} must be positive")
        self.links = {d: Link(d, lat[d]) for d in DOMAINS}
        self.nodes: dict[str, Node] = {}
        self.trace: list[TraceEvent] = []
        self._queue: list = []
        self._seq = itertools.count()
        self._trace_seq = itertools.count()
        self.delivered = 0

    def rng_for(self, name: str) -> random.Random:
        return random.Random(f"{self.seed}:{name}")

    # -- construction ----------------------------------------------------
    def add_node(self, node_id: str, cluster: str, role: str = "worker",
                 boot: Callable[[Node], None] | None = None) -> Node:
        if node_id in self.nodes:
            raise SimulationError(f"duplicate node {node_id}")
        node = Node(self, node_id, cluster, role, boot)
        self.nodes[node_id] = node
        return node

    def node(self, node_id: str) -> Node:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise SimulationError(f"unknown node {node_id!r}") from None

    def domain(self, src: str, dst: str) -> str:
        a, b = self.node(src).cluster, self.node(dst).cluster
        return lan_of(a) if a == b else WAN

    # -- tracing ---------------------------------------------------------
    def emit(self, kind: str, node: str = KERNEL, /, **detail) -> TraceEvent:
        if node != KERNEL and kind != "crash":
            n = self.nodes.get(node)
            if n is not None and n.status != UP:
                raise SimulationError(f"{kind} attributed to crashed node {node}")
        ev = make_event(self.now, next(self._trace_seq), kind, node, detail)
        self.trace.append(ev)
        return ev

    # -- scheduling ------------------------------------------------------
    def _push(self, at: int, action) -> int:
        seq = next(self._seq)
        heapq.heappush(self._queue, (at, seq, action))
        return seq

    def schedule(self, at: int, target: str, message) -> int:
        if at < self.now:
            raise SimulationError(f"schedule in the past: {at} < {self.now}")
        self.node(target)
        return self._push(at, ("scheduled", target, message))

    def call_at(self, at: int, fn: Callable[[], None]) -> int:
        if at < self.now:
            raise SimulationError(f"call_at in the past: {at} < {self.now}")
        return self._push(at, ("harness", fn))

    def send(self, src: str, dst: str, msg) -> None:
        sender = self.node(src)
        if not sender.up:
            raise SimulationError(f"send from crashed node {src}")
        target = self.node(dst)
        domain = self.domain(src, dst)
        link = self.links[domain]
        mtype = type(msg).__name__
        if link.partitioned:
            self.emit("drop", KERNEL, src=src, dst=dst, type=mtype, domain=domain, reason="partition")
            return
        self._push(self.now + link.latency,
                   ("deliver", src, dst, msg, target.incarnation, domain))

    # -- faults ----------------------------------------------------------
    def set_partition(self, domain: str, state: bool) -> None:
        if domain not in self.links:
            raise SimulationError(f"unknown domain {domain!r}")
        link = self.links[domain]
        if link.partitioned == state:
            return
        link.partitioned = state
        self.emit("partition" if state else "heal", KERNEL, domain=domain)

    def crash_node(self, node_id: str) -> None:
        node = self.node(node_id)
        if not node.up:
            return
        self.emit("crash", node_id)
        node.status = CRASHED
        node.incarnation += 1
        node._wipe()

    def restart_node(self, node_id: str) -> None:
        node = self.node(node_id)
        if node.up:
            return
        node.status = UP
        self.emit("restart", node_id, incarnation=node.incarnation)
        node.boot()

    # -- running ---------------------------------------------------------
    def _dispatch(self, action) -> None:
        kind = action[0]
        if kind == "timer":
            _, node, inc, fn = action
            if node.up and node.incarnation == inc:
                fn()
        elif kind == "deliver":
            _, src, dst, msg, inc, domain = action
            node = self.nodes[dst]
            mtype = type(msg).__name__
            if self.links[domain].partitioned:
                self.emit("drop", KERNEL, src=src, dst=dst, type=mtype, domain=domain, reason="partition")
            elif not node.up or node.incarnation != inc:
                self.emit("drop", KERNEL, src=src, dst=dst, type=mtype, domain=domain, reason="crashed")
            else:
                self.delivered += 1
                self.emit("deliver", dst, src=src, type=mtype, domain=domain)
                node.receive(src, msg)
        elif kind == "scheduled":
            _, target, msg = action
            node = self.nodes[target]
            mtype = type(msg).__name__
            if not node.up:
                self.emit("drop", KERNEL, dst=target, type=mtype, reason="crashed")
            else:
                self.emit("scheduled", target, type=mtype)
                node.receive(None, msg)
        elif kind == "harness":
            action[1]()
        else:  # pragma: no cover
            raise SimulationError(f"unknown event {kind}")

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t: int) -> list[TraceEvent]:
        if t < self.now:
            raise SimulationError(f"run_until into the past: {t} < {self.now}")
        start = len(self.trace)
        q = self._queue
        while q and q[0][0] <= t:
            at, _, action = heapq.heappop(q)
            self.now = at
            self._dispatch(action)
        self.now = t
        return self.trace[start:]
