"""Scenario files: a line-oriented, diff-friendly text format.

::

    [scenario]
    name=scenario1 seed=7 run_until=8000 re_replication=on
    [nodes]
    id=EN-1 cluster=edge role=master
    [topics]
    id=ET-1 cluster=edge rf=3 replicas=EN-1,EN-2,EN-3
    [pipeline]
    id=PC-1 kind=source output=ET-1 affinity=edge
    [workload]
    time=1000 stage=PC-1 count=50
    [faults]
    time=3000 kind=crash target=EN-3
    [moves]
    time=2000 stage=PC-3 kind=bridge input=ET-2 affinity=edge
    [checks]
    name=no_loss

Entries are ``key=value`` pairs separated by spaces; ``#`` starts a
comment. Errors are collected and reported with their line numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..pipeline.spec import ANY, SOURCE, StageSpec, WiringError, owner_cluster, validate_pipeline
from ..pipeline.transforms import TRANSFORMS
from ..sim import CLUSTERS, DEFAULT_LATENCY, DOMAINS

SECTIONS = ("scenario", "nodes", "topics", "pipeline", "workload", "faults", "moves", "checks")
FAULT_KINDS = ("crash", "restart", "partition", "heal")
ROLES = ("master", "worker")
MOVE_KEYS = ("kind", "input", "output", "affinity", "transform", "start_offset")

CHECK_PARAMS = {
    "no_loss": {},
    "order": {},
    "equivalence": {"against": str},
    "reschedule": {"stage": str, "node": str, "bound": int},
    "buffering": {"start": int, "end": int},
    "degraded": {"start": int, "end": int, "cluster": str},
    "progress": {"after": int, "min": int},
    "failover": {"cluster": str, "bound": int},
    "isolation": {},
    "partition_soundness": {},
    "leader_uniqueness": {},
    "config_agreement": {},
    "affinity": {},
}
REQUIRED_PARAMS = {
    "equivalence": ("against",),
    "reschedule": ("stage", "node", "bound"),
}


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {n}: {m}" if n else m for n, m in self.errors))


@dataclass(frozen=True)
class NodeDef:
    node_id: str
    cluster: str
    role: str


@dataclass(frozen=True)
class TopicDef:
    topic: str
    cluster: str
    rf: int
    replicas: tuple[str, ...] | None = None


@dataclass(frozen=True)
class WorkloadItem:
    time: int
    stage: str
    count: int


@dataclass(frozen=True)
class FaultEvent:
    time: int
    kind: str
    target: str


@dataclass(frozen=True)
class MoveItem:
    time: int
    stage: str
    changes: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class CheckSpec:
    name: str
    params: tuple[tuple[str, object], ...] = ()

    def get(self, key: str, default=None):
        return dict(self.params).get(key, default)


@dataclass
class Scenario:
    name: str
    seed: int = 0
    run_until: int = 10000
    re_replication: bool = True
    batch: int = 16
    latency: dict = field(default_factory=lambda: dict(DEFAULT_LATENCY))
    nodes: list[NodeDef] = field(default_factory=list)
    topics: list[TopicDef] = field(default_factory=list)
    pipeline: list[StageSpec] = field(default_factory=list)
    workload: list[WorkloadItem] = field(default_factory=list)
    faults: list[FaultEvent] = field(default_factory=list)
    moves: list[MoveItem] = field(default_factory=list)
    checks: list[CheckSpec] = field(default_factory=list)

    # -- derived views --------------------------------------------------------
    @property
    def topic_cluster(self) -> dict[str, str]:
        return {t.topic: t.cluster for t in self.topics}

    def cluster_nodes(self, cluster: str) -> list[str]:
        return [n.node_id for n in self.nodes if n.cluster == cluster]

    def masters(self, cluster: str) -> list[str]:
        return [n.node_id for n in self.nodes if n.cluster == cluster and n.role == "master"]

    def node_def(self, node_id: str) -> NodeDef:
        return next(n for n in self.nodes if n.node_id == node_id)

    def placement(self, t: TopicDef) -> tuple[str, ...]:
        return t.replicas if t.replicas is not None else tuple(self.cluster_nodes(t.cluster)[:t.rf])

    def stage(self, stage_id: str) -> StageSpec:
        return next(s for s in self.pipeline if s.stage_id == stage_id)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


def apply_move(spec: StageSpec, changes: dict, topic_cluster: dict[str, str]) -> StageSpec:
    """New spec after a rewiring; a fresh consumer group when the read position changes."""
    kw = {}
    for k, v in changes.items():
        if k == "start_offset":
            kw[k] = int(v)
        elif k in ("input", "output"):
            kw[k] = None if v == "none" else v
        else:
            kw[k] = v
    new = spec.rewired(**kw)
    fresh = (new.input != spec.input or "start_offset" in changes
             or owner_cluster(new, topic_cluster) != owner_cluster(spec, topic_cluster))
    if fresh:
        new = new.rewired(generation=spec.generation + 1)
        if "start_offset" not in changes:
            new = new.rewired(start_offset=0)
    return new


# -- parsing ------------------------------------------------------------------------

def _pairs(text: str, lineno: int, errors) -> dict[str, str] | None:
    out = {}
    for tok in text.split():
        if "=" not in tok:
            errors.append((lineno, f"expected key=value, got {tok!r}"))
            return None
        k, v = tok.split("=", 1)
        if not k or not v:
            errors.append((lineno, f"empty key or value in {tok!r}"))
            return None
        if k in out:
            errors.append((lineno, f"duplicate key {k!r}"))
            return None
        out[k] = v
    return out


class _Fields:
    def __init__(self, d: dict, lineno: int, errors, section: str):
        self.d = dict(d)
        self.lineno = lineno
        self.errors = errors
        self.section = section
        self.ok = True

    def _err(self, msg: str) -> None:
        self.errors.append((self.lineno, msg))
        self.ok = False

    def str(self, key: str, default=None, required: bool = True):
        v = self.d.pop(key, None)
        if v is None:
            if required and default is None:
                self._err(f"[{self.section}] missing {key}")
            return default
        return v

    def int(self, key: str, default=None, required: bool = True):
        v = self.str(key, default=None, required=required and default is None)
        if v is None:
            return default
        try:
            n = int(v)
        except ValueError:
            self._err(f"{key} must be an integer, got {v!r}")
            return default
        if n < 0:
            self._err(f"{key} must be non-negative, got {n}")
            return default
        return n

    def bool(self, key: str, default: bool) -> bool:
        v = self.d.pop(key, None)
        if v is None:
            return default
        if v in ("on", "true", "1", "yes"):
            return True
        if v in ("off", "false", "0", "no"):
            return False
        self._err(f"{key} must be on/off, got {v!r}")
        return default

    def done(self) -> None:
        for k in self.d:
            self._err(f"[{self.section}] unknown key {k!r}")


def parse_scenario(text: str) -> Scenario:
    errors: list[tuple[int, str]] = []
    section = None
    seen_sections = set()
    header: dict | None = None
    lines: dict[str, list[tuple[int, dict]]] = {s: [] for s in SECTIONS}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append((lineno, f"malformed section header {line!r}"))
                continue
            name = line[1:-1].strip()
            if name not in SECTIONS:
                errors.append((lineno, f"unknown section [{name}]"))
                section = None
                continue
            if name in seen_sections:
                errors.append((lineno, f"section [{name}] repeated"))
            seen_sections.add(name)
            section = name
            continue
        if section is None:
            errors.append((lineno, "entry outside of a known section"))
            continue
        d = _pairs(line, lineno, errors)
        if d is not None:
            lines[section].append((lineno, d))

    sc = Scenario(name="unnamed")
    if not lines["scenario"]:
        errors.append((0, "missing [scenario] section"))
    for lineno, d in lines["scenario"]:
        if header is not None:
            errors.append((lineno, "[scenario] takes a single line"))
            continue
        header = d
        f = _Fields(d, lineno, errors, "scenario")
        sc.name = f.str("name") or "unnamed"
        sc.seed = f.int("seed", 0)
        sc.run_until = f.int("run_until", 10000)
        sc.re_replication = f.bool("re_replication", True)
        sc.batch = f.int("batch", 16)
        if sc.batch == 0:
            errors.append((lineno, "batch must be positive"))
        lat = dict(DEFAULT_LATENCY)
        for dom in DOMAINS:
            v = f.int(f"latency_{dom}", DEFAULT_LATENCY[dom])
            if v == 0:
                errors.append((lineno, f"latency_{dom} must be positive"))
            lat[dom] = v
        sc.latency = lat
        f.done()

    node_line = {}
    for lineno, d in lines["nodes"]:
        f = _Fields(d, lineno, errors, "nodes")
        nid, cluster, role = f.str("id"), f.str("cluster"), f.str("role", "worker")
        f.done()
        if not f.ok:
            continue
        if cluster not in CLUSTERS:
            errors.append((lineno, f"unknown cluster {cluster!r}"))
            continue
        if role not in ROLES:
            errors.append((lineno, f"unknown role {role!r}"))
            continue
        if nid in node_line:
            errors.append((lineno, f"duplicate node {nid}"))
            continue
        node_line[nid] = lineno
        sc.nodes.append(NodeDef(nid, cluster, role))
    node_cluster = {n.node_id: n.cluster for n in sc.nodes}
    for c in CLUSTERS:
        if sc.cluster_nodes(c) and not sc.masters(c):
            errors.append((0, f"cluster {c} has nodes but no master"))

    for lineno, d in lines["topics"]:
        f = _Fields(d, lineno, errors, "topics")
        tid, cluster, rf = f.str("id"), f.str("cluster"), f.int("rf", 3)
        reps = f.str("replicas", required=False)
        f.done()
        if not f.ok:
            continue
        if cluster not in CLUSTERS:
            errors.append((lineno, f"unknown cluster {cluster!r}"))
            continue
        if any(t.topic == tid for t in sc.topics):
            errors.append((lineno, f"duplicate topic {tid}"))
            continue
        replicas = tuple(reps.split(",")) if reps else None
        members = sc.cluster_nodes(cluster)
        if rf == 0 or rf > len(members):
            errors.append((lineno, f"{tid}: rf={rf} but cluster {cluster} has {len(members)} nodes"))
            continue
        if replicas is not None:
            bad = [n for n in replicas if node_cluster.get(n) != cluster]
            if bad:
                errors.append((lineno, f"{tid}: replicas {','.join(bad)} are not {cluster} nodes"))
                continue
            if len(replicas) != rf or len(set(replicas)) != rf:
                errors.append((lineno, f"{tid}: need {rf} distinct replicas"))
                continue
        sc.topics.append(TopicDef(tid, cluster, rf, replicas))
    tc = sc.topic_cluster

    stage_line = {}
    for lineno, d in lines["pipeline"]:
        f = _Fields(d, lineno, errors, "pipeline")
        sid, kind = f.str("id"), f.str("kind")
        inp = f.str("input", required=False)
        out = f.str("output", required=False)
        aff = f.str("affinity", ANY)
        tr = f.str("transform", "identity")
        f.done()
        if not f.ok:
            continue
        bad = [t for t in (inp, out) if t is not None and t not in tc]
        if bad:
            errors.append((lineno, f"{sid}: undefined topic {bad[0]}"))
            continue
        spec = StageSpec(sid, kind, inp, out, aff, tr)
        stage_line[sid] = lineno
        sc.pipeline.append(spec)
    if sc.pipeline and len(stage_line) == len(lines["pipeline"]):
        try:
            _validate_chain(sc.pipeline, tc)
        except WiringError as exc:
            errors.append((stage_line.get(str(exc).split(":")[0], 0), str(exc)))
    stages = {s.stage_id: s for s in sc.pipeline}

    for lineno, d in lines["workload"]:
        f = _Fields(d, lineno, errors, "workload")
        t, st, n = f.int("time"), f.str("stage"), f.int("count")
        f.done()
        if not f.ok:
            continue
        if st not in stages:
            errors.append((lineno, f"undefined stage {st}"))
            continue
        if stages[st].kind != SOURCE:
            errors.append((lineno, f"{st} is not a source"))
            continue
        if t > sc.run_until:
            errors.append((lineno, f"workload at {t} after run_until={sc.run_until}"))
            continue
        sc.workload.append(WorkloadItem(t, st, n))

    crashed, parted = set(), set()
    for lineno, d in sorted(lines["faults"], key=lambda x: (int(x[1].get("time", "0")) if x[1].get("time", "").isdigit() else 0, x[0])):
        f = _Fields(d, lineno, errors, "faults")
        t, kind, target = f.int("time"), f.str("kind"), f.str("target")
        f.done()
        if not f.ok:
            continue
        if kind not in FAULT_KINDS:
            errors.append((lineno, f"unknown fault kind {kind!r}"))
            continue
        if t > sc.run_until:
            errors.append((lineno, f"fault at {t} after run_until={sc.run_until}"))
            continue
        if kind in ("crash", "restart"):
            if target not in node_cluster:
                errors.append((lineno, f"undefined node {target}"))
                continue
            if kind == "restart" and target not in crashed:
                errors.append((lineno, f"restart of {target} which is not crashed"))
                continue
            (crashed.add if kind == "crash" else crashed.discard)(target)
        else:
            if target not in DOMAINS:
                errors.append((lineno, f"unknown network domain {target!r}"))
                continue
            if kind == "heal" and target not in parted:
                errors.append((lineno, f"heal of {target} which is not partitioned"))
                continue
            (parted.add if kind == "partition" else parted.discard)(target)
        sc.faults.append(FaultEvent(t, kind, target))
    # keep file order for printing, but the fault list itself is time ordered
    sc.faults.sort(key=lambda e: e.time)

    current = dict(stages)
    for lineno, d in lines["moves"]:
        f = _Fields(d, lineno, errors, "moves")
        t, st = f.int("time"), f.str("stage")
        if not f.ok:
            continue
        changes = tuple((k, f.d.pop(k)) for k in MOVE_KEYS if k in f.d)
        f.done()
        if not f.ok:
            continue
        if st not in current:
            errors.append((lineno, f"undefined stage {st}"))
            continue
        bad = [v for k, v in changes if k in ("input", "output") and v != "none" and v not in tc]
        if bad:
            errors.append((lineno, f"{st}: undefined topic {bad[0]}"))
            continue
        if t > sc.run_until:
            errors.append((lineno, f"move at {t} after run_until={sc.run_until}"))
            continue
        current[st] = apply_move(current[st], dict(changes), tc)
        sc.moves.append(MoveItem(t, st, changes))
    # a group of moves sharing a time must leave a valid pipeline behind
    if sc.moves and not errors:
        view = dict(stages)
        times = sorted({m.time for m in sc.moves})
        for t in times:
            for m in sc.moves:
                if m.time == t:
                    view[m.stage] = apply_move(view[m.stage], dict(m.changes), tc)
            try:
                _validate_chain(list(view.values()), tc)
            except WiringError as exc:
                line = next(ln for ln, d in lines["moves"] if d.get("time") == str(t))
                errors.append((line, f"moves at {t}: {exc}"))

    for lineno, d in lines["checks"]:
        f = _Fields(d, lineno, errors, "checks")
        name = f.str("name")
        if not f.ok:
            continue
        if name not in CHECK_PARAMS:
            errors.append((lineno, f"unknown check {name!r}"))
            continue
        params = []
        for key, typ in CHECK_PARAMS[name].items():
            if key in f.d:
                v = f.int(key) if typ is int else f.str(key)
                params.append((key, v))
            elif key in REQUIRED_PARAMS.get(name, ()):
                errors.append((lineno, f"check {name} needs {key}"))
        f.done()
        if not f.ok:
            continue
        p = dict(params)
        if name == "reschedule":
            if p["stage"] not in stages:
                errors.append((lineno, f"undefined stage {p['stage']}"))
                continue
            if p["node"] not in node_cluster:
                errors.append((lineno, f"undefined node {p['node']}"))
                continue
        if "cluster" in p and p["cluster"] not in CLUSTERS:
            errors.append((lineno, f"unknown cluster {p['cluster']!r}"))
            continue
        sc.checks.append(CheckSpec(name, tuple(params)))

    if errors:
        raise ScenarioError(sorted(errors))
    return sc


def _validate_chain(stages, topic_cluster) -> None:
    from ..pipeline.spec import order_chain
    chain = order_chain(stages)
    validate_pipeline(chain, topic_cluster, TRANSFORMS)
    if sum(1 for s in chain if s.transform == "annotate") > 1:
        raise WiringError("annotate may appear only once in a pipeline")


# -- printing -------------------------------------------------------------------------

def format_scenario(sc: Scenario) -> str:
    out = ["[scenario]"]
    head = [f"name={sc.name}", f"seed={sc.seed}", f"run_until={sc.run_until}",
            f"re_replication={'on' if sc.re_replication else 'off'}", f"batch={sc.batch}"]
    for dom in DOMAINS:
        if sc.latency.get(dom) != DEFAULT_LATENCY[dom]:
            head.append(f"latency_{dom}={sc.latency[dom]}")
    out.append(" ".join(head))
    out.append("[nodes]")
    for n in sc.nodes:
        out.append(f"id={n.node_id} cluster={n.cluster} role={n.role}")
    out.append("[topics]")
    for t in sc.topics:
        line = f"id={t.topic} cluster={t.cluster} rf={t.rf}"
        if t.replicas is not None:
            line += " replicas=" + ",".join(t.replicas)
        out.append(line)
    out.append("[pipeline]")
    for s in sc.pipeline:
        parts = [f"id={s.stage_id}", f"kind={s.kind}"]
        if s.input:
            parts.append(f"input={s.input}")
        if s.output:
            parts.append(f"output={s.output}")
        parts += [f"affinity={s.affinity}", f"transform={s.transform}"]
        out.append(" ".join(parts))
    out.append("[workload]")
    for w in sc.workload:
        out.append(f"time={w.time} stage={w.stage} count={w.count}")
    out.append("[faults]")
    for e in sc.faults:
        out.append(f"time={e.time} kind={e.kind} target={e.target}")
    if sc.moves:
        out.append("[moves]")
        for m in sc.moves:
            out.append(" ".join([f"time={m.time}", f"stage={m.stage}"] + [f"{k}={v}" for k, v in m.changes]))
    out.append("[checks]")
    for c in sc.checks:
        out.append(" ".join([f"name={c.name}"] + [f"{k}={v}" for k, v in c.params]))
    return "\n".join(out) + "\n"
