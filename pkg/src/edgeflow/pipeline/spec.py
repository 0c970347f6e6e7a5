from __future__ import annotations

from dataclasses import dataclass, replace

SOURCE = "source"
TRANSFORM = "transform"
BRIDGE = "bridge"
SINK = "sink"
KINDS = (SOURCE, TRANSFORM, BRIDGE, SINK)

ANY = "any"


class WiringError(ValueError):
    pass


@dataclass(frozen=True)
class StageSpec:
    stage_id: str
    kind: str
    input: str | None
    output: str | None
    affinity: str
    transform: str = "identity"
    generation: int = 0
    start_offset: int = 0

    @property
    def group(self) -> str:
        """Consumer group; a rewired stage gets a fresh one."""
        return f"{self.stage_id}.g{self.generation}"

    def to_dict(self) -> dict:
        return {
            "stage_id": self.stage_id, "kind": self.kind, "input": self.input,
            "output": self.output, "affinity": self.affinity, "transform": self.transform,
            "generation": self.generation, "start_offset": self.start_offset,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageSpec":
        return cls(**d)

    def rewired(self, **changes) -> "StageSpec":
        return replace(self, **changes)


def owner_cluster(spec: StageSpec, topic_cluster: dict[str, str]) -> str:
    """The cluster whose manager schedules this stage."""
    if spec.affinity != ANY:
        return spec.affinity
    topic = spec.input or spec.output
    return topic_cluster[topic]


def validate_stage(spec: StageSpec, topic_cluster: dict[str, str], transforms) -> None:
    sid = spec.stage_id
    if spec.kind not in KINDS:
        raise WiringError(f"{sid}: unknown kind {spec.kind!r}")
    if spec.transform not in transforms:
        raise WiringError(f"{sid}: unknown transform {spec.transform!r}")
    for t in (spec.input, spec.output):
        if t is not None and t not in topic_cluster:
            raise WiringError(f"{sid}: unknown topic {t}")
    if spec.kind == SOURCE and (spec.input is not None or spec.output is None):
        raise WiringError(f"{sid}: a source has an output and no input")
    if spec.kind == SINK and (spec.output is not None or spec.input is None):
        raise WiringError(f"{sid}: a sink has an input and no output")
    if spec.kind in (TRANSFORM, BRIDGE) and (spec.input is None or spec.output is None):
        raise WiringError(f"{sid}: {spec.kind} needs input and output")
    if spec.input and spec.output:
        crossing = topic_cluster[spec.input] != topic_cluster[spec.output]
        if spec.kind == BRIDGE and not crossing:
            raise WiringError(f"{sid}: bridge topics must be in different clusters")
        if spec.kind == TRANSFORM and crossing:
            raise WiringError(f"{sid}: crossing clusters requires kind=bridge")
    if spec.affinity not in ("edge", "cloud", ANY):
        raise WiringError(f"{sid}: unknown affinity {spec.affinity!r}")
    if spec.start_offset < 0:
        raise WiringError(f"{sid}: negative start offset")


def validate_pipeline(stages, topic_cluster: dict[str, str], transforms) -> None:
    """Stages must form one linear chain from a source to a sink."""
    stages = list(stages)
    if not stages:
        raise WiringError("empty pipeline")
    ids = [s.stage_id for s in stages]
    if len(set(ids)) != len(ids):
        raise WiringError("duplicate stage id")
    for s in stages:
        validate_stage(s, topic_cluster, transforms)
    if stages[0].kind != SOURCE:
        raise WiringError(f"pipeline must start with a source, got {stages[0].stage_id}")
    if stages[-1].kind != SINK:
        raise WiringError(f"pipeline must end with a sink, got {stages[-1].stage_id}")
    for s in stages[1:-1]:
        if s.kind in (SOURCE, SINK):
            raise WiringError(f"{s.stage_id}: {s.kind} in the middle of the chain")
    seen_topics = set()
    for a, b in zip(stages, stages[1:]):
        if a.output != b.input:
            raise WiringError(f"{a.stage_id} writes {a.output} but {b.stage_id} reads {b.input}")
        if a.output in seen_topics:
            raise WiringError(f"topic {a.output} used twice in the chain")
        seen_topics.add(a.output)


def order_chain(stages) -> list[StageSpec]:
    """Sort stages from source to sink following the topic wiring."""
    stages = list(stages)
    by_input = {s.input: s for s in stages if s.input is not None}
    sources = [s for s in stages if s.kind == SOURCE]
    if len(sources) != 1:
        raise WiringError("pipeline needs exactly one source")
    chain = [sources[0]]
    while chain[-1].output is not None and chain[-1].output in by_input:
        nxt = by_input[chain[-1].output]
        if nxt in chain:
            raise WiringError("cycle in pipeline")
        chain.append(nxt)
    if len(chain) != len(stages):
        missing = sorted(set(s.stage_id for s in stages) - set(s.stage_id for s in chain))
        raise WiringError(f"stages not on the chain: {', '.join(missing)}")
    return chain
