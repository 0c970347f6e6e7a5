from .dedup import DedupState
from .runtime import SourceRunner, StageRunner, make_runner, producer_id, synthetic_body
from .spec import (ANY, BRIDGE, SINK, SOURCE, TRANSFORM, StageSpec, WiringError, order_chain,
                   owner_cluster, validate_pipeline, validate_stage)
from .transforms import TRANSFORMS, AnnotatedPayload, AnnotationError, annotate, get_transform

__all__ = [
    "DedupState", "SourceRunner", "StageRunner", "make_runner", "producer_id", "synthetic_body",
    "ANY", "BRIDGE", "SINK", "SOURCE", "TRANSFORM", "StageSpec", "WiringError", "order_chain",
    "owner_cluster", "validate_pipeline", "validate_stage", "TRANSFORMS", "AnnotatedPayload",
    "AnnotationError", "annotate", "get_transform",
]
