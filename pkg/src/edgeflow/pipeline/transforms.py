"""Registered per-record transforms.

A transform maps a record to a record (keeping its identity) or to
``None`` to drop it. All of them are pure, which is what lets a stage be
replayed or moved to another host without changing the output.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass
from typing import Callable

from ..log.codec import Record

EPOCH_DATE = _dt.datetime(2018, 1, 1, tzinfo=_dt.timezone.utc)
_MAGIC = b"camera_id="


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatedPayload:
    camera_id: str
    date: str
    timestamp: int
    body: bytes

    def to_bytes(self) -> bytes:
        head = f"camera_id={self.camera_id};date={self.date};timestamp={self.timestamp}\n"
        return head.encode() + self.body

    @classmethod
    def from_bytes(cls, data: bytes) -> "AnnotatedPayload":
        if not data.startswith(_MAGIC) or b"\n" not in data:
            raise AnnotationError("payload is not annotated")
        head, body = data.split(b"\n", 1)
        fields = dict(part.split("=", 1) for part in head.decode().split(";"))
        return cls(fields["camera_id"], fields["date"], int(fields["timestamp"]), body)


def sim_date(now: int) -> str:
    """Calendar date of a simulated instant (time zero is 2018-01-01 UTC)."""
    return (EPOCH_DATE + _dt.timedelta(milliseconds=now)).date().isoformat()


def annotate(payload: bytes, camera_id: str, now: int) -> AnnotatedPayload:
    return AnnotatedPayload(camera_id, sim_date(now), now, bytes(payload))


def is_annotated(payload: bytes) -> bool:
    return payload.startswith(_MAGIC)


def identity(rec: Record) -> Record:
    return rec


def annotate_record(rec: Record) -> Record:
    # stamped with the origin time so the output does not depend on where
    # or when the stage happened to run
    if is_annotated(rec.payload):
        raise AnnotationError(f"{rec.identity} already annotated")
    ap = annotate(rec.payload, rec.producer_id, rec.origin_time)
    return Record(rec.producer_id, rec.producer_seq, ap.to_bytes(), rec.origin_time)


def filter_even_seq(rec: Record) -> Record | None:
    return rec if rec.producer_seq % 2 == 0 else None


TRANSFORMS: dict[str, Callable[[Record], Record | None]] = {
    "identity": identity,
    "annotate": annotate_record,
    "filter_even_seq": filter_even_seq,
}


def get_transform(name: str) -> Callable[[Record], Record | None]:
    try:
        return TRANSFORMS[name]
    except KeyError:
        raise KeyError(f"unknown transform {name!r}") from None
