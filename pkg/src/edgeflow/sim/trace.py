"""Line-oriented trace records.

One event per line::

    time=<int> seq=<int> kind=<word> node=<id> detail=<key:value,...>

Field order is fixed so two traces can be compared byte for byte.
List values inside ``detail`` are joined with ``|``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

KERNEL = "-"

_TOKEN = re.compile(r"^[^\s,:=]*$")
_LINE = re.compile(r"^time=(\d+) seq=(\d+) kind=(\S+) node=(\S+) detail=(\S*)$")


class TraceFormatError(ValueError):
    pass


def _token(value) -> str:
    if isinstance(value, bool):
        text = "1" if value else "0"
    elif value is None:
        text = "none"
    elif isinstance(value, (list, tuple)):
        text = "|".join(_token(v) for v in value)
    else:
        text = str(value)
    if not _TOKEN.match(text):
        raise TraceFormatError(f"illegal character in trace value {text!r}")
    return text


@dataclass(frozen=True)
class TraceEvent:
    time: int
    seq: int
    kind: str
    node: str
    detail: tuple[tuple[str, str], ...] = field(default=())

    def get(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.detail:
            if k == key:
                return v
        return default

    def get_int(self, key: str, default: int | None = None) -> int | None:
        v = self.get(key)
        return default if v is None or v == "none" else int(v)

    def get_list(self, key: str) -> list[str]:
        v = self.get(key)
        if not v or v == "none":
            return []
        return v.split("|")

    @property
    def details(self) -> dict[str, str]:
        return dict(self.detail)

    def format(self) -> str:
        body = ",".join(f"{k}:{v}" for k, v in self.detail)
        return f"time={self.time} seq={self.seq} kind={self.kind} node={self.node} detail={body}"


def make_event(time: int, seq: int, kind: str, node: str, detail: dict) -> TraceEvent:
    pairs = tuple((_token(k), _token(v)) for k, v in detail.items())
    return TraceEvent(time, seq, _token(kind), _token(node), pairs)


def parse_line(line: str) -> TraceEvent:
    m = _LINE.match(line.rstrip("\n"))
    if not m:
        raise TraceFormatError(f"malformed trace line: {line!r}")
    time, seq, kind, node, body = m.groups()
    pairs = []
    if body:
        for item in body.split(","):
            key, sep, value = item.partition(":")
            if not sep:
                raise TraceFormatError(f"malformed detail item {item!r}")
            pairs.append((key, value))
    return TraceEvent(int(time), int(seq), kind, node, tuple(pairs))


def format_trace(events: Iterable[TraceEvent]) -> str:
    return "".join(e.format() + "\n" for e in events)


def write_trace(path, events: Iterable[TraceEvent]) -> None:
    Path(path).write_text(format_trace(events), encoding="ascii")


def iter_trace(path) -> Iterator[TraceEvent]:
    with open(path, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield parse_line(line)
            except TraceFormatError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None


def read_trace(path) -> list[TraceEvent]:
    return list(iter_trace(path))
