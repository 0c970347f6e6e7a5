"""Record type and the durable segment framing.

Each entry on disk is::

    len(4, big-endian) | producer_id_len(2) | producer_id | producer_seq(8) | origin_time(8) | payload

``len`` counts everything after itself. Offsets are implicit by position.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

_HEAD = struct.Struct(">I")
_PID = struct.Struct(">H")
_NUMS = struct.Struct(">QQ")


class DumpFormatError(ValueError):
    """A segment or dump file could not be decoded."""


@dataclass(frozen=True)
class Record:
    producer_id: str
    producer_seq: int
    payload: bytes
    origin_time: int

    @property
    def identity(self) -> tuple[str, int]:
        return (self.producer_id, self.producer_seq)


def encode_record(rec: Record) -> bytes:
    pid = rec.producer_id.encode("utf-8")
    body = _PID.pack(len(pid)) + pid + _NUMS.pack(rec.producer_seq, rec.origin_time) + rec.payload
    return _HEAD.pack(len(body)) + body


def encode_records(records) -> bytes:
    return b"".join(encode_record(r) for r in records)


def iter_frames(data: bytes):
    """Yield ``(start, end, record)`` for each frame in ``data``."""
    pos = 0
    n = len(data)
    while pos < n:
        if pos + 4 > n:
            raise DumpFormatError(f"truncated frame header at byte {pos}")
        (length,) = _HEAD.unpack_from(data, pos)
        start, end = pos, pos + 4 + length
        if end > n:
            raise DumpFormatError(f"frame at byte {pos} overruns segment")
        body = pos + 4
        if length < 2 + 16:
            raise DumpFormatError(f"frame at byte {pos} too short")
        (plen,) = _PID.unpack_from(data, body)
        if 2 + plen + 16 > length:
            raise DumpFormatError(f"producer id overruns frame at byte {pos}")
        try:
            pid = data[body + 2:body + 2 + plen].decode("utf-8")
        except UnicodeDecodeError:
            raise DumpFormatError(f"bad producer id at byte {pos}") from None
        seq, origin = _NUMS.unpack_from(data, body + 2 + plen)
        payload = bytes(data[body + 2 + plen + 16:end])
        yield start, end, Record(pid, seq, payload, origin)
        pos = end


def decode_records(data: bytes) -> list[Record]:
    return [rec for _, _, rec in iter_frames(data)]


def read_segment(path) -> list[Record]:
    return decode_records(Path(path).read_bytes())


def write_segment(path, records) -> None:
    Path(path).write_bytes(encode_records(records))
