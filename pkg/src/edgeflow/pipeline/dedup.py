from __future__ import annotations


class DedupState:
    """Seen ``(producer_id, producer_seq)`` pairs, stored compactly.

    Per producer we keep the highest seq below which everything has been
    seen, plus a sparse set of seqs above it.
    """

    def __init__(self):
        self._floor: dict[str, int] = {}
        self._sparse: dict[str, set[int]] = {}

    def seen(self, producer: str, seq: int) -> bool:
        if seq <= self._floor.get(producer, -1):
            return True
        return seq in self._sparse.get(producer, ())

    def observe(self, producer: str, seq: int) -> bool:
        """Record a pair; True if it was new."""
        if self.seen(producer, seq):
            return False
        floor = self._floor.get(producer, -1)
        if seq == floor + 1:
            floor = seq
            sparse = self._sparse.get(producer)
            while sparse and floor + 1 in sparse:
                floor += 1
                sparse.discard(floor)
            self._floor[producer] = floor
            if sparse is not None and not sparse:
                del self._sparse[producer]
        else:
            self._sparse.setdefault(producer, set()).add(seq)
        return True

    def copy(self) -> "DedupState":
        d = DedupState()
        d._floor = dict(self._floor)
        d._sparse = {p: set(s) for p, s in self._sparse.items()}
        return d

    def snapshot(self) -> dict:
        out = {}
        for p in sorted(set(self._floor) | set(self._sparse)):
            out[p] = [self._floor.get(p, -1), sorted(self._sparse.get(p, ()))]
        return out

    @classmethod
    def from_snapshot(cls, snap: dict | None) -> "DedupState":
        d = cls()
        for p, (floor, sparse) in (snap or {}).items():
            if floor >= 0:
                d._floor[p] = floor
            if sparse:
                d._sparse[p] = set(sparse)
        return d

    def __len__(self) -> int:
        return sum(f + 1 for f in self._floor.values()) + sum(len(s) for s in self._sparse.values())

    def __eq__(self, other) -> bool:
        return isinstance(other, DedupState) and self.snapshot() == other.snapshot()
