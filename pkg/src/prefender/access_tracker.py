"""Access Tracker: per-load-PC block history and DiffMin-based prefetching."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable


@dataclass
class AtConfig:
    buffer_count: int = 32
    entry_count: int = 8
    valid_threshold: int = 4

    def __post_init__(self):
        if self.buffer_count < 1:
            raise ValueError("at.buffer_count must be >= 1")
        if self.entry_count < 2:
            raise ValueError("at.entry_count must be >= 2")
        if not 1 <= self.valid_threshold <= self.entry_count:
            raise ValueError("at.valid_threshold must lie in 1..entry_count")


@dataclass
class AccessBuffer:
    inst_addr: int | None = None
    # valid entries ordered least- to most-recently used
    entries: list[int] = field(default_factory=list)
    diff_min: int | None = None
    protected: bool = False
    prot_sc: int | None = None
    prot_anchor: int | None = None
    prot_prefetch_count: int = 0
    last_touch: int = 0
    # buffer-level recency stamp, larger = more recent
    stamp: int = 0

    @property
    def valid(self) -> bool:
        return self.inst_addr is not None

    def reset(self, pc: int | None) -> None:
        self.inst_addr = pc
        self.entries.clear()
        self.diff_min = None
        self.unprotect()

    def unprotect(self) -> None:
        self.protected = False
        self.prot_sc = None
        self.prot_anchor = None
        self.prot_prefetch_count = 0


def min_pairwise_diff(blocks: list[int]) -> int | None:
    if len(blocks) < 2:
        return None
    s = sorted(blocks)
    return min(b - a for a, b in zip(s, s[1:]))


class AccessTracker:
    def __init__(self, cfg: AtConfig | None = None):
        self.cfg = cfg or AtConfig()
        self.buffers = [AccessBuffer() for _ in range(self.cfg.buffer_count)]
        self._by_pc: dict[int, int] = {}
        self._clock = 0
        self.untracked = 0

    def lookup(self, pc: int) -> int | None:
        return self._by_pc.get(pc)

    def activate(self, pc: int, now: int) -> int | None:
        """Return the buffer id associated with ``pc``, allocating one if needed.

        Protected buffers are never chosen as LRU victims; if every buffer is
        protected and none matches, the access goes untracked (``None``).
        """
        self._clock += 1
        bid = self._by_pc.get(pc)
        if bid is None:
            bid = self._allocate(pc)
            if bid is None:
                self.untracked += 1
                return None
        buf = self.buffers[bid]
        buf.stamp = self._clock
        buf.last_touch = now
        return bid

    def _allocate(self, pc: int) -> int | None:
        victim = None
        for i, buf in enumerate(self.buffers):
            if not buf.valid:
                victim = i
                break
            if buf.protected:
                continue
            if victim is None or buf.stamp < self.buffers[victim].stamp:
                victim = i
        if victim is None:
            return None
        buf = self.buffers[victim]
        if buf.inst_addr is not None:
            del self._by_pc[buf.inst_addr]
        buf.reset(pc)
        self._by_pc[pc] = victim
        return victim

    def record(self, bid: int, blk: int) -> None:
        entries = self.buffers[bid].entries
        if blk in entries:
            entries.remove(blk)
        elif len(entries) >= self.cfg.entry_count:
            entries.pop(0)
        entries.append(blk)

    def update_diff_min(self, bid: int) -> int | None:
        """Recompute DiffMin when the buffer holds at least ``valid_threshold`` entries."""
        buf = self.buffers[bid]
        if len(buf.entries) >= self.cfg.valid_threshold:
            buf.diff_min = min_pairwise_diff(buf.entries)
        return buf.diff_min

    def diff_min(self, bid: int) -> int | None:
        buf = self.buffers[bid]
        if len(buf.entries) < self.cfg.valid_threshold:
            return None
        return buf.diff_min

    def candidate(self, bid: int, blk_now: int, in_l1: Callable[[int], bool]) -> int | None:
        d = self.diff_min(bid)
        if d is None:
            return None
        return first_eligible(blk_now, d, self.buffers[bid].entries, in_l1)

    def associated_pcs(self) -> set[int]:
        return set(self._by_pc)

    def protected_count(self) -> int:
        return sum(1 for b in self.buffers if b.protected)


def first_eligible(blk_now: int, step: int, entries, in_l1: Callable[[int], bool]) -> int | None:
    """First of ``blk_now + step``, ``blk_now - step`` that is neither an entry nor in L1."""
    for c in (blk_now + step, blk_now - step):
        if c < 0 or c in entries or in_l1(c):
            continue
        return c
    return None


def brute_force_diff_min(blocks) -> int | None:
    """O(n^2) reference used by tests and selftest."""
    diffs = [abs(a - b) for a, b in combinations(blocks, 2)]
    return min(diffs) if diffs else None
