"""Record Protector: scale buffer of victim patterns and access-buffer protection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .access_tracker import AccessBuffer, first_eligible


@dataclass
class RpConfig:
    entry_count: int = 8
    unprotect_prefetch_limit: int = 32
    unprotect_idle_cycles: int = 100000

    def __post_init__(self):
        for name in ("entry_count", "unprotect_prefetch_limit", "unprotect_idle_cycles"):
            if getattr(self, name) < 1:
                raise ValueError(f"rp.{name} must be positive")


@dataclass
class ScaleBufferEntry:
    sc: int
    anchor: int
    stamp: int = 0


def same_pattern(blk_a: int, sc_a: int, blk_b: int, sc_b: int) -> bool:
    """The redundancy test: (a - b) mod min(sc_a, sc_b) == 0."""
    return (blk_a - blk_b) % min(sc_a, sc_b) == 0


class RecordProtector:
    def __init__(self, cfg: RpConfig | None = None):
        self.cfg = cfg or RpConfig()
        self.entries: list[ScaleBufferEntry | None] = [None] * self.cfg.entry_count
        self._clock = 0

    def _refresh(self, e: ScaleBufferEntry) -> None:
        self._clock += 1
        e.stamp = self._clock

    def valid_entries(self) -> list[tuple[int, ScaleBufferEntry]]:
        return [(i, e) for i, e in enumerate(self.entries) if e is not None]

    def record_scale(self, sc_new: int, anchor_new: int) -> int:
        """Record a victim pattern; returns the index of the surviving entry.

        A new pattern matching an existing one either replaces it (larger
        scale wins) or is absorbed. When it replaces, any further matching
        entries are dropped so no two entries describe overlapping patterns.
        """
        matches = [(i, e) for i, e in self.valid_entries() if same_pattern(anchor_new, sc_new, e.anchor, e.sc)]
        if matches:
            for i, e in matches:
                if sc_new <= e.sc:
                    self._refresh(e)
                    return i
            keep, e = matches[0]
            e.sc, e.anchor = sc_new, anchor_new
            self._refresh(e)
            for i, _ in matches[1:]:
                self.entries[i] = None
            return keep
        slot = next((i for i, e in enumerate(self.entries) if e is None), None)
        if slot is None:
            slot = min(range(len(self.entries)), key=lambda i: self.entries[i].stamp)
        e = ScaleBufferEntry(sc_new, anchor_new)
        self.entries[slot] = e
        self._refresh(e)
        return slot

    def match_scale(self, blk: int) -> tuple[int, int] | None:
        for e in self.entries:
            if e is not None and (blk - e.anchor) % e.sc == 0:
                self._refresh(e)
                return e.sc, e.anchor
        return None

    @staticmethod
    def protect(buf: AccessBuffer, sc: int, anchor: int, now: int) -> None:
        buf.protected = True
        buf.prot_sc = sc
        buf.prot_anchor = anchor
        buf.prot_prefetch_count = 0
        buf.last_touch = now

    @staticmethod
    def matches_protected(buf: AccessBuffer | None, blk: int) -> bool:
        return bool(buf is not None and buf.protected and (blk - buf.prot_anchor) % buf.prot_sc == 0)

    @staticmethod
    def guided_candidate(
        blk_now: int, sc_hit: int, buf: AccessBuffer | None, in_l1: Callable[[int], bool]
    ) -> int | None:
        entries = buf.entries if buf is not None else ()
        c = first_eligible(blk_now, sc_hit, entries, in_l1)
        if c is not None and buf is not None and buf.protected:
            buf.prot_prefetch_count += 1
        return c

    def maybe_unprotect(self, buf: AccessBuffer, now: int) -> bool:
        """Drop protection after too many guided prefetches or a long idle gap."""
        if not buf.protected:
            return False
        if (
            buf.prot_prefetch_count > self.cfg.unprotect_prefetch_limit
            or now - buf.last_touch > self.cfg.unprotect_idle_cycles
        ):
            buf.unprotect()
            return True
        return False
