"""Two-level set-associative cache model with LRU, flush, and MSHR-tracked prefetch fills.

The core is blocking, so demand misses complete before the next instruction
issues; only prefetches occupy MSHRs across cycles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class HitLevel(str, Enum):
    L1 = "L1"
    L2 = "L2"
    MEM = "MEM"
    MSHR_MERGE = "MSHR_MERGE"


class PrefetchSource(str, Enum):
    ST = "ST"
    AT = "AT"
    RP_GUIDED = "RP_GUIDED"
    TAGGED = "TAGGED"
    STRIDE = "STRIDE"


PREFENDER_SOURCES = frozenset({PrefetchSource.ST, PrefetchSource.AT, PrefetchSource.RP_GUIDED})
BASIC_SOURCES = frozenset({PrefetchSource.TAGGED, PrefetchSource.STRIDE})


class PrefetchOutcome(str, Enum):
    ACCEPTED = "ACCEPTED"
    DROPPED_PRESENT = "DROPPED_PRESENT"
    DROPPED_NO_MSHR = "DROPPED_NO_MSHR"


class MemoryFault(Exception):
    """Raised for an address outside configured physical memory."""


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass
class CacheConfig:
    line_size: int = 64
    l1_size: int = 65536
    l1_ways: int = 2
    l2_size: int = 2097152
    l2_ways: int = 8
    page_size: int = 4096
    mshr_count: int = 4
    mshr_merge_limit: int = 20
    lat_l1_hit: int = 2
    lat_l2_hit: int = 20
    lat_mem: int = 100
    mem_size: int = 1 << 26

    def __post_init__(self):
        for name in ("line_size", "l1_size", "l1_ways", "l2_size", "l2_ways", "page_size"):
            if not _is_pow2(getattr(self, name)):
                raise ValueError(f"{name} must be a power of two, got {getattr(self, name)}")
        if self.l1_size < self.l1_ways * self.line_size or self.l2_size < self.l2_ways * self.line_size:
            raise ValueError("cache smaller than one set")
        if self.mshr_count < 1 or self.mshr_merge_limit < 1:
            raise ValueError("mshr_count and mshr_merge_limit must be positive")
        if not 0 < self.lat_l1_hit <= self.lat_l2_hit <= self.lat_mem:
            raise ValueError("latencies must satisfy 0 < l1 <= l2 <= mem")

    @property
    def l1_sets(self) -> int:
        return self.l1_size // (self.l1_ways * self.line_size)

    @property
    def l2_sets(self) -> int:
        return self.l2_size // (self.l2_ways * self.line_size)

    @property
    def offset_bits(self) -> int:
        return self.line_size.bit_length() - 1

    def block(self, addr: int) -> int:
        return addr & ~(self.line_size - 1)

    def page(self, addr: int) -> int:
        return addr // self.page_size

    def l1_set(self, addr: int) -> int:
        return (addr >> self.offset_bits) % self.l1_sets

    def l2_set(self, addr: int) -> int:
        return (addr >> self.offset_bits) % self.l2_sets


class SetAssocCache:
    """One cache level. Each set is a dict whose insertion order is recency (first = LRU)."""

    def __init__(self, n_sets: int, ways: int, line_size: int):
        self.n_sets = n_sets
        self.ways = ways
        self.line_size = line_size
        self._shift = line_size.bit_length() - 1
        self.sets: list[dict[int, None]] = [{} for _ in range(n_sets)]

    def set_index(self, blk: int) -> int:
        return (blk >> self._shift) % self.n_sets

    def contains(self, blk: int) -> bool:
        return blk in self.sets[(blk >> self._shift) % self.n_sets]

    def touch(self, blk: int) -> None:
        s = self.sets[(blk >> self._shift) % self.n_sets]
        del s[blk]
        s[blk] = None

    def insert(self, blk: int) -> int | None:
        """Install ``blk`` as most recent; return the evicted block, if any."""
        s = self.sets[(blk >> self._shift) % self.n_sets]
        if blk in s:
            del s[blk]
            s[blk] = None
            return None
        victim = None
        if len(s) >= self.ways:
            victim = next(iter(s))
            del s[victim]
        s[blk] = None
        return victim

    def invalidate(self, blk: int) -> bool:
        s = self.sets[(blk >> self._shift) % self.n_sets]
        if blk in s:
            del s[blk]
            return True
        return False

    def lru_order(self, set_idx: int) -> list[int]:
        return list(self.sets[set_idx])

    def valid_blocks(self):
        for s in self.sets:
            yield from s


@dataclass
class Mshr:
    target: int
    fill_at: int
    source: PrefetchSource
    issued_at: int
    merged: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class AccessResult:
    latency: int
    hit_level: HitLevel
    # True when the access was the first demand use of a prefetched line
    prefetch_hit: bool = False


class MemoryHierarchy:
    """Inclusive L1D/L2 pair with a prefetch port.

    Prefetched lines become visible at ``fill_at``; a demand access to a line
    still in flight merges with its MSHR and pays only the residual time.
    """

    def __init__(self, cfg: CacheConfig | None = None):
        self.cfg = cfg = cfg or CacheConfig()
        self.l1 = SetAssocCache(cfg.l1_sets, cfg.l1_ways, cfg.line_size)
        self.l2 = SetAssocCache(cfg.l2_sets, cfg.l2_ways, cfg.line_size)
        self._mask = ~(cfg.line_size - 1)
        self.mshrs: dict[int, Mshr] = {}
        # lines brought in by a prefetch and not yet demanded (tag bits)
        self.prefetched: set[int] = set()
        self.prefetch_attempts = {s: 0 for s in PrefetchSource}
        self.prefetch_issued = {s: 0 for s in PrefetchSource}
        self.demand_accesses = 0
        self.demand_misses = 0
        self.miss_latency = 0
        self._next_request = 0

    # -- internal fill machinery -------------------------------------------

    def _fill(self, blk: int) -> None:
        victim = self.l2.insert(blk)
        if victim is not None and self.l1.invalidate(victim):
            self.prefetched.discard(victim)
        victim = self.l1.insert(blk)
        if victim is not None:
            self.prefetched.discard(victim)

    def _retire(self, now: int) -> None:
        if not self.mshrs:
            return
        done = [m for m in self.mshrs.values() if m.fill_at <= now]
        if not done:
            return
        done.sort(key=lambda m: (m.fill_at, m.issued_at))
        for m in done:
            del self.mshrs[m.target]
            self._fill(m.target)
            self.prefetched.add(m.target)

    def check_addr(self, addr: int) -> None:
        if addr < 0 or addr >= self.cfg.mem_size:
            raise MemoryFault(f"address {addr:#x} outside physical memory of {self.cfg.mem_size:#x} bytes")

    # -- public operations ---------------------------------------------------

    def access(self, addr: int, now: int) -> AccessResult:
        self.check_addr(addr)
        self._retire(now)
        cfg = self.cfg
        blk = addr & self._mask
        self.demand_accesses += 1
        m = self.mshrs.get(blk)
        if m is not None:
            self._next_request += 1
            if len(m.merged) < cfg.mshr_merge_limit:
                m.merged.append(self._next_request)
            latency = max(1, m.fill_at - now)
            del self.mshrs[blk]
            self._fill(blk)
            self.prefetched.discard(blk)
            self.miss_latency += latency
            return AccessResult(latency, HitLevel.MSHR_MERGE, prefetch_hit=True)
        if self.l1.contains(blk):
            self.l1.touch(blk)
            tagged = blk in self.prefetched
            if tagged:
                self.prefetched.discard(blk)
            return AccessResult(cfg.lat_l1_hit, HitLevel.L1, prefetch_hit=tagged)
        self.demand_misses += 1
        if self.l2.contains(blk):
            self.l2.touch(blk)
            victim = self.l1.insert(blk)
            if victim is not None:
                self.prefetched.discard(victim)
            self.miss_latency += cfg.lat_l2_hit
            return AccessResult(cfg.lat_l2_hit, HitLevel.L2)
        self._fill(blk)
        self.miss_latency += cfg.lat_mem
        return AccessResult(cfg.lat_mem, HitLevel.MEM)

    def flush(self, addr: int, now: int = 0) -> None:
        blk = addr & self._mask
        self._retire(now)
        self.l1.invalidate(blk)
        self.l2.invalidate(blk)
        self.mshrs.pop(blk, None)
        self.prefetched.discard(blk)

    def prefetch(self, blk: int, source: PrefetchSource, now: int) -> PrefetchOutcome:
        cfg = self.cfg
        if blk & (cfg.line_size - 1):
            raise ValueError(f"prefetch target {blk:#x} is not line-aligned")
        self.check_addr(blk)
        self.prefetch_attempts[source] += 1
        self._retire(now)
        if blk in self.mshrs or self.l1.contains(blk):
            return PrefetchOutcome.DROPPED_PRESENT
        if len(self.mshrs) >= cfg.mshr_count:
            if source in BASIC_SOURCES:
                return PrefetchOutcome.DROPPED_NO_MSHR
            oldest = None
            for m in self.mshrs.values():
                if m.source in BASIC_SOURCES and (oldest is None or m.issued_at < oldest.issued_at):
                    oldest = m
            if oldest is None:
                return PrefetchOutcome.DROPPED_NO_MSHR
            del self.mshrs[oldest.target]
        lat = cfg.lat_l2_hit if self.l2.contains(blk) else cfg.lat_mem
        self.mshrs[blk] = Mshr(target=blk, fill_at=now + lat, source=source, issued_at=now)
        self.prefetch_issued[source] += 1
        return PrefetchOutcome.ACCEPTED

    def contains(self, level: str | HitLevel, blk: int, now: int) -> bool:
        """Pure presence query: in-flight fills do not count until ``fill_at``."""
        blk &= self._mask
        m = self.mshrs.get(blk)
        if m is not None and m.fill_at <= now:
            # would be retired by the next mutating call
            return True
        cache = self.l1 if HitLevel(level) is HitLevel.L1 else self.l2
        return cache.contains(blk)

    def in_flight(self, blk: int) -> bool:
        return (blk & self._mask) in self.mshrs
