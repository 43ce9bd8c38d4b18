"""Per-retirement orchestration of the trackers, baseline prefetchers, and prefetch port.

Hook order for a LOAD retiring at cycle ``t``:

1. demand access to the hierarchy (the latency determines ``t``);
2. access-tracker buffer activation and entry update, with an idle/limit
   unprotect check on the buffer first;
3. record-protector match: a scale-buffer hit protects the buffer and guides
   the one AT-side prefetch by the hit scale; a protected buffer whose own
   pattern matches is guided by its protected scale; otherwise DiffMin;
4. scale-tracker candidates from the base register's scale;
5. scale recording when the scale tracker produced candidates;
6. baseline prefetcher hooks;
7. issue in priority order RP_GUIDED/AT, ST, baseline.

Trackers see demand loads only, never prefetch fills.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .access_tracker import AccessTracker, AtConfig
from .baseline import Outcome, StridePrefetcher, TaggedPrefetcher
from .isa import CoreState, MicroInstruction, Program, StepResult
from .memory import (
    AccessResult,
    CacheConfig,
    HitLevel,
    MemoryHierarchy,
    PrefetchOutcome,
    PrefetchSource,
)
from .record_protector import RecordProtector, RpConfig
from .scale_tracker import ScaleTracker

BASE_PREFETCHERS = ("none", "tagged", "stride")

PRESETS = {
    "none": (False, False, False),
    "st": (True, False, False),
    "at": (False, True, False),
    "at+rp": (False, True, True),
    "st+at": (True, True, False),
    "full": (True, True, True),
}


@dataclass
class DefenseConfig:
    st_enabled: bool = True
    at_enabled: bool = True
    rp_enabled: bool = True
    base: str = "none"
    st_bit_width: int = 64
    st_max_per_load: int = 2
    stride_table_size: int = 64
    at: AtConfig = field(default_factory=AtConfig)
    rp: RpConfig = field(default_factory=RpConfig)

    def __post_init__(self):
        if self.base not in BASE_PREFETCHERS:
            raise ValueError(f"prefetcher.base must be one of {BASE_PREFETCHERS}, got {self.base!r}")
        if self.st_max_per_load not in (1, 2):
            raise ValueError("st.max_per_load must be 1 or 2")

    @classmethod
    def preset(cls, name: str, base: str = "none", **kw) -> "DefenseConfig":
        try:
            st, at, rp = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown defense preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(st_enabled=st, at_enabled=at, rp_enabled=rp, base=base, **kw)

    @property
    def name(self) -> str:
        for key, flags in PRESETS.items():
            if flags == (self.st_enabled, self.at_enabled, self.rp_enabled):
                return key
        return "custom"


@dataclass(frozen=True)
class PrefetchRecord:
    cycle: int
    pc: int
    source: PrefetchSource
    blk: int
    outcome: PrefetchOutcome


class Pipeline:
    """Memory-side port of the core; owns the hierarchy and all tracker state."""

    def __init__(
        self,
        cache: CacheConfig | None = None,
        defense: DefenseConfig | None = None,
        bucket_cycles: int = 1000,
        record_log: bool = False,
    ):
        self.cache_cfg = cache = cache or CacheConfig()
        self.defense = d = defense if defense is not None else DefenseConfig()
        if bucket_cycles < 1:
            raise ValueError("bucket_cycles must be positive")
        self.hier = MemoryHierarchy(cache)
        # register tracking also feeds the record protector
        self.st = ScaleTracker(cache, d.st_bit_width) if (d.st_enabled or d.rp_enabled) else None
        self.at = AccessTracker(d.at) if d.at_enabled else None
        self.rp = RecordProtector(d.rp) if (d.rp_enabled and d.at_enabled) else None
        self.tagged = TaggedPrefetcher(cache.line_size) if d.base == "tagged" else None
        self.stride = StridePrefetcher(d.stride_table_size, cache.line_size) if d.base == "stride" else None
        self.bucket_cycles = bucket_cycles
        self.bucket_counts: dict[PrefetchSource, dict[int, int]] = {s: defaultdict(int) for s in PrefetchSource}
        self.protected_timeline: list[int] = []
        self._next_sample = bucket_cycles
        self._finished = False
        self.log: list[PrefetchRecord] | None = [] if record_log else None
        self.last_issued: list[tuple[PrefetchSource, int, PrefetchOutcome]] = []
        self.loads = 0

    # -- port interface used by CoreState.step ------------------------------

    def reg_write(self, ins: MicroInstruction) -> None:
        if self.st is not None:
            self.st.track(ins)

    def flush(self, ins: MicroInstruction, addr: int, now: int) -> None:
        self.hier.check_addr(addr)
        self.hier.flush(addr, now)

    def load(self, ins: MicroInstruction, addr: int, now: int) -> AccessResult:
        res = self.hier.access(addr, now)
        self.loads += 1
        self.on_load_retire(ins, addr, res, now + res.latency)
        return res

    # -- tracker orchestration ----------------------------------------------

    def _in_l1(self, t: int):
        hier = self.hier
        return lambda b: hier.contains(HitLevel.L1, b, t)

    def on_load_retire(self, ins: MicroInstruction, addr: int, res: AccessResult, t: int) -> list:
        if t >= self._next_sample:
            self._tick(t)
        blk = self.cache_cfg.block(addr)
        in_l1 = self._in_l1(t)
        issue: list[tuple[PrefetchSource, int]] = []

        at, rp = self.at, self.rp
        if at is not None:
            if rp is not None:
                prev = at.lookup(ins.pc)
                if prev is not None:
                    rp.maybe_unprotect(at.buffers[prev], t)
            bid = at.activate(ins.pc, t)
            buf = None
            if bid is not None:
                buf = at.buffers[bid]
                at.record(bid, blk)
                at.update_diff_min(bid)
            cand = None
            src = PrefetchSource.AT
            hit = rp.match_scale(blk) if rp is not None else None
            if hit is not None:
                if buf is not None:
                    rp.protect(buf, hit[0], hit[1], t)
                cand = rp.guided_candidate(blk, hit[0], buf, in_l1)
                src = PrefetchSource.RP_GUIDED
            elif rp is not None and rp.matches_protected(buf, blk):
                cand = rp.guided_candidate(blk, buf.prot_sc, buf, in_l1)
                src = PrefetchSource.RP_GUIDED
            elif bid is not None:
                cand = at.candidate(bid, blk, in_l1)
            if cand is not None:
                issue.append((src, cand))

        st = self.st
        if st is not None:
            cands = st.candidates_for_load(ins.rs0, addr)
            if cands:
                if rp is not None:
                    rp.record_scale(cands[0].sc_used, cands[0].anchor)
                if self.defense.st_enabled:
                    n = 0
                    for c in cands:
                        if n >= self.defense.st_max_per_load:
                            break
                        if not in_l1(c.blk):
                            issue.append((PrefetchSource.ST, c.blk))
                            n += 1

        if self.tagged is not None:
            if res.hit_level in (HitLevel.L2, HitLevel.MEM):
                outcome = Outcome.MISS
            elif res.prefetch_hit:
                outcome = Outcome.HIT_ON_TAGGED
            else:
                outcome = Outcome.HIT
            c = self.tagged.on_access(blk, outcome)
            if c is not None:
                issue.append((PrefetchSource.TAGGED, c))
        elif self.stride is not None:
            c = self.stride.on_access(ins.pc, addr)
            if c is not None:
                issue.append((PrefetchSource.STRIDE, c))

        return self._issue(issue, ins.pc, t)

    def _issue(self, issue, pc: int, t: int) -> list:
        out = []
        mem = self.cache_cfg.mem_size
        bucket = t // self.bucket_cycles
        for src, blk in issue:
            if blk < 0 or blk >= mem:
                continue
            outcome = self.hier.prefetch(blk, src, t)
            if outcome is PrefetchOutcome.ACCEPTED:
                self.bucket_counts[src][bucket] += 1
            if self.log is not None:
                self.log.append(PrefetchRecord(t, pc, src, blk, outcome))
            out.append((src, blk, outcome))
        self.last_issued = out
        return out

    def _tick(self, t: int) -> None:
        """Periodic maintenance at bucket boundaries: idle unprotection and sampling."""
        while self._next_sample <= t:
            if self.rp is not None:
                for buf in self.at.buffers:
                    self.rp.maybe_unprotect(buf, self._next_sample)
            self.protected_timeline.append(self.at.protected_count() if self.at is not None else 0)
            self._next_sample += self.bucket_cycles

    def finish(self, t: int) -> None:
        """Close the last partial bucket so the timeline covers the whole run."""
        if self._finished:
            return
        self._finished = True
        self._tick(t)
        self.protected_timeline.append(self.at.protected_count() if self.at is not None else 0)

    def prefetch_buckets(self, n_buckets: int | None = None) -> dict[str, list[int]]:
        n = n_buckets
        if n is None:
            n = 1 + max((b for counts in self.bucket_counts.values() for b in counts), default=-1)
        return {s.value: [self.bucket_counts[s].get(b, 0) for b in range(n)] for s in PrefetchSource}


class Machine:
    """A core plus its pipeline: one independent simulation instance."""

    def __init__(self, program: Program, cache: CacheConfig | None = None,
                 defense: DefenseConfig | None = None, bucket_cycles: int = 1000,
                 record_log: bool = False):
        self.pipeline = Pipeline(cache, defense, bucket_cycles, record_log)
        self.core = CoreState(program)

    @property
    def hier(self) -> MemoryHierarchy:
        return self.pipeline.hier

    def step(self) -> StepResult:
        return self.core.step(self.pipeline)

    def run(self, max_steps: int | None = None) -> list[StepResult]:
        out = self.core.run(self.pipeline, max_steps)
        if self.core.halted:
            self.pipeline.finish(self.core.cycle)
        return out

    def run_quiet(self) -> None:
        """Run to completion without materialising the step list."""
        core, port = self.core, self.pipeline
        step = core.step
        n = len(core.program.instructions)
        while core.pc_index < n and core.fault is None:
            step(port)
        port.finish(core.cycle)
