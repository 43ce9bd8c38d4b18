"""Attack program generators, the attacker's inference rule, and scenario runner.

Each attack is a straight-line program in three phases:

1. initialise the eviction lines (flush, evict with conflicting loads, or prime);
2. the victim loads ``base + secret * S`` through a MUL/ADD address chain;
3. the attacker times one load per index with TIME/LOAD/TIME from a single
   probe pc.

Prime+Probe works at L2 granularity. With the default 2-way 64KB L1 the
victim lines ``i`` and ``i + 32KB/S`` share an L1 set, so an L1-only prime
cannot tell them apart; the 4096-set L2 can. The attacker primes every way of
each victim L2 set and probes the oldest (first-primed) line of each set.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from enum import Enum

from .isa import MicroInstruction as I
from .isa import Opcode, Program
from .memory import CacheConfig, HitLevel
from .pipeline import DefenseConfig, Machine

TIE_BAND = 1


class AttackKind(str, Enum):
    FLUSH_RELOAD = "FLUSH_RELOAD"
    EVICT_RELOAD = "EVICT_RELOAD"
    PRIME_PROBE = "PRIME_PROBE"


class Challenge(str, Enum):
    C2_RANDOM_ORDER = "C2_RANDOM_ORDER"
    C3_NOISY_INSTR = "C3_NOISY_INSTR"
    C4_NOISY_ACCESS = "C4_NOISY_ACCESS"


ALL_CHALLENGES = frozenset(Challenge)


class Verdict(str, Enum):
    SUCCESS = "SUCCESS"
    DEFEATED = "DEFEATED"
    WRONG = "WRONG"


class AttackSpecError(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind = AttackKind.FLUSH_RELOAD
    secret: int | None = None  # None: drawn per trial from the seed
    k_lines: int = 128
    stride_bytes: int = 0x200
    challenges: frozenset = frozenset()
    noise_instr_count: int = 8
    noise_offset: int = 0x100
    seed: int = 0
    # "any" or "in_page": restrict random secrets to those whose +-S neighbours share its page
    secret_pool: str = "any"

    def has(self, c: Challenge) -> bool:
        return c in self.challenges


@dataclass(frozen=True)
class Layout:
    victim_base: int = 0x400000
    secret_addr: int = 0x100040
    evict_base: int = 0x800000
    prime_base: int = 0x1000000
    noise_base: int = 0x2000000
    noise_span: int = 0x100000


# fixed pcs of the attack's static instructions
PC_FLUSH_LI, PC_FLUSH = 0x1000, 0x1008
PC_WARM_LI, PC_WARM = 0x1010, 0x1018
PC_EVICT_LI, PC_EVICT = 0x1020, 0x1028
PC_PRIME_LI, PC_PRIME = 0x1030, 0x1038
PC_VICTIM = 0x2000
PC_PROBE_LI, PC_T0, PC_PROBE, PC_T1 = 0x3000, 0x3008, 0x3010, 0x3018
PC_NOISE_BASE = 0x10000


@dataclass
class ProbeSlot:
    index: int | None  # None for same-pc off-pattern noise (C4)
    addr: int


@dataclass
class AttackProgram:
    program: Program
    spec: AttackSpec
    secret: int
    probe_pc: int
    slots: list[ProbeSlot]
    eviction_lines: list[int]  # block of the line measured for each index
    victim_lines: list[int]
    phase1_end: int  # instruction index where the victim phase starts
    victim_end: int

    @property
    def probe_order(self) -> list[int]:
        return [s.index for s in self.slots if s.index is not None]


@dataclass
class InferenceResult:
    verdict: Verdict
    inferred: int | None
    extremum_count: int


def in_page_secrets(spec: AttackSpec, cfg: CacheConfig, layout: Layout = Layout()) -> list[int]:
    S = spec.stride_bytes
    out = []
    for i in range(spec.k_lines):
        a = layout.victim_base + i * S
        if i >= 1 and i + 1 < spec.k_lines and cfg.page(a - S) == cfg.page(a) == cfg.page(a + S):
            out.append(i)
    return out


def _check_spec(spec: AttackSpec, cfg: CacheConfig, layout: Layout) -> None:
    if spec.k_lines < 2:
        raise AttackSpecError("k_lines must be >= 2")
    if spec.stride_bytes < cfg.line_size or spec.stride_bytes % cfg.line_size:
        raise AttackSpecError("stride_bytes must be a positive multiple of line_size")
    if spec.secret is not None and not 0 <= spec.secret < spec.k_lines:
        raise AttackSpecError(f"secret {spec.secret} outside 0..{spec.k_lines - 1}")
    if spec.noise_instr_count < 0:
        raise AttackSpecError("noise_instr_count must be >= 0")
    if spec.secret_pool not in ("any", "in_page"):
        raise AttackSpecError("secret_pool must be 'any' or 'in_page'")
    span = spec.k_lines * spec.stride_bytes
    if layout.victim_base + span > layout.evict_base:
        raise AttackSpecError("victim array overlaps the eviction region")


def _prime_base(cfg: CacheConfig, layout: Layout) -> int:
    way_span = cfg.l2_sets * cfg.line_size
    base = -(-layout.prime_base // way_span) * way_span
    return base + layout.victim_base % way_span


def gen_attack(spec: AttackSpec, cfg: CacheConfig | None = None, layout: Layout = Layout(),
               secret: int | None = None) -> AttackProgram:
    cfg = cfg or CacheConfig()
    _check_spec(spec, cfg, layout)
    rng = random.Random(spec.seed)
    if secret is None:
        secret = spec.secret if spec.secret is not None else rng.randrange(spec.k_lines)
    S, K = spec.stride_bytes, spec.k_lines
    victim_lines = [layout.victim_base + i * S for i in range(K)]
    prog: list[I] = []

    def load_at(addr, pc_li, pc_ld, rd=2):
        prog.append(I(Opcode.LOADI, rd=1, imm=addr, pc=pc_li))
        prog.append(I(Opcode.LOAD, rd=rd, rs0=1, imm=0, pc=pc_ld))

    # phase 1
    if spec.kind is AttackKind.FLUSH_RELOAD:
        measured = victim_lines
        for a in victim_lines:
            prog.append(I(Opcode.LOADI, rd=1, imm=a, pc=PC_FLUSH_LI))
            prog.append(I(Opcode.FLUSH, rs0=1, imm=0, pc=PC_FLUSH))
    elif spec.kind is AttackKind.EVICT_RELOAD:
        measured = victim_lines
        for a in victim_lines:
            load_at(a, PC_WARM_LI, PC_WARM)
        l1_span = cfg.l1_sets * cfg.line_size
        seen: dict[int, None] = {}
        for a in victim_lines:
            seen.setdefault(a % l1_span)
        conflicts = [
            layout.evict_base + off + t * l1_span
            for off in seen
            for t in range(cfg.l1_ways + 2)
        ]
        if conflicts[-1] >= cfg.mem_size:
            raise AttackSpecError("eviction set does not fit in physical memory")
        for a in conflicts:
            load_at(a, PC_EVICT_LI, PC_EVICT)
    else:
        way_span = cfg.l2_sets * cfg.line_size
        pbase = _prime_base(cfg, layout)
        if K * S > way_span:
            raise AttackSpecError("eviction lines alias in L2; prime+probe needs K*S <= L2 way span")
        top = pbase + (cfg.l2_ways - 1) * way_span + K * S
        if top > cfg.mem_size:
            raise AttackSpecError("prime set does not fit in physical memory")
        measured = [pbase + i * S for i in range(K)]
        for w in range(cfg.l2_ways):
            for i in range(K):
                load_at(pbase + w * way_span + i * S, PC_PRIME_LI, PC_PRIME)
    phase1_end = len(prog)

    # phase 2: victim computes base + secret * S from a secret loaded from memory
    pc = PC_VICTIM
    for ins in (
        I(Opcode.LOADI, rd=20, imm=layout.secret_addr),
        I(Opcode.LOAD, rd=21, rs0=20, imm=0),
        I(Opcode.LOADI, rd=22, imm=layout.victim_base),
        I(Opcode.LOADI, rd=23, imm=S),
        I(Opcode.MUL, rd=24, rs0=21, rs1=23),
        I(Opcode.ADD, rd=25, rs0=22, rs1=24),
        I(Opcode.LOAD, rd=26, rs0=25, imm=0),
    ):
        prog.append(replace(ins, pc=pc))
        pc += 8
    victim_end = len(prog)

    # phase 3
    order = list(range(K))
    if spec.has(Challenge.C2_RANDOM_ORDER):
        rng.shuffle(order)
    slots: list[ProbeSlot] = []
    pending_noise = None
    for j in order:
        slots.append(ProbeSlot(j, measured[j]))
        if spec.has(Challenge.C4_NOISY_ACCESS):
            # off-pattern access for the previously probed index: its +-offset
            # neighbours are then already-probed lines, so the noise itself
            # never points DiffMin at an unprobed eviction line
            if pending_noise is not None:
                slots.append(ProbeSlot(None, measured[pending_noise] + spec.noise_offset))
            pending_noise = j
    if pending_noise is not None:
        slots.append(ProbeSlot(None, measured[pending_noise] + spec.noise_offset))

    conflict_sets = {cfg.l1_set(a) for a in measured} | {cfg.l1_set(a) for a in victim_lines}
    noise_lines = [
        layout.noise_base + i * cfg.line_size
        for i in range(layout.noise_span // cfg.line_size)
        if cfg.l1_set(layout.noise_base + i * cfg.line_size) not in conflict_sets
    ]
    if spec.has(Challenge.C3_NOISY_INSTR) and layout.noise_base + layout.noise_span > cfg.mem_size:
        raise AttackSpecError("noise region outside physical memory")
    for slot in slots:
        prog.append(I(Opcode.LOADI, rd=1, imm=slot.addr, pc=PC_PROBE_LI))
        prog.append(I(Opcode.TIME, rd=3, pc=PC_T0))
        prog.append(I(Opcode.LOAD, rd=2, rs0=1, imm=0, pc=PC_PROBE))
        prog.append(I(Opcode.TIME, rd=4, pc=PC_T1))
        if spec.has(Challenge.C3_NOISY_INSTR) and slot.index is not None:
            # the same static noise code runs in every gap, as in a loop body
            for n in range(spec.noise_instr_count):
                pc = PC_NOISE_BASE + 16 * n
                prog.append(I(Opcode.LOADI, rd=7, imm=rng.choice(noise_lines), pc=pc))
                prog.append(I(Opcode.LOAD, rd=8, rs0=7, imm=0, pc=pc + 8))

    memory = {layout.secret_addr: secret}
    return AttackProgram(
        program=Program(prog, memory),
        spec=spec,
        secret=secret,
        probe_pc=PC_PROBE,
        slots=slots,
        eviction_lines=[cfg.block(a) for a in measured],
        victim_lines=victim_lines,
        phase1_end=phase1_end,
        victim_end=victim_end,
    )


def infer_secret(latencies, kind: AttackKind, secret: int | None = None, band: int = TIE_BAND) -> InferenceResult:
    """Attacker's rule: the unique fastest (reload) or slowest (probe) index is the secret."""
    lat = list(latencies)
    if not lat:
        raise ValueError("no latencies")
    if kind is AttackKind.PRIME_PROBE:
        best = max(lat)
        tied = [i for i, v in enumerate(lat) if v >= best - band]
    else:
        best = min(lat)
        tied = [i for i, v in enumerate(lat) if v <= best + band]
    if len(tied) > 1:
        return InferenceResult(Verdict.DEFEATED, None, len(tied))
    guess = tied[0]
    if secret is not None and guess != secret:
        return InferenceResult(Verdict.WRONG, guess, 1)
    return InferenceResult(Verdict.SUCCESS, guess, 1)


@dataclass
class TrialResult:
    secret: int
    latencies: list[int]
    probe_levels: list[HitLevel]
    inference: InferenceResult
    machine: Machine = field(repr=False)
    cycles: int = 0
    instructions: int = 0


def run_trial(ap: AttackProgram, cfg: CacheConfig | None = None, defense: DefenseConfig | None = None,
              bucket_cycles: int = 1000, record_log: bool = False) -> TrialResult:
    """Execute one attack round on a fresh machine and apply the attacker's inference."""
    cfg = cfg or CacheConfig()
    m = Machine(ap.program, cfg, defense, bucket_cycles, record_log)
    core, port = m.core, m.pipeline
    while core.pc_index < ap.phase1_end and not core.halted:
        core.step(port)
    _check_initialised(ap, m)
    K = ap.spec.k_lines
    lat = [0] * K
    levels: list[HitLevel] = [HitLevel.MEM] * K
    slot_i = -1
    t0 = 0
    while not core.halted:
        r = core.step(port)
        pc = r.instr.pc
        if pc == PC_T0:
            slot_i += 1
            t0 = r.value
        elif pc == PC_PROBE:
            probe_level = r.hit_level
        elif pc == PC_T1:
            idx = ap.slots[slot_i].index
            if idx is not None:
                # subtract the first TIME's own cycle
                lat[idx] = r.value - t0 - 1
                levels[idx] = probe_level
    m.pipeline.finish(core.cycle)
    inf = infer_secret(lat, ap.spec.kind, ap.secret)
    return TrialResult(ap.secret, lat, levels, inf, m, core.cycle, core.retired)


def _check_initialised(ap: AttackProgram, m: Machine) -> None:
    """After phase 1 every measured line must be out of L1 (and out of L2 for flush)."""
    hier = m.hier
    now = m.core.cycle
    for blk in ap.eviction_lines:
        bad = hier.l1.contains(blk)
        if ap.spec.kind is AttackKind.FLUSH_RELOAD:
            bad = bad or hier.l2.contains(blk)
        if bad:
            raise AssertionError(f"eviction line {blk:#x} still cached after phase 1 at cycle {now}")


def trial_secrets(spec: AttackSpec, trials: int, cfg: CacheConfig, layout: Layout = Layout()) -> list[int]:
    if spec.secret is not None:
        return [spec.secret] * trials
    pool = in_page_secrets(spec, cfg, layout) if spec.secret_pool == "in_page" else list(range(spec.k_lines))
    if not pool:
        raise AttackSpecError("no secrets satisfy the requested pool")
    rng = random.Random(f"secrets:{spec.seed}")
    return [rng.choice(pool) for _ in range(trials)]


def run_scenario(spec: AttackSpec, defense: DefenseConfig | None = None, trials: int = 20,
                 cfg: CacheConfig | None = None, bucket_cycles: int = 1000, layout: Layout = Layout(),
                 record_log: bool = False, name: str = ""):
    """Run ``trials`` fresh rounds (secret and probe order redrawn per trial) and aggregate."""
    from .report import ScenarioReport

    if trials < 1:
        raise ValueError("trials must be >= 1")
    cfg = cfg or CacheConfig()
    defense = defense if defense is not None else DefenseConfig()
    secrets = trial_secrets(spec, trials, cfg, layout)
    results: list[TrialResult] = []
    for t, secret in enumerate(secrets):
        tspec = replace(spec, seed=spec.seed * 1_000_003 + t)
        ap = gen_attack(tspec, cfg, layout, secret=secret)
        results.append(run_trial(ap, cfg, defense, bucket_cycles, record_log))

    K = spec.k_lines
    mean_lat = [sum(r.latencies[i] for r in results) / trials for i in range(K)]
    rates = {v.value: sum(r.inference.verdict is v for r in results) / trials for v in Verdict}
    n_buckets = max(len(r.machine.pipeline.protected_timeline) for r in results)
    counts = {s: [0] * n_buckets for s in ("ST", "AT", "RP_GUIDED", "TAGGED", "STRIDE")}
    timeline = [0.0] * n_buckets
    for r in results:
        for s, per in r.machine.pipeline.prefetch_buckets(n_buckets).items():
            for b, c in enumerate(per):
                counts[s][b] += c
        for b, v in enumerate(r.machine.pipeline.protected_timeline):
            timeline[b] += v / trials
    cycles = sum(r.cycles for r in results)
    instrs = sum(r.instructions for r in results)
    rep = ScenarioReport(
        name=name or spec.kind.value.lower(),
        per_index_latency=mean_lat,
        verdict_rates=rates,
        prefetch_counts=counts,
        protected_buffer_timeline=timeline,
        demand_miss_count=sum(r.machine.hier.demand_misses for r in results),
        total_miss_latency=sum(r.machine.hier.miss_latency for r in results),
        ipc_proxy=instrs / cycles if cycles else 0.0,
        trials=trials,
        bucket_cycles=bucket_cycles,
        params={
            "kind": spec.kind.value,
            "defense": defense.name,
            "base_prefetcher": defense.base,
            "challenges": "+".join(sorted(c.value for c in spec.challenges)) or "none",
        },
    )
    rep.extras["trials"] = results
    return rep
