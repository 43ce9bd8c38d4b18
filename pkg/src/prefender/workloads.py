"""Benign synthetic workloads used for the non-degradation checks.

Each generator emits an unrolled loop: the loop body's pcs repeat every
iteration, as a real loop would, so per-pc structures (stride table, access
buffers) see one static load. ``length`` counts executions of the workload's
main load.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from enum import Enum

from .isa import MicroInstruction as I
from .isa import Opcode, Program
from .memory import CacheConfig
from .pipeline import DefenseConfig, Machine

WORKLOAD_BASE = 0x400000
INDEX_BASE = 0x200000
BODY_PC = 0x9000


class WorkloadKind(str, Enum):
    SEQUENTIAL = "SEQUENTIAL"
    STRIDED = "STRIDED"
    RANDOM = "RANDOM"
    DEP_CHAIN = "DEP_CHAIN"
    NESTED_2D = "NESTED_2D"


@dataclass(frozen=True)
class WorkloadSpec:
    kind: WorkloadKind = WorkloadKind.SEQUENTIAL
    length: int = 1000
    stride_bytes: int = 0x100
    seed: int = 0
    # RANDOM / DEP_CHAIN draw lines from this many bytes above the base
    region_bytes: int = 0x800000
    # NESTED_2D: address = base + a*i + b*j, j in 0..inner-1
    a: int = 128
    b: int = 32
    inner: int = 4


def _footprint(spec: WorkloadSpec, cfg: CacheConfig) -> int:
    k = spec.kind
    if k is WorkloadKind.SEQUENTIAL:
        return spec.length * cfg.line_size
    if k is WorkloadKind.STRIDED:
        return spec.length * spec.stride_bytes
    if k is WorkloadKind.NESTED_2D:
        outer = -(-spec.length // spec.inner)
        return outer * spec.a + spec.inner * spec.b
    return spec.region_bytes


def _body(pc0: int, instrs: list[I]) -> list[I]:
    return [ins.__class__(ins.opcode, ins.rd, ins.rs0, ins.rs1, ins.imm, pc0 + 8 * n) for n, ins in enumerate(instrs)]


def gen_workload(spec: WorkloadSpec, cfg: CacheConfig | None = None) -> Program:
    cfg = cfg or CacheConfig()
    if spec.length < 0:
        raise ValueError("workload length must be >= 0")
    if spec.stride_bytes <= 0:
        raise ValueError("stride_bytes must be positive")
    if WORKLOAD_BASE + _footprint(spec, cfg) > cfg.mem_size:
        raise ValueError(f"{spec.kind.value} workload of length {spec.length} does not fit in memory")
    n = spec.length
    prog: list[I] = []
    memory: dict[int, int] = {}
    if n == 0:
        return Program(prog, memory)
    rng = random.Random(spec.seed)
    kind = spec.kind

    if kind in (WorkloadKind.SEQUENTIAL, WorkloadKind.STRIDED):
        step = cfg.line_size if kind is WorkloadKind.SEQUENTIAL else spec.stride_bytes
        prog.append(I(Opcode.LOADI, rd=1, imm=WORKLOAD_BASE, pc=BODY_PC - 8))
        body = [I(Opcode.LOAD, rd=2, rs0=1), I(Opcode.ADD, rd=3, rs0=3, rs1=2), I(Opcode.ADDI, rd=1, rs0=1, imm=step)]
        body = _body(BODY_PC, body)
        for _ in range(n):
            prog.extend(body)

    elif kind is WorkloadKind.RANDOM:
        lines = spec.region_bytes // cfg.line_size
        pcs = _body(BODY_PC, [I(Opcode.LOADI, rd=1), I(Opcode.LOAD, rd=2, rs0=1), I(Opcode.ADD, rd=3, rs0=3, rs1=2)])
        for _ in range(n):
            addr = WORKLOAD_BASE + rng.randrange(lines) * cfg.line_size
            prog.append(I(Opcode.LOADI, rd=1, imm=addr, pc=pcs[0].pc))
            prog.extend(pcs[1:])

    elif kind is WorkloadKind.DEP_CHAIN:
        lines = spec.region_bytes // cfg.line_size
        chain = [WORKLOAD_BASE + x * cfg.line_size for x in rng.sample(range(lines), min(n + 1, lines))]
        for k in range(n):
            memory[chain[k % len(chain)]] = chain[(k + 1) % len(chain)]
        prog.append(I(Opcode.LOADI, rd=1, imm=chain[0], pc=BODY_PC - 8))
        body = _body(BODY_PC, [I(Opcode.LOAD, rd=1, rs0=1), I(Opcode.ADD, rd=3, rs0=3, rs1=1)])
        for _ in range(n):
            prog.extend(body)

    elif kind is WorkloadKind.NESTED_2D:
        # i and j come from index tables in memory, so their values are unknown
        # to the scale tracker and only the multipliers shape the scale
        outer = -(-n // spec.inner)
        i_tab = INDEX_BASE
        j_tab = INDEX_BASE + 8 * outer
        for i in range(outer):
            memory[i_tab + 8 * i] = i
        for j in range(spec.inner):
            memory[j_tab + 8 * j] = j
        outer_body = _body(BODY_PC, [
            I(Opcode.LOADI, rd=10),
            I(Opcode.LOAD, rd=11, rs0=10),
            I(Opcode.MULI, rd=12, rs0=11, imm=spec.a),
            I(Opcode.LOADI, rd=17, imm=WORKLOAD_BASE),
        ])
        inner_body = _body(BODY_PC + 0x100, [
            I(Opcode.LOADI, rd=13),
            I(Opcode.LOAD, rd=14, rs0=13),
            I(Opcode.MULI, rd=15, rs0=14, imm=spec.b),
            I(Opcode.ADD, rd=16, rs0=12, rs1=15),
            I(Opcode.ADD, rd=18, rs0=16, rs1=17),
            I(Opcode.LOAD, rd=19, rs0=18),
        ])
        li_i, li_j = outer_body[0], inner_body[0]
        done = 0
        for i in range(outer):
            prog.append(I(Opcode.LOADI, rd=10, imm=i_tab + 8 * i, pc=li_i.pc))
            prog.extend(outer_body[1:])
            for j in range(min(spec.inner, n - done)):
                prog.append(I(Opcode.LOADI, rd=13, imm=j_tab + 8 * j, pc=li_j.pc))
                prog.extend(inner_body[1:])
                done += 1
    else:  # pragma: no cover
        raise ValueError(f"unknown workload kind {kind}")
    return Program(prog, memory)


def run_workload(spec: WorkloadSpec, defense: DefenseConfig | None = None, cfg: CacheConfig | None = None,
                 bucket_cycles: int = 1000, name: str = ""):
    """Run one workload on a fresh machine and summarise it as a ScenarioReport."""
    from .report import ScenarioReport

    cfg = cfg or CacheConfig()
    defense = defense if defense is not None else DefenseConfig.preset("none")
    m = Machine(gen_workload(spec, cfg), cfg, defense, bucket_cycles)
    m.run_quiet()
    p = m.pipeline
    counts = p.prefetch_buckets(len(p.protected_timeline))
    return ScenarioReport(
        name=name or spec.kind.value.lower(),
        prefetch_counts=counts,
        protected_buffer_timeline=[float(x) for x in p.protected_timeline],
        demand_miss_count=m.hier.demand_misses,
        total_miss_latency=m.hier.miss_latency,
        ipc_proxy=m.core.retired / m.core.cycle if m.core.cycle else 0.0,
        trials=1,
        bucket_cycles=bucket_cycles,
        params={
            "workload": spec.kind.value,
            "defense": defense.name,
            "base_prefetcher": defense.base,
            "length": str(spec.length),
        },
    )
