"""Acceptance criteria, one printed PASS/FAIL line each.

Criteria with stochastic outcomes run 20 trials per attack kind with the
default seed. Oracle criteria reuse the unit-test oracles.
"""

import time

import pytest

import test_access_tracker as at_tests
import test_record_protector as rp_tests
import test_scale_tracker as st_tests
from prefender.attacks import PC_PROBE, AttackKind, AttackSpec, Challenge, Verdict, run_scenario
from prefender.memory import HitLevel, PrefetchSource
from prefender.pipeline import DefenseConfig
from prefender.report import emit_report
from prefender.workloads import WorkloadKind, WorkloadSpec, run_workload

TRIALS = 20
S = 0x200
RELOAD = (AttackKind.FLUSH_RELOAD, AttackKind.EVICT_RELOAD)
KINDS = tuple(AttackKind)
C = Challenge


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def scen(kind, preset, challenges=(), record_log=False, **kw):
    spec = AttackSpec(kind=kind, challenges=frozenset(challenges), **kw)
    return run_scenario(spec, DefenseConfig.preset(preset), TRIALS, record_log=record_log)


def rate(rep, v):
    return rep.verdict_rates[v.value]


def pooled(reps, v):
    return sum(rate(r, v) for r in reps) / len(reps)


def test_c01_baseline_attack_success(report):
    parts, ok = [], True
    for kind in KINDS:
        t = time.perf_counter()
        rep = scen(kind, "none")
        dt = time.perf_counter() - t
        ok &= rate(rep, Verdict.SUCCESS) == 1.0 and dt < 5.0
        parts.append(f"{kind.value}={rate(rep, Verdict.SUCCESS):.2f} ({dt:.2f}s)")
    report(1, ok, "baseline SUCCESS " + " ".join(parts))


def test_c02_scale_tracker_defeats_single_access(report):
    parts, ok = [], True
    for kind in RELOAD:
        rep = scen(kind, "st", secret_pool="in_page")
        good = 0
        for tr in rep.extras["trials"]:
            best = min(tr.latencies)
            tied = {i for i, v in enumerate(tr.latencies) if v <= best + 1}
            s = tr.secret
            if tr.inference.verdict is Verdict.DEFEATED and len(tied) >= 3 and {s - 1, s, s + 1} <= tied:
                good += 1
        frac = good / TRIALS
        ok &= frac >= 0.95
        parts.append(f"{kind.value} centred-tie={frac:.2f}")
    report(2, ok, "ST-only " + " ".join(parts) + " (need >=0.95)")


def test_c03_access_tracker_random_order(report):
    reps = [scen(k, "at", [C.C2_RANDOM_ORDER]) for k in KINDS]
    d = pooled(reps, Verdict.DEFEATED)
    pp = reps[KINDS.index(AttackKind.PRIME_PROBE)]
    hits = [lv is HitLevel.L1 for tr in pp.extras["trials"] for lv in tr.probe_levels]
    l1 = sum(hits) / len(hits)
    per = " ".join(f"{k.value}={rate(r, Verdict.DEFEATED):.2f}" for k, r in zip(KINDS, reps))
    report(3, d >= 0.90 and l1 >= 0.90,
           f"AT-only C2 DEFEATED pooled={d:.2f} ({per}); PRIME_PROBE L1-hit={l1:.2f} (need >=0.90 both)")


def test_c04_noisy_instruction_differential(report):
    at = [scen(k, "at", [C.C3_NOISY_INSTR]) for k in KINDS]
    rp = [scen(k, "at+rp", [C.C3_NOISY_INSTR]) for k in KINDS]
    s_at = pooled(at, Verdict.SUCCESS)
    d_rp = pooled(rp, Verdict.DEFEATED)
    per = " ".join(f"{k.value}={rate(a, Verdict.SUCCESS):.2f}/{rate(r, Verdict.DEFEATED):.2f}"
                   for k, a, r in zip(KINDS, at, rp))
    report(4, s_at >= 0.70 and d_rp >= 0.90,
           f"C3 AT-only SUCCESS={s_at:.2f} (need >=0.70), AT+RP DEFEATED={d_rp:.2f} (need >=0.90); "
           f"per kind success/defeated: {per}")


def _probe_blocks(rep, sources):
    return [rec.blk for tr in rep.extras["trials"] for rec in tr.machine.pipeline.log
            if rec.pc == PC_PROBE and rec.source in sources]


def test_c05_noisy_access_differential(report):
    guided = {PrefetchSource.AT, PrefetchSource.RP_GUIDED}
    at = [scen(k, "at", [C.C4_NOISY_ACCESS], record_log=True) for k in KINDS]
    rp = [scen(k, "at+rp", [C.C4_NOISY_ACCESS], record_log=True) for k in KINDS]
    # victim lines sit at victim_base + i*S, so the anchor is 0 mod S
    off_at = sum(b % S != 0 for r in at for b in _probe_blocks(r, guided))
    rp_blocks = [b for r in rp for b in _probe_blocks(r, guided)]
    off_rp = sum(b % S != 0 for b in rp_blocks)
    s_at = pooled(at, Verdict.SUCCESS)
    d_rp = pooled(rp, Verdict.DEFEATED)
    per = " ".join(f"{k.value}={rate(a, Verdict.SUCCESS):.2f}/{rate(r, Verdict.DEFEATED):.2f}"
                   for k, a, r in zip(KINDS, at, rp))
    ok = off_at > 0 and s_at >= 0.70 and off_rp == 0 and rp_blocks and d_rp >= 0.90
    report(5, ok,
           f"C4 AT-only off-pattern={off_at} SUCCESS={s_at:.2f}; AT+RP off-pattern={off_rp}/{len(rp_blocks)} "
           f"DEFEATED={d_rp:.2f}; per kind success/defeated: {per}")


def test_c06_full_gauntlet(report):
    parts, ok = [], True
    for kind in KINDS:
        rep = scen(kind, "full", list(C))
        d, s = rate(rep, Verdict.DEFEATED), rate(rep, Verdict.SUCCESS)
        ok &= d >= 0.90 and s <= 0.05
        parts.append(f"{kind.value}={d:.2f}/{s:.2f}")
    report(6, ok, "full gauntlet DEFEATED/SUCCESS " + " ".join(parts))


def test_c07_rule_table_and_stride_oracle(report):
    covered = {row[0].opcode for row in st_tests.ROWS}
    try:
        for row in st_tests.ROWS:
            st_tests.test_rule_table(*row)
        st_tests.test_every_writing_opcode_covered()
        st_tests.test_stride_soundness_oracle_100_programs()
        ok, why = True, ""
    except AssertionError as exc:
        ok, why = False, f" ({exc})"
    report(7, ok, f"{len(st_tests.ROWS)} rule rows over {len(covered)} opcodes; 100-program stride oracle{why}")


def test_c08_diff_min_oracle(report):
    try:
        at_tests.test_diff_min_random_oracle_10k()
        at_tests.test_diff_min_worked_example()
        ok, why = True, ""
    except AssertionError as exc:
        ok, why = False, f" ({exc})"
    report(8, ok, f"10^4 random buffers match brute force; worked example 0x300 -> 0x1900{why}")


def test_c09_scale_buffer_oracles(report):
    try:
        rp_tests.test_record_and_match_agree_with_set_inclusion_10k()
        rp_tests.test_match_examples()
        rp_tests.test_replace_example()
        rp_tests.test_absorb_example()
        ok, why = True, ""
    except AssertionError as exc:
        ok, why = False, f" ({exc})"
    report(9, ok, f"10^4 record/match ops agree with set inclusion; worked examples{why}")


def test_c10_prefetch_source_ordering(report):
    parts, ok = [], True
    for kind in KINDS:
        rep = scen(kind, "full", list(C))
        for tr in rep.extras["trials"]:
            n = tr.machine.hier.prefetch_issued
            ok &= n[PrefetchSource.AT] > n[PrefetchSource.RP_GUIDED] > n[PrefetchSource.ST]
        t = rep.prefetch_totals()
        parts.append(f"{kind.value} AT={t['AT']} RP={t['RP_GUIDED']} ST={t['ST']}")
    report(10, ok, "per-run AT > RP_GUIDED > ST; totals " + "; ".join(parts))


def test_c11_benign_non_degradation(report):
    t0 = time.perf_counter()
    n = 100_000
    parts, ok = [], True

    def run(kind, preset, base="none"):
        return run_workload(WorkloadSpec(kind=kind, length=n), DefenseConfig.preset(preset, base=base))

    for kind in (WorkloadKind.STRIDED, WorkloadKind.SEQUENTIAL):
        full, base = run(kind, "full", "stride"), run(kind, "none", "stride")
        ok &= full.demand_miss_count <= 1.05 * base.demand_miss_count
        parts.append(f"{kind.value} misses {full.demand_miss_count}<=1.05*{base.demand_miss_count}")
    full, none = run(WorkloadKind.NESTED_2D, "full"), run(WorkloadKind.NESTED_2D, "none")
    ok &= full.demand_miss_count < none.demand_miss_count
    parts.append(f"NESTED_2D misses {full.demand_miss_count}<{none.demand_miss_count}")
    for kind in (WorkloadKind.RANDOM, WorkloadKind.DEP_CHAIN):
        full, none = run(kind, "full"), run(kind, "none")
        ok &= full.total_miss_latency <= 1.10 * none.total_miss_latency
        parts.append(f"{kind.value} latency {full.total_miss_latency}<=1.10*{none.total_miss_latency}")
    dt = time.perf_counter() - t0
    ok &= dt < 30.0
    report(11, ok, "; ".join(parts) + f"; {dt:.1f}s")


def test_c12_determinism(report):
    ok = True
    spec = AttackSpec(kind=AttackKind.PRIME_PROBE, challenges=frozenset(C), seed=17)
    a = run_scenario(spec, DefenseConfig.preset("full", base="stride"), trials=3)
    b = run_scenario(spec, DefenseConfig.preset("full", base="stride"), trials=3)
    for fmt in ("JSON_LINES", "CSV"):
        ok &= emit_report(a, fmt) == emit_report(b, fmt)
    w = WorkloadSpec(kind=WorkloadKind.RANDOM, length=2000, seed=3)
    ok &= emit_report(run_workload(w, DefenseConfig())) == emit_report(run_workload(w, DefenseConfig()))
    report(12, ok, "attack and workload reports byte-identical on rerun")
