from collections import Counter

import pytest

from prefender.attacks import AttackSpec, gen_attack, run_trial
from prefender.isa import MicroInstruction as I
from prefender.isa import Opcode, Program, parse_program
from prefender.memory import PrefetchSource
from prefender.pipeline import DefenseConfig, Machine, Pipeline

S = 0x200
BASE = 0x400000


def victim(secret=12):
    return [
        I(Opcode.LOADI, rd=20, imm=0x100040, pc=0x2000),
        I(Opcode.LOAD, rd=21, rs0=20, pc=0x2008),
        I(Opcode.LOADI, rd=22, imm=BASE, pc=0x2010),
        I(Opcode.LOADI, rd=23, imm=S, pc=0x2018),
        I(Opcode.MUL, rd=24, rs0=21, rs1=23, pc=0x2020),
        I(Opcode.ADD, rd=25, rs0=22, rs1=24, pc=0x2028),
        I(Opcode.LOAD, rd=26, rs0=25, pc=0x2030),
    ]


def run(prog, preset, mem=None, **kw):
    m = Machine(Program(prog, mem or {0x100040: 12}), defense=DefenseConfig.preset(preset, **kw), record_log=True)
    m.run()
    return m


def test_presets_and_validation():
    assert DefenseConfig.preset("at+rp").name == "at+rp"
    with pytest.raises(ValueError):
        DefenseConfig.preset("bogus")
    with pytest.raises(ValueError):
        DefenseConfig(base="markov")
    with pytest.raises(ValueError):
        DefenseConfig(st_max_per_load=3)


def test_victim_load_issues_two_st_and_records_scale():
    m = run(victim(), "full")
    st = [r for r in m.pipeline.log if r.source is PrefetchSource.ST]
    assert [r.blk for r in st] == [BASE + 11 * S, BASE + 13 * S]
    assert [(e.sc, e.anchor) for _, e in m.pipeline.rp.valid_entries()] == [(S, BASE + 12 * S)]


def test_st_max_per_load_one():
    m = Machine(Program(victim(), {0x100040: 12}), defense=DefenseConfig(st_max_per_load=1), record_log=True)
    m.run()
    assert sum(r.source is PrefetchSource.ST for r in m.pipeline.log) == 1


def test_rp_records_without_st_issuing():
    m = run(victim(), "at+rp")
    assert not any(r.source is PrefetchSource.ST for r in m.pipeline.log)
    assert len(m.pipeline.rp.valid_entries()) == 1


def _probe(idx, pc=0x3010):
    return [I(Opcode.LOADI, rd=1, imm=BASE + idx * S, pc=0x3000), I(Opcode.LOAD, rd=2, rs0=1, pc=pc)]


def test_attacker_hit_gives_one_guided_prefetch_and_protects():
    prog = victim() + _probe(40)
    m = run(prog, "full")
    last = m.pipeline.last_issued
    assert [s for s, _, _ in last] == [PrefetchSource.RP_GUIDED]
    bid = m.pipeline.at.lookup(0x3010)
    buf = m.pipeline.at.buffers[bid]
    assert buf.protected and buf.prot_sc == S and buf.prot_anchor == BASE + 12 * S


def test_at_or_rp_at_most_one_per_load():
    spec = AttackSpec(seed=3)
    from prefender.attacks import Challenge

    spec = AttackSpec(challenges=frozenset(Challenge), seed=3)
    r = run_trial(gen_attack(spec), defense=DefenseConfig(), record_log=True)
    per_load = Counter()
    st_per_load = Counter()
    for rec in r.machine.pipeline.log:
        if rec.source in (PrefetchSource.AT, PrefetchSource.RP_GUIDED):
            per_load[(rec.cycle, rec.pc)] += 1
        if rec.source is PrefetchSource.ST:
            st_per_load[(rec.cycle, rec.pc)] += 1
    assert max(per_load.values()) == 1
    assert max(st_per_load.values()) <= 2


def test_flush_leaves_trackers_alone():
    p = Pipeline(defense=DefenseConfig())
    before = [t for t in p.st.tracks]
    p.flush(I(Opcode.FLUSH, rs0=1), 0x1000, 0)
    assert p.st.tracks == before
    assert p.at.associated_pcs() == set()


def test_disabling_mechanism_removes_its_source():
    spec = AttackSpec(seed=1)
    for preset, absent in [("at+rp", {PrefetchSource.ST}), ("st", {PrefetchSource.AT, PrefetchSource.RP_GUIDED}),
                           ("st+at", {PrefetchSource.RP_GUIDED}), ("none", set(PrefetchSource))]:
        r = run_trial(gen_attack(spec), defense=DefenseConfig.preset(preset), record_log=True)
        assert not {rec.source for rec in r.machine.pipeline.log} & absent


def test_bucket_sums_equal_port_counters():
    from prefender.attacks import Challenge

    r = run_trial(gen_attack(AttackSpec(challenges=frozenset(Challenge), seed=2)),
                  defense=DefenseConfig.preset("full", base="stride"))
    buckets = r.machine.pipeline.prefetch_buckets()
    for s in PrefetchSource:
        assert sum(buckets[s.value]) == r.machine.hier.prefetch_issued[s]


def test_protected_timeline_one_sample_per_bucket():
    r = run_trial(gen_attack(AttackSpec(seed=2)), defense=DefenseConfig(), bucket_cycles=500)
    p = r.machine.pipeline
    assert len(p.protected_timeline) == r.cycles // 500 + 1
    assert max(p.protected_timeline) >= 1


def test_idle_unprotect_via_tick():
    d = DefenseConfig()
    d.rp.unprotect_idle_cycles = 300
    prog = victim() + _probe(40) + parse_program("\n".join(f"loadi r{1 + i % 5}, {i}" for i in range(2000)))
    m = Machine(Program(prog, {0x100040: 12}), defense=d, bucket_cycles=100)
    m.run()
    assert m.pipeline.protected_timeline[3] == 1
    assert m.pipeline.protected_timeline[-1] == 0


def test_tracker_sees_only_demand_loads():
    m = run(victim() + _probe(40) + _probe(41), "full")
    bid = m.pipeline.at.lookup(0x3010)
    assert m.pipeline.at.buffers[bid].entries == [BASE + 40 * S, BASE + 41 * S]
