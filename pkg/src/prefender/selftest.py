"""Fast invariant checks run by ``prefender selftest``."""

from __future__ import annotations

import random
from dataclasses import replace

from .access_tracker import AccessTracker, brute_force_diff_min, min_pairwise_diff
from .attacks import AttackKind, AttackSpec, Verdict, gen_attack, run_scenario, run_trial
from .isa import CoreState, parse_program
from .memory import CacheConfig
from .pipeline import DefenseConfig
from .record_protector import RecordProtector, same_pattern
from .report import emit_report
from .scale_tracker import ScaleTracker


def _diff_min_oracle(rng):
    for _ in range(2000):
        blocks = rng.sample(range(0, 1 << 20, 64), rng.randint(2, 8))
        if min_pairwise_diff(blocks) != brute_force_diff_min(blocks):
            return False, f"mismatch on {blocks}"
    return True, "2000 random buffers"


def _fig5_example(rng):
    at = AccessTracker()
    bid = at.activate(0x8008, 0)
    for b in (0x1000, 0x1F00, 0x1600, 0x1C00):
        at.record(bid, b)
    d = at.update_diff_min(bid)
    c = at.candidate(bid, 0x1C00, lambda b: False)
    return (d, c) == (0x300, 0x1900), f"diff_min={d:#x} candidate={c:#x}" if c else f"diff_min={d}"


def _rp_examples(rng):
    rp = RecordProtector()
    rp.record_scale(0x100, 0x2000)
    rp.record_scale(0x400, 0x1000)
    ok = [(e.sc, e.anchor) for _, e in rp.valid_entries()] == [(0x400, 0x1000)]
    ok &= rp.match_scale(0x2400) == (0x400, 0x1000)
    ok &= rp.match_scale(0x2500) is None
    rp.record_scale(0x100, 0x2000)
    ok &= len(rp.valid_entries()) == 1
    for _ in range(2000):
        entries = rp.valid_entries()
        rp.record_scale(rng.choice((0x80, 0x100, 0x200, 0x400)), rng.randrange(0, 0x10000, 0x40))
        entries = rp.valid_entries()
        for i, a in entries:
            for j, b in entries:
                if i < j and same_pattern(a.anchor, a.sc, b.anchor, b.sc):
                    return False, "two entries subsume each other"
    return ok, "replace/absorb/match examples and non-subsumption"


def _victim_scale(rng):
    cfg = CacheConfig()
    spec = AttackSpec(secret=rng.randrange(128))
    ap = gen_attack(spec, cfg)
    st = ScaleTracker(cfg)
    for ins in ap.program.instructions[ap.phase1_end:ap.victim_end]:
        if ins.opcode.value != "FLUSH":
            st.track(ins)
    sc = st.tracks[25].sc
    return sc == spec.stride_bytes, f"sc={sc:#x}"


def _timing_idiom(rng):
    prog = parse_program("loadi r1, 0x1000\ntime r2\nload r3, 0(r1)\ntime r4\n")
    from .pipeline import Pipeline

    port = Pipeline(defense=DefenseConfig.preset("none"))
    core = CoreState(prog)
    res = core.run(port)
    lat = res[2].latency
    return core.regs[4] - core.regs[2] == lat + 1, f"bracket={core.regs[4] - core.regs[2]} load={lat}"


def _baseline_attacks(rng):
    for kind in AttackKind:
        r = run_trial(gen_attack(AttackSpec(kind=kind, secret=rng.randrange(128))), defense=DefenseConfig.preset("none"))
        if r.inference.verdict is not Verdict.SUCCESS:
            return False, f"{kind.value} baseline {r.inference.verdict.value}"
    return True, "all three kinds recover the secret"


def _determinism(rng):
    spec = AttackSpec(seed=7)
    a = emit_report(run_scenario(spec, DefenseConfig.preset("full"), trials=2))
    b = emit_report(run_scenario(replace(spec), DefenseConfig.preset("full"), trials=2))
    return a == b, f"{len(a)} bytes"


CHECKS = [
    ("diff_min matches brute force", _diff_min_oracle),
    ("access-tracker worked example", _fig5_example),
    ("scale-buffer recording and matching", _rp_examples),
    ("victim address register scale equals S", _victim_scale),
    ("TIME bracket equals load latency + 1", _timing_idiom),
    ("undefended attacks succeed", _baseline_attacks),
    ("reports are byte-stable on replay", _determinism),
]


def run_selftest(seed: int = 0, out=print) -> bool:
    rng = random.Random(seed)
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # report, don't abort the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        out(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
    return all_ok
