import pytest

from prefender.attacks import (
    PC_PROBE, AttackKind, AttackSpec, AttackSpecError, Challenge, Verdict, gen_attack, in_page_secrets,
    infer_secret, run_scenario, run_trial,
)
from prefender.isa import Opcode
from prefender.memory import CacheConfig
from prefender.pipeline import DefenseConfig
from prefender.scale_tracker import ScaleTracker


def test_infer_unique_minimum():
    lat = [100] * 8
    lat[5] = 2
    r = infer_secret(lat, AttackKind.FLUSH_RELOAD, 5)
    assert (r.verdict, r.inferred) == (Verdict.SUCCESS, 5)


def test_infer_tie_within_band_is_defeated():
    lat = [100] * 8
    lat[5], lat[6] = 2, 3
    assert infer_secret(lat, AttackKind.FLUSH_RELOAD, 5).verdict is Verdict.DEFEATED
    lat[6] = 4
    assert infer_secret(lat, AttackKind.FLUSH_RELOAD, 5).verdict is Verdict.SUCCESS


def test_infer_wrong_and_prime_probe_max():
    lat = [20] * 8
    lat[1] = 100
    assert infer_secret(lat, AttackKind.PRIME_PROBE, 1).verdict is Verdict.SUCCESS
    assert infer_secret(lat, AttackKind.PRIME_PROBE, 2).verdict is Verdict.WRONG
    with pytest.raises(ValueError):
        infer_secret([], AttackKind.PRIME_PROBE)


def test_gen_attack_deterministic():
    spec = AttackSpec(challenges=frozenset(Challenge), seed=9)
    a, b = gen_attack(spec), gen_attack(spec)
    assert a.program.instructions == b.program.instructions
    assert a.probe_order == b.probe_order


def test_random_order_is_permutation():
    ap = gen_attack(AttackSpec(challenges=frozenset({Challenge.C2_RANDOM_ORDER}), seed=4))
    assert sorted(ap.probe_order) == list(range(128))
    assert ap.probe_order != list(range(128))


def test_probes_share_one_pc():
    ap = gen_attack(AttackSpec(challenges=frozenset({Challenge.C4_NOISY_ACCESS}), seed=1))
    probes = [i for i in ap.program.instructions if i.pc == PC_PROBE]
    assert all(i.opcode is Opcode.LOAD for i in probes)
    assert len(probes) == len(ap.slots) == 256


@pytest.mark.parametrize("secret", [0, 12, 127])
def test_victim_address_scale_is_stride(secret):
    ap = gen_attack(AttackSpec(secret=secret))
    st = ScaleTracker(CacheConfig())
    for ins in ap.program.instructions[ap.phase1_end:ap.victim_end]:
        st.track(ins)
    load = [i for i in ap.program.instructions[ap.phase1_end:ap.victim_end] if i.opcode is Opcode.LOAD][-1]
    assert st.tracks[load.rs0].sc == 0x200


@pytest.mark.parametrize("kind", list(AttackKind))
def test_baseline_succeeds(kind):
    r = run_trial(gen_attack(AttackSpec(kind=kind, secret=33)), defense=DefenseConfig.preset("none"))
    assert r.inference.verdict is Verdict.SUCCESS


def test_invalid_specs():
    for bad in [AttackSpec(k_lines=1), AttackSpec(stride_bytes=48), AttackSpec(secret=128),
                AttackSpec(noise_instr_count=-1), AttackSpec(secret_pool="odd")]:
        with pytest.raises(AttackSpecError):
            gen_attack(bad)


def test_in_page_pool():
    pool = in_page_secrets(AttackSpec(), CacheConfig())
    assert pool and all(i % 8 not in (0, 7) for i in pool)


def test_scenario_deterministic_and_rates_sum():
    spec = AttackSpec(seed=5)
    a = run_scenario(spec, DefenseConfig.preset("st"), trials=3)
    b = run_scenario(spec, DefenseConfig.preset("st"), trials=3)
    assert a == b
    assert sum(a.verdict_rates.values()) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        run_scenario(spec, trials=0)
