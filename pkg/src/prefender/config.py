"""Sectioned ``key = value`` scenario configuration.

Recognised sections: [cache] [st] [at] [rp] [prefetcher] [stride] [attack]
[workload] [report]. Unknown sections or keys are rejected so typos surface
early. ``PREFENDER_SEED`` in the environment overrides every seed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace

from .access_tracker import AtConfig
from .attacks import AttackKind, AttackSpec, Challenge
from .memory import CacheConfig
from .pipeline import DefenseConfig
from .record_protector import RpConfig
from .workloads import WorkloadKind, WorkloadSpec

SEED_ENV = "PREFENDER_SEED"

CHALLENGE_ALIASES = {
    "c1": None,  # inherent, accepted for readability
    "c2": Challenge.C2_RANDOM_ORDER,
    "c3": Challenge.C3_NOISY_INSTR,
    "c4": Challenge.C4_NOISY_ACCESS,
}
for _c in Challenge:
    CHALLENGE_ALIASES[_c.value.lower()] = _c


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    cache: CacheConfig = field(default_factory=CacheConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    attack: AttackSpec = field(default_factory=AttackSpec)
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    trials: int = 20
    bucket_cycles: int = 1000
    report_format: str = "JSON_LINES"


_KEYS = {
    "cache": {f.name for f in fields(CacheConfig)},
    "st": {"enabled", "bit_width", "max_per_load"},
    "at": {"enabled", "buffer_count", "entry_count", "valid_threshold"},
    "rp": {"enabled", "entry_count", "unprotect_prefetch_limit", "unprotect_idle_cycles"},
    "prefetcher": {"base"},
    "stride": {"table_size"},
    "attack": {"kind", "secret", "k_lines", "stride_bytes", "challenges", "noise_instr_count",
               "noise_offset", "seed", "trials", "secret_pool"},
    "workload": {"kind", "length", "stride_bytes", "seed"},
    "report": {"bucket_cycles", "format"},
}


def _int(sec: str, key: str, raw: str) -> int:
    try:
        return int(raw.strip().replace("_", ""), 0)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected an integer, got {raw!r}") from None


def _bool(sec: str, key: str, raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{sec}] {key}: expected a boolean, got {raw!r}")


def parse_challenges(raw: str) -> frozenset:
    out = set()
    for tok in raw.replace("+", ",").split(","):
        tok = tok.strip().lower()
        if not tok or tok == "none":
            continue
        if tok == "all":
            out.update(Challenge)
            continue
        if tok not in CHALLENGE_ALIASES:
            raise ConfigError(f"[attack] challenges: unknown challenge {tok!r}")
        if CHALLENGE_ALIASES[tok] is not None:
            out.add(CHALLENGE_ALIASES[tok])
    return frozenset(out)


def _enum(sec: str, key: str, enum_cls, raw: str):
    try:
        return enum_cls(raw.strip().upper())
    except ValueError:
        choices = ", ".join(e.value for e in enum_cls)
        raise ConfigError(f"[{sec}] {key}: {raw!r} is not one of {choices}") from None


def parse_config(text: str, env: dict | None = None) -> ScenarioConfig:
    """Parse configuration text; raises ConfigError on any malformed input."""
    env = os.environ if env is None else env
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), comment_prefixes=("#",),
                                   interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _KEYS[sec]:
                raise ConfigError(f"[{sec}] unknown key {key!r}")

    def get(sec):
        return cp[sec] if cp.has_section(sec) else {}

    try:
        cache = CacheConfig(**{k: _int("cache", k, v) for k, v in get("cache").items()})
        at = AtConfig(**{k: _int("at", k, v) for k, v in get("at").items() if k != "enabled"})
        rp = RpConfig(**{k: _int("rp", k, v) for k, v in get("rp").items() if k != "enabled"})
        st_sec, at_sec, rp_sec = get("st"), get("at"), get("rp")
        defense = DefenseConfig(
            st_enabled=_bool("st", "enabled", st_sec.get("enabled", "true")),
            at_enabled=_bool("at", "enabled", at_sec.get("enabled", "true")),
            rp_enabled=_bool("rp", "enabled", rp_sec.get("enabled", "true")),
            base=get("prefetcher").get("base", "none").strip().lower(),
            st_bit_width=_int("st", "bit_width", st_sec.get("bit_width", "64")),
            st_max_per_load=_int("st", "max_per_load", st_sec.get("max_per_load", "2")),
            stride_table_size=_int("stride", "table_size", get("stride").get("table_size", "64")),
            at=at,
            rp=rp,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    a = get("attack")
    attack = AttackSpec()
    trials = 20
    for key, raw in a.items():
        if key == "kind":
            attack = replace(attack, kind=_enum("attack", key, AttackKind, raw))
        elif key == "challenges":
            attack = replace(attack, challenges=parse_challenges(raw))
        elif key == "secret_pool":
            attack = replace(attack, secret_pool=raw.strip().lower())
        elif key == "secret":
            attack = replace(attack, secret=None if raw.strip().lower() in ("", "random") else _int("attack", key, raw))
        elif key == "trials":
            trials = _int("attack", key, raw)
        else:
            attack = replace(attack, **{key: _int("attack", key, raw)})

    w = get("workload")
    workload = WorkloadSpec()
    for key, raw in w.items():
        if key == "kind":
            workload = replace(workload, kind=_enum("workload", key, WorkloadKind, raw))
        else:
            workload = replace(workload, **{key: _int("workload", key, raw)})

    r = get("report")
    bucket = _int("report", "bucket_cycles", r.get("bucket_cycles", "1000"))
    fmt = r.get("format", "JSON_LINES").strip().upper().replace("-", "_")
    if fmt not in ("JSON_LINES", "JSONL", "CSV"):
        raise ConfigError(f"[report] format: unknown format {fmt!r}")
    if trials < 1 or bucket < 1:
        raise ConfigError("trials and bucket_cycles must be positive")

    seed_env = env.get(SEED_ENV)
    if seed_env:
        seed = _int("env", SEED_ENV, seed_env)
        attack = replace(attack, seed=seed)
        workload = replace(workload, seed=seed)

    return ScenarioConfig(cache, defense, attack, workload, trials, bucket, fmt)


def load_config(path: str, env: dict | None = None) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return parse_config(text, env)


def set_param(cfg: ScenarioConfig, dotted: str, raw: str) -> ScenarioConfig:
    """Return a copy of ``cfg`` with one ``section.key`` overridden (used by sweeps)."""
    sec, _, key = dotted.partition(".")
    if sec not in _KEYS or key not in _KEYS[sec]:
        raise ConfigError(f"unknown parameter {dotted!r}")
    d = cfg.defense
    try:
        if sec == "cache":
            return replace(cfg, cache=replace(cfg.cache, **{key: _int(sec, key, raw)}))
        if sec in ("at", "rp") and key != "enabled":
            sub = replace(getattr(d, sec), **{key: _int(sec, key, raw)})
            return replace(cfg, defense=replace(d, **{sec: sub}))
        if key == "enabled":
            return replace(cfg, defense=replace(d, **{f"{sec}_enabled": _bool(sec, key, raw)}))
        if sec == "st":
            return replace(cfg, defense=replace(d, **{f"st_{key}": _int(sec, key, raw)}))
        if sec == "prefetcher":
            return replace(cfg, defense=replace(d, base=raw.strip().lower()))
        if sec == "stride":
            return replace(cfg, defense=replace(d, stride_table_size=_int(sec, key, raw)))
        if sec == "report":
            return replace(cfg, bucket_cycles=_int(sec, key, raw)) if key == "bucket_cycles" else cfg
        text = f"[{sec}]\n{key} = {raw}\n"
        sub = parse_config(text, env={})
        if sec == "attack":
            if key == "trials":
                return replace(cfg, trials=sub.trials)
            return replace(cfg, attack=replace(cfg.attack, **{key: getattr(sub.attack, key)}))
        return replace(cfg, workload=replace(cfg.workload, **{key: getattr(sub.workload, key)}))
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
