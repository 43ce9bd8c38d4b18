"""Command-line front end: attack runs, benign benchmarks, parameter sweeps, selftest."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .attacks import AttackSpecError, run_scenario
from .config import ConfigError, ScenarioConfig, load_config, set_param
from .pipeline import BASE_PREFETCHERS, PRESETS, DefenseConfig
from .report import TABLES, emit_report, emit_rows_csv
from .workloads import WorkloadKind, run_workload


def _load(path: str | None) -> ScenarioConfig:
    return load_config(path) if path else ScenarioConfig()


def _write(data: bytes, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        with open(out, "wb") as fh:
            fh.write(data)


def _fmt(args, cfg: ScenarioConfig) -> str:
    return args.format or cfg.report_format


def cmd_attack(args) -> int:
    cfg = _load(args.config)
    trials = args.trials if args.trials is not None else cfg.trials
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    rep = run_scenario(cfg.attack, cfg.defense, trials, cfg.cache, cfg.bucket_cycles)
    _write(emit_report(rep, _fmt(args, cfg), args.table), args.out)
    return 0


def _bench_report(cfg: ScenarioConfig):
    return run_workload(cfg.workload, cfg.defense, cfg.cache, cfg.bucket_cycles)


def cmd_bench(args) -> int:
    cfg = _load(args.config)
    wl = cfg.workload
    if args.workload:
        wl = replace(wl, kind=WorkloadKind(args.workload.upper()))
    if args.length is not None:
        wl = replace(wl, length=args.length)
    d = cfg.defense
    if args.defense:
        d = DefenseConfig.preset(args.defense, base=args.base_prefetcher or d.base, st_bit_width=d.st_bit_width,
                                 st_max_per_load=d.st_max_per_load, stride_table_size=d.stride_table_size,
                                 at=d.at, rp=d.rp)
    elif args.base_prefetcher:
        d = replace(d, base=args.base_prefetcher)
    rep = _bench_report(replace(cfg, workload=wl, defense=d))
    _write(emit_report(rep, _fmt(args, cfg), args.table), args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values needs at least one value")
    rows = []
    for v in values:
        c = set_param(cfg, args.param, v)
        if args.target == "bench":
            rep = _bench_report(c)
        else:
            rep = run_scenario(c.attack, c.defense, c.trials, c.cache, c.bucket_cycles)
        rows.append({args.param: v, **rep.summary_row()})
    _write(emit_rows_csv(rows), args.out)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(args.seed) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prefender", description=__doc__)
    sub = p.add_subparsers(dest="command")

    def common_out(sp):
        sp.add_argument("--out", help="output path (default: stdout)")
        sp.add_argument("--format", type=str.upper, choices=["JSON_LINES", "CSV"], default=None)
        sp.add_argument("--table", choices=TABLES, default="latency", help="table emitted with --format CSV")

    a = sub.add_parser("attack", help="run an attack scenario")
    a.add_argument("--config", required=True)
    a.add_argument("--trials", type=int)
    common_out(a)
    a.set_defaults(func=cmd_attack)

    b = sub.add_parser("bench", help="run a benign workload")
    b.add_argument("--workload", type=str.upper, choices=[k.value for k in WorkloadKind])
    b.add_argument("--defense", choices=sorted(PRESETS))
    b.add_argument("--base-prefetcher", choices=BASE_PREFETCHERS)
    b.add_argument("--length", type=int)
    b.add_argument("--config")
    common_out(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("sweep", help="rerun a scenario over values of one parameter")
    s.add_argument("--param", required=True, help="section.key, e.g. at.buffer_count")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--config")
    s.add_argument("--trials", type=int)
    s.add_argument("--target", choices=["attack", "bench"], default="attack")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("selftest", help="run the built-in invariant checks")
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, AttackSpecError, ValueError) as exc:
        print(f"prefender: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
