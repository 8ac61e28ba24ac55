"""Command-line entry point: ``thz-aoa {run,sweep,validate,oracle}``."""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

import yaml

from .campaign import rows_to_csv, run_campaign, trials_to_jsonl
from .config import PRESET_ALIASES, PRESETS, ConfigError, SimConfig, dump_config, from_mapping, load_config, preset
from .oracle import crosscheck

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("thz_aoa")

_FLAG_FIELDS = {
    "snr_min": "snr_min_db",
    "snr_max": "snr_max_db",
    "snr_step": "snr_step_db",
    "trials": "trials",
    "seed": "seed",
    "mode": "mode",
}


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file (needs schema_version)")
    p.add_argument("--preset", choices=sorted(PRESETS) + sorted(PRESET_ALIASES), help="start from a named preset")
    p.add_argument("--snr-min", type=float, help="first SNR point (dB)")
    p.add_argument("--snr-max", type=float, help="last SNR point (dB)")
    p.add_argument("--snr-step", type=float, help="SNR step (dB)")
    p.add_argument("--trials", type=int, help="Monte-Carlo trials per SNR point")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--mode", choices=("proposed", "no_ttdu", "ideal_ttdu"))


def build_config(args: argparse.Namespace) -> SimConfig:
    """Preset, then config file, then individual flags; later sources win."""
    base = preset(args.preset) if args.preset else None
    if args.config is not None:
        cfg = load_config(args.config, base)
    else:
        cfg = base if base is not None else SimConfig()
    overrides = {field: getattr(args, flag) for flag, field in _FLAG_FIELDS.items()
                 if getattr(args, flag, None) is not None}
    if overrides:
        cfg = from_mapping(overrides, cfg)
    return cfg


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def _check_failures(result, cfg: SimConfig) -> int:
    if result.failure_rate > cfg.failure_threshold:
        log.error("estimation failure rate %.3f exceeds threshold %.3f", result.failure_rate, cfg.failure_threshold)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = build_config(args)
    result = run_campaign(cfg, workers=args.workers)
    _write(rows_to_csv(result.rows), args.out)
    if args.log is not None:
        _write(trials_to_jsonl(result.trials), args.log)
    return _check_failures(result, cfg)


def parse_vary(items: list[str]) -> list[tuple[str, list]]:
    axes = []
    for item in items:
        key, sep, values = item.partition("=")
        if not sep or not values:
            raise ConfigError(f"--vary expects key=v1,v2,... (got {item!r})")
        axes.append((key.strip(), [yaml.safe_load(v) for v in values.split(",")]))
    return axes


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    axes = parse_vary(args.vary)
    keys = [k for k, _ in axes]
    combos = list(itertools.product(*(v for _, v in axes)))
    configs = [from_mapping(dict(zip(keys, combo)), cfg) for combo in combos]   # validate all first
    args.out.mkdir(parents=True, exist_ok=True)
    index = ["run," + ",".join(keys)]
    status = EXIT_OK
    for n, (combo, sub) in enumerate(zip(combos, configs)):
        name = f"run_{n:03d}.csv"
        log.info("sweep %s: %s", name, dict(zip(keys, combo)))
        result = run_campaign(sub, workers=args.workers)
        _write(rows_to_csv(result.rows), args.out / name)
        index.append(name + "," + ",".join(str(v) for v in combo))
        status = max(status, _check_failures(result, sub))
    _write("\n".join(index) + "\n", args.out / "index.csv")
    return status


def cmd_validate(args) -> int:
    cfg = build_config(args)
    sys.stdout.write(dump_config(cfg))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = build_config(args)
    check = crosscheck(cfg, args.instances, args.snr, args.resolution, cfg.seed)
    print(f"instances={args.instances} snr_db={args.snr:g} final_resolution={check.final_resolution:.3e} "
          f"max_gap={check.max_gap:.3e} agree={check.agree}")
    return EXIT_OK if check.agree else EXIT_NUMERICAL


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thz-aoa", description="THz space-to-air angle estimation simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one RMSE-versus-SNR campaign")
    _config_args(run)
    run.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    run.add_argument("--log", type=Path, help="per-trial JSON-lines log")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a campaign for every combination of --vary values")
    _config_args(sweep)
    sweep.add_argument("--vary", action="append", required=True, metavar="KEY=V1,V2")
    sweep.add_argument("--out", type=Path, required=True, help="output directory")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    val = sub.add_parser("validate", help="check a configuration and print it resolved")
    _config_args(val)
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle", help="cross-check ESPRIT against brute-force grid search")
    _config_args(orc)
    orc.add_argument("--instances", type=int, default=100)
    orc.add_argument("--snr", type=float, default=20.0, help="per-element SNR (dB)")
    orc.add_argument("--resolution", type=float, default=0.05, help="coarse grid step (rad)")
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
