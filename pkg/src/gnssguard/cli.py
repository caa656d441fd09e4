"""Command-line front end: parse, simulate, replicate, sweep, report.

Exit codes: 0 success (an undetected attack is still success), 2 I/O
failure, 3 RINEX parse failure, 4 configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .config import ScenarioConfig, apply_overrides, load_config
from .errors import ConfigError, RinexError, SeriesError
from .rinex_io import calendar, epochs_to_table, parse_nav, parse_obs, write_series

EXIT_OK, EXIT_IO, EXIT_PARSE, EXIT_CONFIG = 0, 2, 3, 4
OUT_ENV = "GNSSGUARD_OUT"


def default_out() -> str:
    return os.environ.get(OUT_ENV, "gnssguard-out")


def _stamp(week: int, sow: float) -> str:
    y, mo, d, h, mi, s = calendar(week, sow)
    return f"{y:04d}-{mo:02d}-{d:02d} {h:02d}:{mi:02d}:{s:06.3f} (week {week}, {sow:.3f} s)"


def _rinex_kind(data: bytes) -> str:
    first = data.split(b"\n", 1)[0].decode("ascii", "replace")
    kind = first[20:21].upper() if len(first) > 20 else ""
    return "nav" if kind == "N" else "obs"


def cmd_parse(args) -> int:
    data = Path(args.path).read_bytes()
    out = sys.stdout
    if _rinex_kind(data) == "nav":
        nav = parse_nav(data)
        if args.format == "summary":
            sats = sorted(nav.by_satellite())
            print(f"navigation file, RINEX {nav.header.version:.2f}", file=out)
            print(f"records: {len(nav.records)}", file=out)
            print(f"satellites ({len(sats)}): {' '.join(sats)}", file=out)
            return EXIT_OK
        table = {f: [getattr(r, f) for r in nav.records]
                 for f in ("sat_id", "week", "toe", "sqrt_a", "e", "i0", "omega0", "omega", "m0",
                           "af0", "af1", "health")}
        out.write(write_series(table, args.format, digits=12).decode())
        return EXIT_OK
    obs = parse_obs(data)
    if args.format == "summary":
        sats = sorted({s for ep in obs.epochs for s in ep.sats})
        print(f"observation file, RINEX {obs.header.version:.2f}", file=out)
        print(f"epochs: {len(obs.epochs)}", file=out)
        print(f"satellites ({len(sats)}): {' '.join(sats)}", file=out)
        print(f"observation types: {' '.join(obs.header.obs_types)}", file=out)
        if obs.epochs:
            a, b = obs.epochs[0], obs.epochs[-1]
            print(f"span: {_stamp(a.week, a.t)} -> {_stamp(b.week, b.t)}", file=out)
        return EXIT_OK
    out.write(write_series(epochs_to_table(obs.epochs), args.format, digits=12).decode())
    return EXIT_OK


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    cfg = apply_overrides(cfg, args.set or [])
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    return cfg


def _out_dir(args, cfg) -> Path:
    return Path(args.out or cfg.output.dir or default_out())


def format_summary(summary: dict) -> str:
    frac = summary["mode_fraction"]
    lines = ["mode: " + " | ".join(f"{m} {100 * frac.get(m, 0.0):.1f}%"
                                   for m in ("Normal", "Alert", "UnderAttack"))]
    lines.append(f"epochs: {summary['epochs']}")
    if summary["attacked"]:
        lat = summary["detection_latency"]
        lines.append("attack: detected" + (f" after {lat:g} s" if lat is not None else "")
                     if summary["detected"] else "attack: NOT detected")
    else:
        lines.append("attack: none")
    lines.append(f"false alarms: {summary['false_alarms']}")
    lines.append(f"alert episodes: {summary['alert_episodes']}")

    def num(key, unit, scale=1.0, fmt=".3f"):
        v = summary.get(key)
        return "n/a" if v is None else f"{v * scale:{fmt}} {unit}"
    lines.append(f"max location offset: {num('max_location_offset', 'm')}")
    lines.append(f"max time offset: {num('max_time_offset', 'ms', 1e3, '.6f')}")
    lines.append(f"max Doppler discrepancy: {num('max_doppler_discrepancy', 'Hz', fmt='.1f')}")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    from .scenario import run
    cfg = _load(args)
    metrics = run(cfg)
    out = _out_dir(args, cfg)
    metrics.write(out)
    print(format_summary(metrics.summary))
    print(f"output: {out}")
    return EXIT_OK


def cmd_replicate(args) -> int:
    from .scenario import FIGURES, replicate_figure
    if args.figure not in FIGURES:
        raise ConfigError(f"unknown figure {args.figure!r}; available: {', '.join(FIGURES)}")
    cfg = _load(args)
    out = _out_dir(args, cfg) / args.figure
    metrics = replicate_figure(args.figure, base=cfg, out_dir=out)
    print(format_summary(metrics.summary))
    print(f"output: {out}")
    return EXIT_OK


def _parse_values(text: str) -> list:
    import yaml
    items = [v.strip() for v in text.split(",") if v.strip()]
    return [yaml.safe_load(v) for v in items]


def cmd_sweep(args) -> int:
    from .scenario import run
    cfg = _load(args)
    values = _parse_values(args.values)
    if not values:
        raise ConfigError("sweep: empty value list")
    # validate every point before running any of them
    configs = [(v, apply_overrides(cfg, {args.param: v})) for v in values]
    out = _out_dir(args, cfg)
    rows = []
    cols = ("value", "seed", "detected", "detection_latency", "false_alarms",
            "max_location_offset", "max_time_offset", "max_doppler_discrepancy")
    for v, vcfg in configs:
        for s in range(args.seeds):
            rcfg = apply_overrides(vcfg, {"seed": vcfg.seed + s})
            metrics = run(rcfg)
            metrics.write(out / f"{args.param}={v}" / f"seed{rcfg.seed}")
            rows.append({"value": v, "seed": rcfg.seed, **{c: metrics.summary[c] for c in cols[2:]}})
    table = {c: [r[c] for r in rows] for c in cols}
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_bytes(write_series(table, "csv", digits=10))
    print(f"{args.param:>24} {'seed':>5} {'det':>4} {'latency':>8} {'FA':>3} "
          f"{'max loc [m]':>12} {'max time [s]':>13} {'max dD [Hz]':>11}")
    for r in rows:
        def f(v, fmt):
            return "-".rjust(int(fmt.split(".")[0])) if v is None else format(v, fmt)
        print(f"{str(r['value']):>24} {r['seed']:>5} {int(r['detected']):>4} "
              f"{f(r['detection_latency'], '8.1f')} {r['false_alarms']:>3} "
              f"{f(r['max_location_offset'], '12.3f')} {f(r['max_time_offset'], '13.6g')} "
              f"{f(r['max_doppler_discrepancy'], '11.1f')}")
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    summary = json.loads((run_dir / "summary.json").read_text())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    print(f"run: {run_dir}")
    print(f"tool: {manifest['tool']} {manifest['version']}  config {manifest['config_hash'][:12]}"
          f"  seed {manifest['seeds']['master']}")
    print(format_summary(summary))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnssguard", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("parse", help="summarise or convert a RINEX observation/navigation file")
    sp.add_argument("path")
    sp.add_argument("--format", choices=("summary", "csv", "json"), default="summary")
    sp.set_defaults(func=cmd_parse)

    def scenario_opts(sp):
        sp.add_argument("config", help="YAML scenario file")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./gnssguard-out)")
        sp.add_argument("--set", action="append", metavar="PATH=VALUE",
                        help="override a config field, e.g. attack.t_replay_ms=5")

    sp = sub.add_parser("simulate", help="run one scenario")
    scenario_opts(sp)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("replicate", help="run a figure preset")
    sp.add_argument("figure")
    scenario_opts(sp)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_replicate)

    sp = sub.add_parser("sweep", help="one run per parameter value")
    scenario_opts(sp)
    sp.add_argument("--param", required=True, help="dotted config path")
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--seeds", type=int, default=1, help="runs per value (consecutive seeds)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="print the summary of a finished run directory")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RinexError, SeriesError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"parse error: malformed run directory ({exc})", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
