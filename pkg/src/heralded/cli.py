"""Command-line interface.

    heralded run FILE [--scenario NAME] [--seed N] [--out DIR] [--workers N]
    heralded dispersion PUMP_NM SIGNAL_NM IDLER_NM TEMP_C LENGTH_M
    heralded spectrum FILE [--scenario NAME] [--out DIR]
    heralded table1 REPORT.json [REPORT.json ...] [--literature CSV]

Exit codes: 0 success, 1 usage, 2 configuration or input validation,
3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__, dispersion, pipeline, scenario, table
from .errors import ConfigError, DomainError, HeraldedError
from .estimators import EstimateReport

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _select(scenarios, name):
    """Scenarios to run for ``--scenario NAME``, calibration sources first."""
    if name is None:
        return scenarios
    by_name = {s.name: s for s in scenarios}
    if name not in by_name:
        raise ConfigError(f"no scenario named {name!r}; have {sorted(by_name)}")
    chain, cur = [], by_name[name]
    while cur is not None and cur not in chain:
        chain.insert(0, cur)
        cur = by_name.get(cur.calibration) if cur.calibration else None
    return chain


def _check_unique(scenarios, source):
    seen = set()
    for s in scenarios:
        if s.name in seen:
            raise ConfigError(f"{source}: duplicate scenario name {s.name!r}")
        seen.add(s.name)


def cmd_run(args):
    scenarios = scenario.load_scenarios(args.file)
    _check_unique(scenarios, args.file)
    chosen = _select(scenarios, args.scenario)
    if args.seed is not None:
        chosen = [scenario.with_seed(s, args.seed) for s in chosen]
    manifests, _ = pipeline.run_batch(chosen, args.out, args.workers)
    for m in manifests:
        print(f"{m.scenario}: {len(m.files())} file(s) in "
              f"{Path(args.out) / m.scenario}  hash={m.config_hash[:12]}  "
              f"{m.wall_clock_s:.1f} s")
    return EXIT_OK


def cmd_dispersion(args):
    rows = dispersion.dispersion_table(args.pump_nm, args.signal_nm, args.idler_nm,
                                       args.temperature, args.length, args.coherence_time)
    print("quantity,value,unit")
    for q, v, u in rows:
        print(f"{q},{v:.6g},{u}")
    return EXIT_OK


def cmd_spectrum(args):
    scenarios = scenario.load_scenarios(args.file)
    _check_unique(scenarios, args.file)
    chosen = _select(scenarios, args.scenario)[-1:] if args.scenario else scenarios
    for s in chosen:
        ms = pipeline.compute_spectrum(s)
        line = f"{s.name}: idler FWHM {ms.fwhm_nm:.3f} nm"
        if args.out:
            out = Path(args.out) / s.output_dir
            out.mkdir(parents=True, exist_ok=True)
            ms.to_csv(out / "spectrum.csv")
            line += f" -> {out / 'spectrum.csv'}"
        print(line)
    return EXIT_OK


def cmd_table1(args):
    reports = []
    for path in args.reports:
        try:
            reports.append(EstimateReport.from_json(path))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
    literature = table.load_literature(args.literature)
    sys.stdout.write(table.table_one(reports, literature))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="heralded", description="Heralded single-photon source simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run scenarios from a scenario file")
    r.add_argument("file")
    r.add_argument("--scenario", help="run only this scenario (and its calibration source)")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--out", default="results", help="output root directory")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("dispersion", help="group indices, walk-off and QPM period")
    d.add_argument("pump_nm", type=float)
    d.add_argument("signal_nm", type=float)
    d.add_argument("idler_nm", type=float)
    d.add_argument("temperature", type=float, help="degC")
    d.add_argument("length", type=float, help="crystal length in m")
    d.add_argument("--coherence-time", type=float, default=8e-12, help="s (default 8 ps)")
    d.set_defaults(func=cmd_dispersion)

    s = sub.add_parser("spectrum", help="marginal idler spectrum of each scenario")
    s.add_argument("file")
    s.add_argument("--scenario")
    s.add_argument("--out", help="write spectrum.csv under this directory")
    s.set_defaults(func=cmd_spectrum)

    t = sub.add_parser("table1", help="comparison table from estimate reports")
    t.add_argument("reports", nargs="+")
    t.add_argument("--literature", help="literature CSV (default: bundled)")
    t.set_defaults(func=cmd_table1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        build_parser().error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, DomainError, table.TableError) as exc:
        print(f"heralded: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except pipeline.PipelineError as exc:
        code = EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_RUNTIME
        print(f"heralded: {exc}", file=sys.stderr)
        return code
    except (HeraldedError, ValueError, ArithmeticError, OSError) as exc:
        print(f"heralded: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
