"""Command-line entry point: ``qcascade <subcommand> [options]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure
(non-finite values, or records left unconverged at the cutoff cap).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, apply_overrides, format_config, parse_config
from .errors import ConfigError, NumericalInstabilityError
from .io import emit_records, format_float, write_table
from .observables import poisson_distribution, reference_gn
from .scenarios import run_sweep, transition_analysis

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

log = logging.getLogger("qcascade")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--output", type=Path, help="output directory (overrides the 'output' key)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    pump = _Parser(add_help=False)
    pump.add_argument("--pump", type=float, help="pump rate in ps^-1 (default: pump_s from the config)")

    parser = _Parser(prog="qcascade", description="Cascaded cavity QED steady-state statistics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("sweep", parents=[common], help="pump sweep: records and second-difference crossing")
    sub.add_parser("gn-spectrum", parents=[common, pump], help="g^(n) for n = 1..n_max at one pump rate")
    sub.add_parser("distribution", parents=[common, pump], help="target photon-number distribution")
    sub.add_parser("drive-compare", parents=[common], help="coherent vs incoherent target drive")
    sub.add_parser("verify", parents=[common], help="run the self-check suite")
    return parser


def load_config(args) -> RunConfig:
    config = RunConfig()
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror or exc}") from None
        config = parse_config(text, source=str(args.config))
    config = apply_overrides(config, args.set)
    if args.output is not None:
        config = replace(config, output=str(args.output))
    return config


def _prepare(config: RunConfig) -> Path:
    out = Path(config.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(format_config(config), encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write to {out}: {exc.strerror or exc}") from None
    return out


def _status(records) -> int:
    bad = [r for r in records if not r.converged]
    if bad:
        log.warning("%d of %d records are not converged", len(bad), len(records))
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_sweep(config: RunConfig) -> int:
    out = _prepare(config)
    records = run_sweep(config.plan(), config.params)
    emit_records(records, out / "records.csv", config.n_max)
    print(f"records: {out / 'records.csv'}")
    if config.scenario == "cascaded":
        src = [r for r in records if r.system == "source"]
        tgt = [r for r in records if r.system == "target"]
        tr = transition_analysis(src, tgt)
        write_table(out / "transition.csv", ["pump", "source_g2dd", "target_g2dd"],
                    zip(tr.pumps, tr.source_dd, tr.target_dd))
        print(f"transition: {out / 'transition.csv'}")
        if tr.kind == "crossing":
            print(f"crossing: {format_float(tr.pump)}")
        else:
            print(f"crossing: {tr.kind}")
    return _status(records)


def _single(config: RunConfig, pump: float, scenario: str = "cascaded", **params):
    cfg = replace(config, params=replace(config.params, **params))
    return run_sweep(cfg.plan(pumps=(pump,), scenario=scenario), cfg.params)


def cmd_gn_spectrum(config: RunConfig, pump: float) -> int:
    out = _prepare(config)
    one = _single(config, pump, n_emitters_target=1)
    two = _single(config, pump, n_emitters_target=2)
    systems = {
        "source": next(r for r in two if r.system == "source"),
        "target_1tls": next(r for r in one if r.system == "target"),
        "target_2tls": next(r for r in two if r.system == "target"),
    }
    rows = []
    for name, rec in systems.items():
        for n in range(1, config.n_max + 1):
            rows.append([name, n, 1.0 if n == 1 else rec.g.get(n, math.nan)])
    for kind in ("thermal", "coherent", "fock"):
        for n in range(1, config.n_max + 1):
            rows.append([kind, n, reference_gn(kind, n, photons=n if kind == "fock" else None)])
    write_table(out / "gn_spectrum.csv", ["system", "n", "g"], rows)
    print(f"gn-spectrum: {out / 'gn_spectrum.csv'}")
    return _status(one + two)


def cmd_distribution(config: RunConfig, pump: float) -> int:
    out = _prepare(config)
    records = _single(config, pump)
    target = next(r for r in records if r.system == "target")
    p = target.distribution.clip(0.0, None)
    ref = poisson_distribution(target.mean_n, p.size - 1)
    write_table(out / "distribution.csv", ["n", "target", "coherent"],
                ([n, float(p[n]), float(ref[n])] for n in range(p.size)))
    print(f"distribution: {out / 'distribution.csv'} (mean photon number {format_float(target.mean_n)})")
    return _status(records)


def cmd_drive_compare(config: RunConfig) -> int:
    out = _prepare(config)
    records = []
    for kind in ("coherent", "incoherent"):
        for r in run_sweep(config.plan(scenario=kind), config.params):
            r.system = kind
            records.append(r)
    emit_records(records, out / "drive_compare.csv", config.n_max)
    print(f"drive-compare: {out / 'drive_compare.csv'}")
    return _status(records)


def cmd_verify(config: RunConfig) -> int:
    from .verify import run_checks

    checks = run_checks()
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args)
        pump = getattr(args, "pump", None)
        if pump is not None and not (math.isfinite(pump) and pump > 0):
            raise ConfigError(f"--pump: must be a positive rate, got {pump}")
        pump = config.params.pump_s if pump is None else pump
        if args.command == "sweep":
            return cmd_sweep(config)
        if args.command == "gn-spectrum":
            return cmd_gn_spectrum(config, pump)
        if args.command == "distribution":
            return cmd_distribution(config, pump)
        if args.command == "drive-compare":
            return cmd_drive_compare(config)
        return cmd_verify(config)
    except ConfigError as exc:
        print(f"qcascade: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qcascade: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalInstabilityError as exc:
        print(f"qcascade: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
