"""Command-line entry point: ``magnus-eff <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical-quality failure,
4 regime violation.  Errors are also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import scenarios
from .errors import ConfigError, MagnusEffError, NumericalQualityError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_REGIME = 4


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.16e}"


def write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for i in range(len(data[0])):
        lines.append(",".join(fmt(col[i]) for col in data))
    path.write_text("\n".join(lines) + "\n")


def write_rows(path: Path, rows: list[dict], names: list[str]) -> None:
    lines = [",".join(names)]
    for r in rows:
        lines.append(",".join(fmt(r[n]) if n != "error" else _csv_text(r[n]) for n in names))
    path.write_text("\n".join(lines) + "\n")


def _csv_text(s: str) -> str:
    if any(c in s for c in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magnus-eff",
                                     description="Magnus-expansion effective Hamiltonians for the Lambda system.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key-value config file (or name of a shipped config)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--out", help="output directory (overrides the 'outputs' key)")
    common.add_argument("--jobs", type=int, help="worker processes for sweeps and oracle checks")
    common.add_argument("--emit-f-prime-exact", action="store_true",
                        help="also compute the exact post-selected fidelity")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("simulate", "population histories"),
                       ("fidelity", "fidelity, leakage and post-selected fidelity"),
                       ("sweep", "reduced fidelity metric across one parameter axis"),
                       ("validate-tau", "coarse-graining time diagnostics"),
                       ("oracle-check", "analytic coefficients against nested quadrature")):
        sub.add_parser(name, parents=[common], help=text)
    sub.add_parser("list-configs", help="print the shipped config names")
    return parser


def _load(args) -> dict:
    raw = cfgmod.load_raw(args.config, cfgmod.parse_overrides(args.overrides))
    if args.emit_f_prime_exact:
        raw["emit_F_prime_exact"] = "true"
    if args.jobs is not None:
        raw["jobs"] = str(args.jobs)
    return raw


def _outdir(args, raw: dict) -> Path:
    out = Path(args.out or raw["outputs"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jobs(raw: dict) -> int:
    try:
        jobs = int(raw["jobs"])
    except ValueError:
        raise ConfigError(f"jobs must be an integer, got {raw['jobs']!r}") from None
    if jobs < 1:
        raise ConfigError("jobs must be >= 1")
    return jobs


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-configs":
        from importlib import resources

        for f in sorted(p.name for p in (resources.files("magnus_eff") / "configs").iterdir()
                        if p.name.endswith(".cfg")):
            print(f)
        return EXIT_OK
    raw = _load(args)
    out = _outdir(args, raw)
    if args.command == "simulate":
        res = scenarios.run_simulate(cfgmod.build_scenario(raw))
        write_csv(out / "populations.csv", res.columns)
        (out / "summary.json").write_text(dump_json(res.summary))
    elif args.command == "fidelity":
        res = scenarios.run_fidelity(cfgmod.build_scenario(raw))
        write_csv(out / "fidelity.csv", res.columns)
        (out / "summary.json").write_text(dump_json(res.summary))
    elif args.command == "sweep":
        rows, summary = scenarios.run_sweep(cfgmod.build_sweep(raw), _jobs(raw))
        write_rows(out / "sweep.csv", rows, ["value", "method", "metric", "result", "error"])
        (out / "summary.json").write_text(dump_json(summary))
    elif args.command == "validate-tau":
        report = scenarios.run_validate_tau(cfgmod.build_scenario(raw))
        text = dump_json(report)
        (out / "tau.json").write_text(text)
        sys.stdout.write(text)
    elif args.command == "oracle-check":
        report = scenarios.run_oracle_check(raw, _jobs(raw))
        (out / "oracle.json").write_text(dump_json(report))
        for order, s in report["by_order"].items():
            status = "pass" if s["passed"] else "FAIL"
            print(f"order {order}: max relative deviation {s['max_deviation']:.3e} [{status}]")
        if not report["passed"]:
            raise NumericalQualityError(
                f"oracle deviation {report['max_deviation']:.3e} exceeds {report['threshold']:.1e}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except MagnusEffError as exc:
        payload = {"schema_version": scenarios.SCHEMA_VERSION, "error": type(exc).__name__,
                   "message": str(exc), "exit_code": exc.exit_code,
                   "diagnostics": getattr(exc, "diagnostics", {})}
        sys.stderr.write(dump_json(payload))
        return exc.exit_code
    except ValueError as exc:
        # invalid physical parameters surface as plain ValueError from the library
        payload = {"schema_version": scenarios.SCHEMA_VERSION, "error": "ConfigError",
                   "message": str(exc), "exit_code": EXIT_CONFIG, "diagnostics": {}}
        sys.stderr.write(dump_json(payload))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
