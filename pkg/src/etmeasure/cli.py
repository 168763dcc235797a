"""Command-line entry point: ``etmeasure {run,sweep,audit,probe,chain}``.

Exit codes: 0 success, 1 bad input (config, CSV/JSON table, arguments),
2 model construction or validation failure, 3 numerical-tolerance failure.
No artifacts are written unless the whole run succeeds.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from . import experiments as ex
from .artifacts import write_artifacts
from .config import ExperimentConfig, load_config
from .errors import (ArgumentError, CapacityError, ConfigFileError, ConfigurationError, ProtocolError,
                     ToleranceError, UnsupportedModelError, ValidationError)

log = logging.getLogger("etmeasure")

EXIT_INPUT = 1
EXIT_MODEL = 2
EXIT_TOLERANCE = 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="artifact directory (default: ./out)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--quiet", action="store_true", help="suppress the console summary")
    common.add_argument("--workers", type=int, default=None, help="process pool size")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--grid-n", type=int, default=None, help="grid points per axis")
    grid.add_argument("--dt", type=float, default=None, help="split-step time step")

    p = argparse.ArgumentParser(prog="etmeasure", description="Time-energy bounds for measurement models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common, grid], help="run one experiment config")
    r.add_argument("config")

    s = sub.add_parser("sweep", parents=[common, grid], help="sweep one model parameter")
    s.add_argument("config")
    s.add_argument("--parameter", default=None)
    s.add_argument("--values", default=None, help="comma-separated values")

    a = sub.add_parser("audit", parents=[common], help="evaluate the inequalities on a CSV/JSON table")
    a.add_argument("table")

    pr = sub.add_parser("probe", parents=[common], help="randomized no-go probe")
    pr.add_argument("config", nargs="?")
    pr.add_argument("--trials", type=int, default=None)
    pr.add_argument("--d-s", type=int, default=None)
    pr.add_argument("--d-a", type=int, default=None)

    c = sub.add_parser("chain", parents=[common], help="spin-chain locality and box fluctuations")
    c.add_argument("config", nargs="?")
    c.add_argument("--L", type=int, default=None)
    c.add_argument("--t", type=float, default=None)
    c.add_argument("--eps", type=float, default=None)
    return p


def _empty_config(kind: str) -> ExperimentConfig:
    return ExperimentConfig({"experiment": {"kind": kind}}, hashlib.sha256(b"").hexdigest())


def _load_table(path: str) -> tuple[list[dict], str]:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigFileError(f"cannot read {p}: {exc.strerror}") from None
    text = raw.decode()
    if p.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigFileError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        if isinstance(data, dict):
            data = data.get("rows", [data])
        if not isinstance(data, list) or not all(isinstance(r, dict) for r in data):
            raise ConfigFileError("JSON input must be an object or a list of objects")
        rows = data
    else:
        rows = list(csv.DictReader(text.splitlines()))
    out = []
    for i, r in enumerate(rows, start=2):
        row = {}
        for k, v in r.items():
            if k is None or k not in ex.AUDIT_COLUMNS:
                continue
            if v in ("", None):
                row[k] = None
                continue
            try:
                row[k] = float(v)
            except (TypeError, ValueError):
                raise ConfigFileError(f"column {k!r}: not a number: {v!r}", i) from None
        out.append(row)
    return out, hashlib.sha256(raw).hexdigest()


def _dispatch(args) -> tuple[dict, dict[str, str]]:
    if args.command == "run":
        cfg = load_config(args.config)
        return ex.run_config(cfg, args.seed, args.grid_n, args.dt)
    if args.command == "sweep":
        cfg = load_config(args.config)
        values = None
        if args.values:
            try:
                values = [float(v) for v in args.values.split(",")]
            except ValueError:
                raise ConfigFileError(f"--values must be comma-separated numbers: {args.values!r}") from None
        seed = cfg.get("experiment", "seed", 0) if args.seed is None else args.seed
        return ex.run_sweep(cfg, seed, args.parameter, values, args.grid_n, args.dt, args.workers)
    if args.command == "audit":
        rows, sha = _load_table(args.table)
        return ex.run_audit_table(rows, sha)
    cfg = load_config(args.config) if args.config else _empty_config(args.command)
    seed = cfg.get("experiment", "seed", 0) if args.seed is None else args.seed
    if args.command == "probe":
        return ex.run_probe(cfg, seed, {"trials": args.trials, "d_s": args.d_s, "d_a": args.d_a,
                                        "workers": args.workers, "seed": args.seed})
    return ex.run_chain(cfg, seed, {"L": args.L, "t": args.t, "eps": args.eps, "seed": args.seed})


def _summary(report: dict) -> str:
    lines = [f"{report.get('meta', {}).get('experiment', 'audit')}: ok"]
    if "measurement" in report:
        lines.append(f"  P_error = {report['measurement']['p_error']['value']:.6g}")
    if "audit" in report:
        for e in report["audit"]["entries"]:
            lines.append(f"  {e['name']:<24} {e['verdict']:<12} margin {e['margin']:.6g}")
    if "counterexamples" in report:
        lines.append(f"  counterexamples: {report['counterexamples']} of {report['trials']}")
    if "product_relative_spread" in report:
        lines.append(f"  tau*dH_A relative spread: {report['product_relative_spread']:.3g}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        report, files = _dispatch(args)
    except ConfigFileError as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except ToleranceError as exc:
        log.error("tolerance failure: %s", exc)
        return EXIT_TOLERANCE
    except (ConfigurationError, ValidationError, ArgumentError, CapacityError,
            UnsupportedModelError, ProtocolError) as exc:
        log.error("model error: %s", exc)
        return EXIT_MODEL
    written = write_artifacts(args.out, files)
    log.info(_summary(report))
    log.info("wrote %s", ", ".join(str(p) for p in written))
    return 0


if __name__ == "__main__":
    sys.exit(main())
