"""
Command-line front end.

    memattack run-protocol --days 1 --M 100 --mu 0.5 --seed 7
    memattack attack bhk --M 2 --N 10 --trials 10000 --seed 42
    memattack verify-pa --n 6 --t 3
    memattack sweep hr --grid runs=1,5,10 --seed 1
    memattack report out/bhk-42.json

Scenario parameters are given as ``--name value`` after the subcommand or in
an INI file passed with ``--config``; the command line wins.  Results go to
``--out``, else ``$MEMATTACK_OUT``, else ``./memattack-out``.

Exit codes: 0 success, 2 configuration error, 3 experiment failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, MemAttackError
from .config import ExperimentConfig, build_config, coerce, read_config_file
from .experiments import ATTACK_SCENARIOS, RUNNERS, SCHEMAS
from .seeds import sub_seed

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3
DEFAULT_OUT = "memattack-out"
SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, default=_jsonable) + "\n"


def _split_extras(extras: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    it = iter(extras)
    for tok in it:
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if not eq:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"flag --{key} needs a value")
        out[key.replace("-", "_")] = value
    return out


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get("MEMATTACK_OUT") or DEFAULT_OUT)


def _aggregate_rows(report: dict) -> list[list]:
    rows = []
    for metric, stats in sorted(report.get("aggregates", {}).items()):
        ref = report.get("columns", {}).get(metric, "")
        for stat in ("mean", "std", "min", "max", "n"):
            rows.append([metric, stat, stats[stat], ref])
    for key, value in sorted((report.get("summary") or {}).items()):
        if isinstance(value, (int, float)):
            rows.append([key, "value", value, report.get("columns", {}).get(key, "")])
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(out_dir: Path, name: str, doc: dict, csv_text: str) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    jp, cp = out_dir / f"{name}.json", out_dir / f"{name}.csv"
    jp.write_text(dumps(doc), encoding="utf-8")
    cp.write_text(csv_text, encoding="utf-8")
    return jp, cp


def run_experiment(config: ExperimentConfig) -> dict:
    report = RUNNERS[config.scenario](config.params, config.seed)
    return {"schema_version": SCHEMA_VERSION, "scenario": config.scenario, "seed": config.seed,
            "params": config.params, **report}


def _load(args, scenario: str | None, extras: dict[str, str]) -> ExperimentConfig:
    raw = read_config_file(args.config) if args.config else None
    if args.seed is not None:
        extras = {**extras, "seed": str(args.seed)}
    return build_config(SCHEMAS, raw, extras, scenario)


def _cmd_single(args, scenario: str | None, extras: dict[str, str]) -> int:
    config = _load(args, scenario, extras)
    doc = run_experiment(config)
    name = args.name or f"{config.scenario}-{config.seed}"
    jp, cp = _write(_out_dir(args), name, doc, _csv(["metric", "stat", "value", "reference"], _aggregate_rows(doc)))
    print(_summary_line(doc))
    print(f"wrote {jp} and {cp}")
    return EXIT_OK if doc["status"] == "ok" else EXIT_FAILED


def _summary_line(doc: dict) -> str:
    parts = [f"{doc['scenario']} seed={doc['seed']} status={doc['status']}"]
    for metric, stats in sorted(doc.get("aggregates", {}).items()):
        parts.append(f"{metric}={stats['mean']:.6g}")
    return " ".join(parts)


def parse_grid(specs: list[str]) -> list[tuple[str, list[str]]]:
    grid = []
    for spec in specs:
        key, eq, values = spec.partition("=")
        vals = [v for v in values.split(",") if v.strip()]
        if not eq or not key or not vals:
            raise ConfigError(f"grid entry {spec!r} must look like name=v1,v2,...")
        grid.append((key.strip(), [v.strip() for v in vals]))
    if not grid:
        raise ConfigError("sweep needs a nonempty --grid")
    return grid


def sweep(base: ExperimentConfig, grid: list[tuple[str, list[str]]]) -> dict:
    """Run every cell of the grid; cell ``i`` uses sub-seed ``mix(seed, i)``."""
    schema = SCHEMAS[base.scenario]
    keys = [k for k, _ in grid]
    for k in keys:
        if k not in schema:
            raise ConfigError(f"grid field {k!r} is not a parameter of {base.scenario!r}")
    cells = []
    columns: dict = {}
    for i, combo in enumerate(itertools.product(*(v for _, v in grid))):
        params = dict(base.params)
        for k, text in zip(keys, combo):
            try:
                params[k] = coerce(schema[k].kind, text)
            except ValueError:
                raise ConfigError(f"grid field {k!r}: expected {schema[k].kind.__name__}, got {text!r}") from None
        cell_seed = sub_seed(base.seed, i)
        report = RUNNERS[base.scenario](params, cell_seed)
        columns = report["columns"]
        cells.append({"cell": i, "grid": dict(zip(keys, (params[k] for k in keys))), "seed": cell_seed,
                      "aggregates": report["aggregates"], "summary": report.get("summary"),
                      "status": report["status"]})
    return {"schema_version": SCHEMA_VERSION, "scenario": base.scenario, "seed": base.seed, "params": base.params,
            "grid": {k: v for k, v in grid}, "cells": cells, "columns": columns,
            "status": "ok" if all(c["status"] == "ok" for c in cells) else "failed"}


def _sweep_csv(doc: dict) -> str:
    keys = list(doc["grid"])
    metrics = sorted({m for c in doc["cells"] for m in c["aggregates"]})
    rows = [[c["cell"], c["seed"], *[c["grid"][k] for k in keys], *[c["aggregates"].get(m, {}).get("mean", "")
                                                                   for m in metrics]] for c in doc["cells"]]
    return _csv(["cell", "seed", *keys, *[f"{m}_mean" for m in metrics]], rows)


def _cmd_sweep(args, extras) -> int:
    base = _load(args, args.scenario, extras)
    doc = sweep(base, parse_grid(args.grid))
    name = args.name or f"sweep-{base.scenario}-{base.seed}"
    jp, cp = _write(_out_dir(args), name, doc, _sweep_csv(doc))
    print(f"sweep {base.scenario}: {len(doc['cells'])} cells, status={doc['status']}")
    print(f"wrote {jp} and {cp}")
    return EXIT_OK if doc["status"] == "ok" else EXIT_FAILED


def _cmd_report(args) -> int:
    rows = []
    for path in args.files:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: cannot read report: {exc}") from None
        if "cells" in doc:
            for c in doc["cells"]:
                for metric, stats in sorted(c["aggregates"].items()):
                    rows.append([path, doc["scenario"], json.dumps(c["grid"], sort_keys=True), metric, stats["mean"]])
        else:
            for metric, stats in sorted(doc.get("aggregates", {}).items()):
                rows.append([path, doc["scenario"], "", metric, stats["mean"]])
    text = _csv(["file", "scenario", "cell", "metric", "mean"], rows)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memattack", description="Memory attacks on device-independent QKD.",
                                     allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    sub_kw = {"allow_abbrev": False}

    def common(p):
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="64-bit root seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--name", help="output file stem")

    common(sub.add_parser("run-protocol", help="run honest protocol days", **sub_kw))
    ap = sub.add_parser("attack", help="run an attack scenario", **sub_kw)
    ap.add_argument("scenario", choices=ATTACK_SCENARIOS)
    common(ap)
    common(sub.add_parser("verify-pa", help="check the leftover-hash bound exhaustively", **sub_kw))
    sp = sub.add_parser("sweep", help="run a scenario over a parameter grid", **sub_kw)
    sp.add_argument("scenario", choices=sorted(RUNNERS))
    sp.add_argument("--grid", action="append", default=[], help="name=v1,v2,... (repeatable)")
    common(sp)
    rp = sub.add_parser("report", help="tabulate aggregates from result files", **sub_kw)
    rp.add_argument("files", nargs="+")
    rp.add_argument("--out", help="write the table as CSV here")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.command == "report":
            if extras:
                raise ConfigError(f"unexpected arguments {' '.join(extras)}")
            return _cmd_report(args)
        overrides = _split_extras(extras)
        if args.command == "sweep":
            return _cmd_sweep(args, overrides)
        scenario = {"run-protocol": "run-protocol", "verify-pa": "verify-pa"}.get(args.command, getattr(args, "scenario", None))
        if args.command == "verify-pa" and args.seed is None:
            overrides.setdefault("seed", "0")
        return _cmd_single(args, scenario, overrides)
    except ValueError as exc:
        # includes ConfigError and parameter errors raised while building the experiment
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MemAttackError as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
