"""``dataprice`` command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 validation error,
3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import (
    Doc,
    experiment_to_record,
    load_json,
    read_ambiguity,
    read_consumption,
    read_experiment,
    read_market,
    read_p,
    read_portfolio,
    read_utility,
)
from .core import UNBOUNDED, ValidationError
from .k_index import k_index
from .pricing import find_turning_point, price_general
from .sim import SCHEMA_VERSION, grid_points, records_to_csv, records_to_json, run_replication, run_sweep
from .verify import DEFAULT_COUNTS, SUITES, run_suites

log = logging.getLogger("dataprice")

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

SEED_ENV = "DATAPRICE_SEED"
DEFAULT_SEED = 20240601

Rows = List[Dict[str, Any]]


class Outcome:
    def __init__(self, rows: Rows, extra: Optional[Dict[str, Any]] = None, status: int = EXIT_OK):
        self.rows = rows
        self.extra = extra or {}
        self.status = status


def _resolve_seed(cli_seed: Optional[int], doc: Optional[Doc]) -> int:
    if cli_seed is not None:
        seed = cli_seed
    elif doc is not None and doc.has("seed"):
        seed = doc.integer("seed")
    elif os.environ.get(SEED_ENV):
        raw = os.environ[SEED_ENV]
        try:
            seed = int(raw)
        except ValueError:
            raise ValidationError(f"{SEED_ENV}: expected an integer, got {raw!r}") from None
    else:
        seed = DEFAULT_SEED
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed: must be a 64-bit unsigned integer, got {seed}")
    return seed


def _plain(v: Any) -> Any:
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


# --- subcommands -------------------------------------------------------------


def cmd_price(doc: Doc, args: argparse.Namespace) -> Outcome:
    utility = read_utility(doc.child("utility"))
    market = read_market(doc.child("market"))
    box = read_portfolio(doc.child("portfolio", None))
    cons = read_consumption(doc.child("consumption", None))
    t = doc.number("t", 0.0)
    x = doc.number("x", 1.0)
    method = doc.string("method", ("auto", "bisection"), "auto")
    b1 = read_ambiguity(doc.child("b1"))
    b2 = read_ambiguity(doc.child("b2"))
    doc.finish()
    quote = price_general(t, x, b1, b2, box, cons, utility, market, method=method)
    return Outcome([quote.as_record()])


def _k_row(i: int, amb, res) -> Dict[str, Any]:
    rec = {"index": i, "family": amb.family}
    rec.update({k: _plain(v) for k, v in res.as_record().items()})
    return rec


def cmd_k_index(doc: Doc, args: argparse.Namespace) -> Outcome:
    market = read_market(doc.child("market"))
    p, _ = read_p(doc)
    box = read_portfolio(doc.child("portfolio", None))
    if doc.has("sets"):
        raw = doc.raw("sets")
        if not isinstance(raw, list) or not raw:
            raise ValidationError("sets: expected a non-empty list")
        sets = [read_ambiguity(Doc(s, f"sets[{i}]")) for i, s in enumerate(raw)]
    else:
        sets = [read_ambiguity(doc.child("ambiguity"))]
    doc.finish()
    return Outcome([_k_row(i, amb, k_index(amb, box, market, p)) for i, amb in enumerate(sets)])


def cmd_turning_point(doc: Doc, args: argparse.Namespace) -> Outcome:
    utility = read_utility(doc.child("utility"))
    if doc.has("market"):
        market = read_market(doc.child("market"))
        T = market.T
    else:
        market, T = None, doc.number("T")
    if doc.has("k1") or doc.has("k2"):
        k1, k2 = doc.number("k1"), doc.number("k2")
    else:
        if market is None:
            raise ValidationError("market: required when k1/k2 are not given")
        box = read_portfolio(doc.child("portfolio", None))
        p = utility.risk_exponent
        k1 = k_index(read_ambiguity(doc.child("b1")), box, market, p).k
        k2 = k_index(read_ambiguity(doc.child("b2")), box, market, p).k
    doc.finish()
    tp = find_turning_point(k1, k2, utility, T)
    if tp is None:
        shape = "decreasing"
    elif tp == 0.0:
        shape = "decreasing_from_start"
    else:
        shape = "rise_then_fall"
    return Outcome([{"k1": k1, "k2": k2, "T": T, "turning_point": tp, "shape": shape}])


def _experiment(doc: Doc, args: argparse.Namespace):
    seed = _resolve_seed(args.seed, doc)
    cfg = read_experiment(doc, seed)
    return cfg


def cmd_simulate(doc: Doc, args: argparse.Namespace) -> Outcome:
    """Per-replication prices at one grid point (default: the first)."""
    grid_index = doc.integer("grid_index", 0)
    cfg = _experiment(doc, args)
    doc.finish()
    _, points = grid_points(cfg)
    if not 0 <= grid_index < len(points):
        raise ValidationError(f"grid_index: must lie in [0, {len(points)}), got {grid_index}")
    pt = points[grid_index]
    rows = [
        {"grid_index": grid_index, "rep": k, "price": run_replication(pt.cfg, pt.n2, k, pt.index)}
        for k in range(cfg.m_reps)
    ]
    return Outcome(rows, {"config": experiment_to_record(cfg)})


def cmd_sweep(doc: Doc, args: argparse.Namespace) -> Outcome:
    workers = doc.integer("workers", 1)
    cfg = _experiment(doc, args)
    doc.finish()
    if args.workers is not None:
        workers = args.workers
    if workers < 1:
        raise ValidationError(f"workers: must be >= 1, got {workers}")
    result = run_sweep(cfg, workers=workers)
    return Outcome(result.rows(), {"config": experiment_to_record(cfg)})


def cmd_verify(doc: Optional[Doc], args: argparse.Namespace) -> Outcome:
    suites: Sequence[str] = SUITES
    counts: Dict[str, int] = dict(DEFAULT_COUNTS)
    perturb = bool(args.perturb)
    if doc is not None:
        if doc.has("suites"):
            raw = doc.raw("suites")
            if not isinstance(raw, list) or any(s not in SUITES for s in raw):
                raise ValidationError(f"suites: expected a list drawn from {list(SUITES)}")
            suites = tuple(raw)
        c = doc.child("counts", None)
        if c is not None:
            for name in SUITES:
                if c.has(name):
                    counts[name] = c.integer(name)
                    if counts[name] < 1:
                        raise ValidationError(f"counts.{name}: must be >= 1")
            c.finish()
        perturb = perturb or bool(doc.raw("perturb", False))
    seed = _resolve_seed(args.seed, doc)
    if doc is not None:
        doc.finish()
    reports = run_suites(seed, suites, counts, perturb)
    status = EXIT_OK if all(r.passed for r in reports) else EXIT_VERIFY_FAILED
    failure = next((r for r in reports if not r.passed), None)
    extra: Dict[str, Any] = {"seed": seed, "perturb": perturb}
    if failure is not None:
        extra["first_failure"] = {"suite": failure.suite, "instance": _jsonable(failure.first_failure)}
    return Outcome([r.as_row() for r in reports], extra, status)


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    obj = _plain(obj)
    if obj is UNBOUNDED:
        return None
    if isinstance(obj, float) and not math.isfinite(obj):
        # JSON has no infinities; only a diverging verification error can produce one
        return None
    return obj


COMMANDS = {
    "price": cmd_price,
    "k-index": cmd_k_index,
    "turning-point": cmd_turning_point,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


# --- rendering ---------------------------------------------------------------


def _csv_cell(v: Any) -> Any:
    if isinstance(v, (list, dict)):
        return json.dumps(v, separators=(",", ":"))
    return v


def render(command: str, outcome: Outcome, fmt: str) -> str:
    if fmt == "csv":
        return records_to_csv([{k: _csv_cell(v) for k, v in row.items()} for row in outcome.rows])
    payload = {"schema_version": SCHEMA_VERSION, "command": command}
    payload.update(outcome.extra)
    payload["rows"] = _jsonable(outcome.rows)
    return records_to_json(payload)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dataprice", description="Robust indifference pricing of data assets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", "-c", help="JSON config document ('-' for stdin)")
        sp.add_argument("--output", "-o", help="output path (default: stdout)")
        sp.add_argument("--format", "-f", choices=("csv", "json"), default="csv")
        sp.add_argument("--seed", type=int, help=f"overrides the config seed and ${SEED_ENV}")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        if name == "sweep":
            sp.add_argument("--workers", type=int, help="worker processes (result is independent of this)")
        if name == "verify":
            sp.add_argument("--perturb", action="store_true", help="scale the closed-form K by 1+1e-3 (self-test)")
    return parser


def _read_config(path: Optional[str], required: bool) -> Optional[Doc]:
    if path is None:
        if required:
            raise ValidationError("--config: a config document is required for this command")
        return None
    try:
        text = sys.stdin.read() if path == "-" else open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ValidationError(f"--config: cannot read {path!r} ({exc.strerror})") from None
    return load_json(text)


def _write(path: Optional[str], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run(args: argparse.Namespace) -> Tuple[Outcome, str]:
    """Execute a parsed command line; returns the outcome and its rendering."""
    doc = _read_config(args.config, required=args.command != "verify")
    outcome = COMMANDS[args.command](doc, args)
    return outcome, render(args.command, outcome, args.format)


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_VALIDATION
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        outcome, text = run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    try:
        _write(args.output, text)
    except OSError as exc:
        print(f"error: cannot write output ({exc.strerror})", file=sys.stderr)
        return EXIT_VALIDATION
    if outcome.status == EXIT_VERIFY_FAILED:
        failure = json.dumps(outcome.extra.get("first_failure"), sort_keys=True)
        print(f"verification failed; first failing instance: {failure}", file=sys.stderr)
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
