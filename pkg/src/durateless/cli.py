"""Command-line workflows: analyze, simulate, optimize, design.

Exit codes: 0 success, 1 I/O failure, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, analysis, optimize, sim
from .codec import EnsembleError
from .specfile import SPEC_FORMAT_VERSION, SpecError, ensemble_from_dict, ensemble_to_dict, load_spec

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2
THREADS_ENV = "DURATELESS_THREADS"

log = logging.getLogger("durateless")


class InvalidInput(Exception):
    pass


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "na"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _write_atomic(path: Optional[str], text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename; ``None`` means stdout."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _gamma_grid(text: Optional[str], default: float) -> list[float]:
    if not text:
        return [default]
    try:
        grid = [float(tok) for tok in text.replace(";", ",").split(",") if tok.strip()]
    except ValueError as exc:
        raise InvalidInput(f"bad --gamma-grid: {exc}") from exc
    if not grid or any(not (g > 0 and math.isfinite(g)) for g in grid):
        raise InvalidInput("--gamma-grid entries must be positive numbers")
    return grid


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInput(f"{THREADS_ENV} must be an integer, got {env!r}")
    return 1


ANALYZE_HEADER = ["gamma", "ber1", "ber2", "iterations", "converged"]
SIMULATE_HEADER = [
    "gamma", "k", "trials", "ber1_mean", "ber1_stderr", "ber2_mean", "ber2_stderr",
    "analytical_ber1", "analytical_ber2", "pass1", "pass2",
]
FRONT_HEADER = ["ber1", "ber2", "eta"]


def cmd_analyze(args) -> int:
    ensemble = load_spec(args.spec)
    rows = analysis.ber_curve(ensemble, _gamma_grid(args.gamma_grid, ensemble.gamma))
    _write_atomic(args.out, _csv_text(ANALYZE_HEADER, rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    ensemble = load_spec(args.spec)
    k = args.k if args.k is not None else (ensemble.k or 2000)
    if args.trials < 1:
        raise InvalidInput("--trials must be >= 1")
    grid = _gamma_grid(args.gamma_grid, ensemble.gamma)
    try:
        batches = sim.sweep_gamma(ensemble, k, grid, args.trials, args.seed, workers=_threads(args))
    except EnsembleError as exc:
        raise InvalidInput(str(exc)) from exc
    rows = []
    for batch in batches:
        c = sim.compare_with_analysis(batch)
        rows.append([c.gamma, c.k, c.trials, c.ber1_mean, c.ber1_stderr, c.ber2_mean,
                     c.ber2_stderr, c.analytical_ber1, c.analytical_ber2, c.pass1, c.pass2])
    _write_atomic(args.out, _csv_text(SIMULATE_HEADER, rows))
    return EXIT_OK


def _optimize_settings(args) -> tuple[optimize.Problem, optimize.GAConfig, int]:
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{args.config}: not valid JSON ({exc})") from exc
        if not isinstance(cfg, dict):
            raise InvalidInput("config must be a JSON object")

    def pick(flag, key, default):
        value = getattr(args, flag)
        return value if value is not None else cfg.get(key, default)

    try:
        problem = optimize.Problem(
            rho=float(pick("rho", "rho", 1.0)),
            gamma=float(pick("gamma", "gamma", 1.05)),
            b1=int(pick("B1", "B1", 100)),
            b2=int(pick("B2", "B2", 100)),
        )
        config = optimize.GAConfig(
            population=int(pick("pop", "population", 100)),
            generations=int(pick("gens", "generations", 200)),
            crossover_prob=float(cfg.get("crossover_prob", 0.9)),
            sbx_eta=float(cfg.get("sbx_eta", 15.0)),
            mutation_eta=float(cfg.get("mutation_eta", 20.0)),
            mutation_prob=cfg.get("mutation_prob"),
        )
        seed = int(pick("seed", "seed", 0))
    except (TypeError, ValueError) as exc:
        raise InvalidInput(str(exc)) from exc
    if not 0 < problem.rho <= 1:
        raise InvalidInput("--rho must be in (0, 1]")
    if not problem.gamma > 0:
        raise InvalidInput("--gamma must be positive")
    if problem.b1 < 1 or problem.b2 < 1:
        raise InvalidInput("--B1 and --B2 must be >= 1")
    if seed < 0:
        raise InvalidInput("--seed must be nonnegative")
    return problem, config, seed


def cmd_optimize(args) -> int:
    problem, config, seed = _optimize_settings(args)
    front = optimize.evolve(problem, config, seed)
    records = [optimize.point_record(p, problem.rho, problem.gamma) for p in front]
    rows = [(r["ber1"], r["ber2"], r["eta"]) for r in records]
    params = {
        "format_version": SPEC_FORMAT_VERSION,
        "rho": problem.rho,
        "gamma": problem.gamma,
        "B1": problem.b1,
        "B2": problem.b2,
        "population": config.population,
        "generations": config.generations,
        "seed": seed,
        "hypervolume": front.hypervolume_history[-1],
        "points": records,
    }
    csv_text = _csv_text(FRONT_HEADER, rows)
    json_text = json.dumps(params, indent=1) + "\n"
    _write_atomic(args.out_front, csv_text)
    if args.out_params:
        _write_atomic(args.out_params, json_text)
    return EXIT_OK


def cmd_design(args) -> int:
    if not args.eta > 0:
        raise InvalidInput("--eta must be positive")
    text = Path(args.front).read_text()
    try:
        doc = json.loads(text)
        records = doc["points"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InvalidInput(f"{args.front}: not a front parameter file ({exc})") from exc
    if not records:
        raise InvalidInput(f"{args.front}: front is empty")
    points = []
    for r in records:
        ensemble_from_dict(r)  # validates the stored ensemble
        points.append((optimize.DesignPoint(None, float(r["ber1"]), float(r["ber2"])), r))
    chosen = optimize.select_by_eta([p for p, _ in points], args.eta)
    record = next(r for p, r in points if p is chosen)
    spec = ensemble_to_dict(ensemble_from_dict(record))
    sys.stdout.write(json.dumps(spec, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="durateless",
        description="Analyze, simulate and design two-source DU-rateless codes.",
        epilog="Exit codes: 0 success, 1 I/O failure, 2 invalid input. "
        f"{THREADS_ENV} sets the default worker count.",
    )
    parser.add_argument(
        "--version", action="version",
        version=f"durateless {__version__} (spec format {SPEC_FORMAT_VERSION})",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="asymptotic BER over a grid of overheads")
    p.add_argument("spec")
    p.add_argument("--gamma-grid", help="comma-separated overheads (default: gamma from the file)")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo BER compared with the analysis")
    p.add_argument("spec")
    p.add_argument("--k", type=int, help="source-2 block length (default: spec k or 2000)")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma-grid")
    p.add_argument("--threads", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="NSGA-II design of degree distributions and relay weights")
    p.add_argument("--config", help="JSON config; flags override its fields")
    p.add_argument("--rho", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--B1", type=int)
    p.add_argument("--B2", type=int)
    p.add_argument("--pop", type=int)
    p.add_argument("--gens", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-front", help="front CSV path (default stdout)")
    p.add_argument("--out-params", help="JSON sidecar with every point's ensemble")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("design", help="pick the front point closest to a target eta")
    p.add_argument("--front", required=True, help="params JSON written by optimize")
    p.add_argument("--eta", type=float, required=True)
    p.set_defaults(func=cmd_design)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SpecError, InvalidInput, optimize.AllZeroBlock) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
