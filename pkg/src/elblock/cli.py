"""Command-line interface: ``elblock analyze | simulate | design-info``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Data go to stdout (or ``--output``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .design import connectivity, read_csv, summarize
from .errors import (BootstrapRedrawError, CalibrationError, DesignError, NumericalError,
                     UnidentifiedHypothesisError)
from .inference import AnalysisRequest, run_analysis
from .simulate import SCENARIOS, ScenarioSpec, evaluate_many, metrics_csv, scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "ELBLOCK_THREADS"


class UsageError(Exception):
    pass


def _probability(text: str) -> float:
    x = float(text)
    if not 0.0 < x < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return x


def _positive(text: str) -> int:
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return x


def _seed(text: str) -> int:
    x = int(text, 0)
    if not 0 <= x < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit nonnegative integer")
    return x


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="elblock",
        description="Empirical likelihood multiple comparisons for block designs.")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", default="-",
                        help="output file (default: stdout)")
    common.add_argument("--threads", type=_positive, default=None,
                        help=f"worker processes; affects wall time only "
                             f"(default: ${THREADS_ENV} or 1)")

    a = sub.add_parser("analyze", parents=[common],
                       help="test contrasts and build simultaneous intervals")
    a.add_argument("--input", "-i", required=True,
                   help="CSV file with header block,treatment,value")
    a.add_argument("--contrasts", default="pairwise",
                   help="'pairwise', expressions like 't3 - t1', or lists like "
                        "'[0,-1,1] = 0.5', separated by ';' (default: pairwise)")
    a.add_argument("--method", choices=("amc", "nb"), default="nb",
                   help="cutoff calibration (default: nb)")
    a.add_argument("--alpha", type=_probability, default=0.05, help="level (default: 0.05)")
    a.add_argument("--v", type=_positive, default=1,
                   help="control the probability of v or more false rejections (default: 1)")
    a.add_argument("--b", dest="b_reps", type=_positive, default=2000,
                   help="Monte Carlo or bootstrap replicates (default: 2000)")
    a.add_argument("--seed", type=_seed, default=0, help="random seed (default: 0)")
    a.add_argument("--format", choices=("json", "csv"), default="json",
                   help="report format (default: json)")
    a.add_argument("--duplicate-policy", choices=("error", "average"), default="error",
                   help="repeated (block, treatment) cells (default: error)")
    a.add_argument("--plus-one", action="store_true",
                   help="use (count + 1) / (B + 1) adjusted p-values")

    s = sub.add_parser("simulate", parents=[common],
                       help="error rates and interval metrics on simulated data")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--scenario", help=f"one of {', '.join(SCENARIOS)}")
    g.add_argument("--spec", help="JSON scenario file (keys n, theta, block, errors)")
    s.add_argument("--n", type=_positive, default=None, help="number of blocks")
    s.add_argument("--theta", default="0,0,0,0,0", help="five comma-separated effects")
    s.add_argument("--method", choices=("amc", "nb", "both"), default="both")
    s.add_argument("--alpha", type=_probability, default=0.05)
    s.add_argument("--v", default="1", help="comma-separated v values (default: 1)")
    s.add_argument("--S", dest="runs", type=_positive, default=1000, help="simulation runs")
    s.add_argument("--b", dest="b_reps", type=_positive, default=2000, help="replicates per run")
    s.add_argument("--seed", type=_seed, default=0)
    s.add_argument("--no-intervals", action="store_true",
                   help="skip intervals (AL and CP are reported as nan)")

    d = sub.add_parser("design-info", parents=[common], help="summarize a design")
    d.add_argument("--input", "-i", required=True)
    d.add_argument("--format", choices=("text", "json"), default="text")
    d.add_argument("--duplicate-policy", choices=("error", "average"), default="error")
    return ap


def _write(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _read_design(path: str, policy: str):
    try:
        return read_csv(path, policy)
    except OSError as exc:
        raise DesignError(f"cannot read {path}: {exc.strerror or exc}") from None


def cmd_analyze(args) -> int:
    design = _read_design(args.input, args.duplicate_policy)
    try:
        req = AnalysisRequest(design, args.contrasts, args.method, args.alpha, args.v,
                              args.b_reps, args.seed, args.plus_one, args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    rep = run_analysis(req)
    rep.config.update({"input": args.input, "contrasts_spec": args.contrasts,
                       "duplicate_policy": args.duplicate_policy, "format": args.format})
    _write(rep.to_json() if args.format == "json" else rep.to_csv(), args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        vs = tuple(int(x) for x in args.v.split(","))
        if args.spec:
            with open(args.spec, encoding="utf-8") as fh:
                raw = json.load(fh)
            if args.n is not None:
                raw["n"] = args.n
            spec = ScenarioSpec.from_dict(raw)
        else:
            if args.n is None:
                raise UsageError("--n is required with --scenario")
            theta = tuple(float(x) for x in args.theta.split(","))
            spec = scenario(args.scenario, args.n, theta)
    except OSError as exc:
        raise DesignError(f"cannot read {args.spec}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    methods = ("amc", "nb") if args.method == "both" else (args.method,)
    reps = evaluate_many(spec, methods, vs, alpha=args.alpha, runs=args.runs,
                         b_reps=args.b_reps, seed=args.seed, workers=args.threads,
                         intervals=not args.no_intervals)
    config = {"scenario": spec.name, "n": spec.n, "theta": list(spec.theta),
              "block": str(spec.block), "errors": [str(e) for e in spec.errors],
              "method": args.method, "alpha": args.alpha, "v": list(vs), "runs": args.runs,
              "b_reps": args.b_reps, "seed": args.seed, "intervals": not args.no_intervals}
    text = "# config: " + json.dumps(config, separators=(",", ":")) + "\n"
    _write(text + metrics_csv(reps.values()), args.output)
    return EXIT_OK


def cmd_design_info(args) -> int:
    design = _read_design(args.input, args.duplicate_policy)
    summ = summarize(design)
    comps = [[design.treatment_labels[k] for k in c] for c in connectivity(design)]
    info = summ.to_dict()
    info["treatment_labels"] = list(design.treatment_labels)
    info["components"] = comps
    info["connected"] = len(comps) == 1
    info["duplicate_cells"] = design.duplicate_warnings
    if args.format == "json":
        _write(json.dumps(info, indent=2) + "\n", args.output)
        return EXIT_OK
    labels = design.treatment_labels
    width = max(len(x) for x in labels) + 2
    lines = [f"blocks: {design.n_blocks}", f"treatments: {design.n_treatments}",
             f"block sizes: {sorted(set(summ.block_sizes.tolist()))}",
             "replications: " + ", ".join(f"{t}={r}" for t, r in zip(labels, summ.replications)),
             f"min replication / n: {summ.min_replication_ratio:.4g}",
             "concurrence:",
             " " * width + "".join(f"{t:>{width}}" for t in labels)]
    for t, row in zip(labels, summ.concurrence):
        lines.append(f"{t:>{width}}" + "".join(f"{x:>{width}}" for x in row))
    if info["connected"]:
        lines.append("connected: yes")
    else:
        lines.append(f"connected: no ({len(comps)} components)")
        for i, c in enumerate(comps, 1):
            lines.append(f"  component {i}: {', '.join(c)}")
    _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "design-info": cmd_design_info}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.threads is None:
        args.threads = _default_threads()
    np.seterr(all="ignore")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"elblock: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DesignError, UnidentifiedHypothesisError) as exc:
        print(f"elblock: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, CalibrationError, BootstrapRedrawError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"elblock: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
