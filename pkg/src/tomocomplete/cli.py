"""Command-line interface.

Subcommands: ``construct`` (emit a measurement file), ``complete``
(Schur-based reconstruction from a record), ``check`` (completeness
certification), ``estimate`` (convex least squares), and ``run``
(experiment configs).  All files are the JSON schemas of
:mod:`tomocomplete.serialize`.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .completeness import certify_strictness, check_rank_r_complete, uniqueness_probe
from .completion import complete_extracted
from .constructions import CONSTRUCTION_KINDS, build_construction
from .estimator import EstimatorOptions, psd_least_squares
from .harness import ExperimentConfig, evaluate_thresholds, run_experiment
from .linalg import FailureSetError, random_rank_r_state, rank_with_tol
from .povm import EpPovm, extract_elements
from . import serialize


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tomocomplete",
        description="Bounded-rank state tomography as PSD matrix completion",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build an element-probing measurement")
    c.add_argument("--kind", required=True, choices=CONSTRUCTION_KINDS)
    c.add_argument("--dim", required=True, type=int)
    c.add_argument("--rank", type=int)
    c.add_argument("--k", type=int)
    c.add_argument("--a", type=float)
    c.add_argument("--b", type=float)
    c.add_argument("--out", required=True)

    m = sub.add_parser("complete", help="reconstruct a state from a record")
    m.add_argument("--povm", required=True)
    m.add_argument("--record", required=True)
    m.add_argument("--rank", required=True, type=int)
    m.add_argument("--tol", type=float)
    m.add_argument("--out", required=True)
    m.add_argument("--report")

    k = sub.add_parser("check", help="certify completeness properties")
    k.add_argument("--kind", required=True, choices=("complete", "strict", "probe"))
    k.add_argument("--povm", required=True)
    k.add_argument("--dim", type=int)
    k.add_argument("--rank", required=True, type=int)
    k.add_argument("--trials", type=int, default=50)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--report", required=True)

    e = sub.add_parser("estimate", help="convex least-squares estimation")
    e.add_argument("--povm", required=True)
    e.add_argument("--record", required=True)
    e.add_argument("--opts")
    e.add_argument("--out", required=True)
    e.add_argument("--report")

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out-dir", required=True)
    return parser


def _cmd_construct(args) -> int:
    ep = build_construction(
        args.kind, args.dim, rank=args.rank, k=args.k, a=args.a, b=args.b
    )
    serialize.save_povm(ep, args.out)
    print(f"wrote {args.kind} measurement (dim {ep.dim}, "
          f"{ep.n_outcomes} outcomes) to {args.out}")
    return 0


def _load_ep(path) -> EpPovm:
    loaded = serialize.load_povm(path)
    if not isinstance(loaded, EpPovm):
        raise SystemExit("measurement file carries no element-probing data")
    return loaded


def _cmd_complete(args) -> int:
    ep = _load_ep(args.povm)
    record = serialize.load_record(args.record)
    partial = extract_elements(ep, record)
    try:
        report = complete_extracted(ep, partial, args.rank, args.tol)
    except FailureSetError as exc:
        print(f"completion failed: {exc}", file=sys.stderr)
        return 1
    serialize.save_matrix(report.completed, args.out)
    if args.report:
        serialize.dump_json(
            {
                "window_conditions": report.window_conditions,
                "failure_flags": report.failure_flags,
                "min_eigenvalue": report.min_eigenvalue,
                "served_by": {f"{i},{j}": plan for (i, j), plan in sorted(report.served_by.items())},
            },
            args.report,
        )
    print(f"completed state written to {args.out} "
          f"(min eigenvalue {report.min_eigenvalue:.3e})")
    return 0


def _cmd_check(args) -> int:
    ep = _load_ep(args.povm)
    if args.dim is not None and args.dim != ep.dim:
        raise SystemExit(f"--dim {args.dim} does not match measurement dim {ep.dim}")
    if args.kind == "complete":
        verdict = check_rank_r_complete(ep, args.rank, trials=args.trials, seed=args.seed)
        payload = {
            "verdict": verdict.kind,
            "trials": verdict.trials,
            "max_error": verdict.max_error,
            "failure_draws": verdict.failure_draws,
            "params": verdict.params,
        }
    elif args.kind == "strict":
        verdict = certify_strictness(ep, args.rank, trials=args.trials, seed=args.seed)
        payload = {
            "verdict": verdict.kind,
            "trials": verdict.trials,
            "max_error": verdict.max_error,
            "failure_draws": verdict.failure_draws,
            "params": verdict.params,
        }
    else:
        rho = random_rank_r_state(ep.dim, args.rank, args.seed)
        probe = uniqueness_probe(ep, ep.exact_record(rho), seed=args.seed)
        payload = {
            "verdict": "witness_found" if probe.witness is not None else "unique_at_probe_state",
            "spread": probe.spread,
            "spreads": probe.spreads,
            "witness_rank": None if probe.witness is None else rank_with_tol(probe.witness, 1e-6),
            "params": probe.params,
        }
    serialize.dump_json(payload, args.report)
    print(f"{args.kind} check: {payload['verdict']} (report: {args.report})")
    return 0


def _cmd_estimate(args) -> int:
    loaded = serialize.load_povm(args.povm)
    record = serialize.load_record(args.record)
    opts = EstimatorOptions()
    if args.opts:
        opts = EstimatorOptions(**serialize.load_json(args.opts))
    report = psd_least_squares(loaded, record, opts)
    serialize.save_matrix(report.estimate, args.out)
    if args.report:
        serialize.dump_json(
            {
                "objective": report.objective,
                "iterations": report.iterations,
                "converged": report.converged,
                "record_residual": report.record_residual,
            },
            args.report,
        )
    print(f"estimate written to {args.out} (objective {report.objective:.3e}, "
          f"{'converged' if report.converged else 'not converged'})")
    return 0


def _cmd_run(args) -> int:
    cfg = ExperimentConfig.from_obj(serialize.load_json(args.config))
    report = run_experiment(cfg)
    csv_path, json_path = report.write(args.out_dir)
    violations = evaluate_thresholds(report, cfg.thresholds)
    print(f"wrote {csv_path} and {json_path} ({len(report.rows)} rows)")
    for v in violations:
        print(f"threshold violation: {v}", file=sys.stderr)
    return 2 if violations else 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    np.set_printoptions(legacy=False)
    handlers = {
        "construct": _cmd_construct,
        "complete": _cmd_complete,
        "check": _cmd_check,
        "estimate": _cmd_estimate,
        "run": _cmd_run,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
