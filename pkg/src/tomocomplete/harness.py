"""Experiment runner: simulate, measure, reconstruct, score.

Five closed experiment kinds cover the library's end-to-end stories:
noiseless exact recovery, shot-noise scaling of the convex estimate,
degradation near the measurement's failure set, iterative rank
refinement, and the strictness separation between the four- and
five-basis protocols.

Reports are fully deterministic: trial seeds derive from the config seed
and the sweep point, metadata carries tolerances instead of timestamps,
and rerunning a config yields byte-identical files.  Trials parallelize
across a process pool sized by the ``TOMO_THREADS`` environment variable;
aggregation is order-stable either way.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__ as _version
from .completion import complete_band, complete_rows_cols
from .constructions import (
    basis_povm,
    build_construction,
    computational_basis,
    example1_slice,
    example2_bases,
    goyeneche_bases,
)
from .estimator import (
    EstimatorOptions,
    project_psd_trace1,
    psd_least_squares,
    rank_r_truncation,
)
from .linalg import FailureSetError, fidelity, infidelity, random_rank_r_state, rank_with_tol
from .patterns import PartialMatrix, rows_cols_pattern
from .povm import MeasurementRecord, born_probabilities
from .completeness import uniqueness_probe

EXPERIMENT_KINDS = (
    "noiseless_sweep",
    "shot_sweep",
    "failure_ball",
    "iterative_refinement",
    "strictness_separation",
)

_CSV_COLUMNS = (
    "experiment", "construction", "dim", "rank", "shots",
    "epsilon", "k", "trial", "metric", "value",
)


@dataclass
class ExperimentConfig:
    kind: str
    dims: list[int] = field(default_factory=lambda: [8])
    ranks: list[int] = field(default_factory=lambda: [1])
    shots: list[int] = field(default_factory=list)
    trials: int = 10
    seed: int = 0
    construction: str = "example2"
    params: dict = field(default_factory=dict)
    thresholds: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.dims or not self.ranks:
            raise ValueError("dims and ranks must be non-empty")

    @classmethod
    def from_obj(cls, obj: dict) -> "ExperimentConfig":
        return cls(**obj)

    def to_obj(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    rows: list[dict]
    metadata: dict

    def to_csv_text(self) -> str:
        lines = [",".join(_CSV_COLUMNS)]
        for row in self.rows:
            cells = []
            for col in _CSV_COLUMNS:
                v = row.get(col, "")
                if isinstance(v, float):
                    v = repr(float(v))
                cells.append(str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> tuple[str, str]:
        import json
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "rows.csv"
        json_path = out / "report.json"
        csv_path.write_text(self.to_csv_text())
        json_path.write_text(
            json.dumps({"metadata": self.metadata, "rows": self.rows},
                       indent=2, sort_keys=True) + "\n"
        )
        return str(csv_path), str(json_path)

    def values(self, metric: str, **point) -> list[float]:
        out = []
        for row in self.rows:
            if row["metric"] != metric:
                continue
            if all(row.get(k) == v for k, v in point.items()):
                out.append(row["value"])
        return out


def _trial_seed(*key) -> np.random.SeedSequence:
    return np.random.SeedSequence(tuple(int(k) for k in key))


def _pool_size() -> int:
    return max(1, int(os.environ.get("TOMO_THREADS", "1")))


def _map_trials(fn, items: list):
    n = _pool_size()
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        chunk = max(1, len(items) // (4 * n))
        return list(pool.map(fn, items, chunksize=chunk))


def _metadata(cfg: ExperimentConfig, tolerances: dict) -> dict:
    return {
        "tool_version": _version,
        "config": cfg.to_obj(),
        "tolerances": tolerances,
    }


def _valid_combo(construction: str, d: int, r: int) -> bool:
    if r > d:
        return False
    if construction == "example2":
        return d & (d - 1) == 0 and 1 <= r <= d // 2
    return True


# ---------------------------------------------------------------- noiseless


def _noiseless_trial(args):
    ep, d, r, trial, seed = args
    rho = random_rank_r_state(d, r, _trial_seed(seed, 0, d, r, trial))
    partial = ep.extract(ep.exact_record(rho))
    completer = complete_rows_cols if ep.kind in ("flammia", "example1") else complete_band
    try:
        report = completer(partial, r)
    except FailureSetError:
        return {"failure_set_draw": 1.0}
    return {
        "infidelity": infidelity(project_psd_trace1(report.completed), rho),
        "max_entry_error": float(np.abs(report.completed - rho).max()),
        "flagged_windows": float(len(report.failure_flags)),
    }


def run_noiseless_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Exact measure/extract/complete loops over the (dim, rank) sweep."""
    rows = []
    for d in cfg.dims:
        for r in cfg.ranks:
            if not _valid_combo(cfg.construction, d, r):
                continue
            ep = build_construction(cfg.construction, d, rank=r)
            args = [(ep, d, r, t, cfg.seed) for t in range(cfg.trials)]
            for trial, metrics in enumerate(_map_trials(_noiseless_trial, args)):
                for metric, value in metrics.items():
                    rows.append({
                        "experiment": cfg.kind, "construction": cfg.construction,
                        "dim": d, "rank": r, "trial": trial,
                        "metric": metric, "value": float(value),
                    })
    return ExperimentReport(rows, _metadata(cfg, {"window_tol": "1e-8 * window trace"}))


# ---------------------------------------------------------------- shot sweep


def _shot_trial(args):
    ep, d, r, shots, trial, seed, opts = args
    rho = random_rank_r_state(d, r, _trial_seed(seed, 1, d, r, trial))
    exact = ep.exact_record(rho)
    if shots == 0:
        record = exact
    else:
        record = ep.sample(exact, shots, _trial_seed(seed, 2, d, r, trial, shots))
    report = psd_least_squares(ep, record, opts)
    return {
        "infidelity": infidelity(report.estimate, rho),
        "infidelity_rank_r": infidelity(rank_r_truncation(report.estimate, r), rho),
        "iterations": float(report.iterations),
        "converged": float(report.converged),
        "objective": report.objective,
    }


def run_shot_sweep(cfg: ExperimentConfig) -> ExperimentReport:
    """Finite-shot records through the convex estimator.

    ``shots`` of 0 means the exact record (infinite-shot mode).  Both the
    convex estimate's infidelity and the infidelity of its bounded-rank
    reduction are recorded; the latter is the protocol's rank-r estimate
    and is the quantity with quadratic noise response.
    """
    opts = EstimatorOptions(
        max_iters=int(cfg.params.get("max_iters", 20000)),
        grad_tol=float(cfg.params.get("grad_tol", 1e-9)),
    )
    rows = []
    for d in cfg.dims:
        for r in cfg.ranks:
            if not _valid_combo(cfg.construction, d, r):
                continue
            ep = build_construction(cfg.construction, d, rank=r)
            for shots in cfg.shots or [0]:
                args = [(ep, d, r, shots, t, cfg.seed, opts) for t in range(cfg.trials)]
                for trial, metrics in enumerate(_map_trials(_shot_trial, args)):
                    for metric, value in metrics.items():
                        rows.append({
                            "experiment": cfg.kind, "construction": cfg.construction,
                            "dim": d, "rank": r, "shots": shots, "trial": trial,
                            "metric": metric, "value": float(value),
                        })
    return ExperimentReport(
        rows, _metadata(cfg, {"grad_tol": opts.grad_tol, "max_iters": opts.max_iters})
    )


# ---------------------------------------------------------------- failure ball


def ball_state(d: int, epsilon: float, seed) -> np.ndarray:
    """Pure state with weight exactly ``epsilon`` on level 0."""
    rng = np.random.default_rng(seed)
    phi = rng.standard_normal(d - 1) + 1j * rng.standard_normal(d - 1)
    phi /= np.linalg.norm(phi)
    psi = np.concatenate([[np.sqrt(epsilon)], np.sqrt(1 - epsilon) * phi])
    rho = np.outer(psi, psi.conj())
    rho[0, 0] = epsilon  # pin the matrix element free of sqrt rounding
    return (rho + rho.conj().T) / 2


def _ball_trial(args):
    ep, d, epsilon, shots, trial, seed, opts = args
    rho = ball_state(d, epsilon, _trial_seed(seed, 3, trial))
    partial = ep.extract(ep.exact_record(rho))
    out = {}
    try:
        report = complete_rows_cols(partial, 1)
        out["sigma_min"] = report.window_conditions[0]
    except FailureSetError as exc:
        out["sigma_min"] = exc.sigma_min
        out["failure_set_draw"] = 1.0
    record = ep.sample(ep.exact_record(rho), shots, _trial_seed(seed, 4, trial))
    est = psd_least_squares(ep, record, opts)
    out["est_infidelity"] = infidelity(est.estimate, rho)
    return out


def run_failure_ball(cfg: ExperimentConfig) -> ExperimentReport:
    """Estimation quality for states approaching the failure set.

    For the row/column-0 probing POVM the completion block is the bare
    element ``rho[0, 0]``, so its smallest singular value equals the ball
    radius exactly; the estimate degrades as the radius shrinks below the
    statistical resolution.
    """
    if cfg.construction not in ("flammia", "example1"):
        raise ValueError("failure_ball runs on the flammia or example1 construction")
    d = cfg.dims[0]
    shots = cfg.shots[0] if cfg.shots else 10**4
    epsilons = cfg.params.get("epsilons", [10.0**-k for k in range(1, 7)])
    opts = EstimatorOptions(
        max_iters=int(cfg.params.get("max_iters", 20000)),
        grad_tol=float(cfg.params.get("grad_tol", 1e-9)),
    )
    ep = build_construction(cfg.construction, d, rank=1)
    rows = []
    for epsilon in epsilons:
        args = [(ep, d, float(epsilon), shots, t, cfg.seed, opts) for t in range(cfg.trials)]
        for trial, metrics in enumerate(_map_trials(_ball_trial, args)):
            for metric, value in metrics.items():
                rows.append({
                    "experiment": cfg.kind, "construction": cfg.construction,
                    "dim": d, "rank": 1, "shots": shots, "epsilon": float(epsilon),
                    "trial": trial, "metric": metric, "value": float(value),
                })
    return ExperimentReport(rows, _metadata(cfg, {"shots": shots}))


# ------------------------------------------------------- iterative refinement


def refine_by_slices(d: int, target_rank: int, rho: np.ndarray):
    """Rank-k estimates from the first k probe slices, k = 1..target_rank."""
    estimates = []
    values: dict[tuple[int, int], complex] = {}
    for k in range(target_rank):
        ep_k = example1_slice(d, k)
        part_k = ep_k.extract(ep_k.exact_record(rho))
        for i, j in part_k.pattern.indices:
            values[(i, j)] = part_k.matrix[i, j]
        merged = PartialMatrix(rows_cols_pattern(d, k + 1), values)
        report = complete_rows_cols(merged, k + 1)
        estimates.append(project_psd_trace1(report.completed))
    return estimates


def refine_by_bases(d: int, target_rank: int, rho: np.ndarray):
    """Rank-k estimates from the first 4k+1 bases, k = 1..target_rank.

    Basis nesting means the full record's leading blocks are exactly the
    rank-k measurement's record."""
    _, ep_full = example2_bases(d, target_rank)
    full = ep_full.exact_record(rho)
    estimates = []
    for k in range(1, target_rank + 1):
        _, ep_k = example2_bases(d, k)
        prefix = MeasurementRecord(full.probs[: ep_k.n_outcomes])
        report = complete_band(ep_k.extract(prefix), k)
        estimates.append(project_psd_trace1(report.completed))
    return estimates


def _refinement_trial(args):
    construction, d, target_rank, trial, seed = args
    rho = random_rank_r_state(d, target_rank, _trial_seed(seed, 5, trial))
    refine = refine_by_slices if construction in ("flammia", "example1") else refine_by_bases
    try:
        estimates = refine(d, target_rank, rho)
    except FailureSetError:
        return [{"failure_set_draw": 1.0}]
    return [{"fidelity": fidelity(est, rho)} for est in estimates]


def run_iterative_refinement(cfg: ExperimentConfig) -> ExperimentReport:
    """Fidelity of the rank-k estimate as slices/bases accumulate."""
    d = cfg.dims[0]
    target_rank = max(cfg.ranks)
    rows = []
    args = [(cfg.construction, d, target_rank, t, cfg.seed) for t in range(cfg.trials)]
    for trial, per_k in enumerate(_map_trials(_refinement_trial, args)):
        for k, metrics in enumerate(per_k, start=1):
            for metric, value in metrics.items():
                rows.append({
                    "experiment": cfg.kind, "construction": cfg.construction,
                    "dim": d, "rank": target_rank, "k": k, "trial": trial,
                    "metric": metric, "value": float(value),
                })
    return ExperimentReport(rows, _metadata(cfg, {"records": "exact"}))


# ---------------------------------------------------- strictness separation


def five_basis_protocol(d: int):
    """Computational basis plus the four probing bases: the strictly
    complete five-basis measurement."""
    _, ep4 = goyeneche_bases(d)
    return [basis_povm(computational_basis(d))] + list(ep4.povms)


def _separation_trial(args):
    d, trial, seed, probes, probe_tol = args
    rho = random_rank_r_state(d, 1, _trial_seed(seed, 6, trial))
    probe_seed = int(_trial_seed(seed, 7, trial).generate_state(1)[0])
    _, ep4 = goyeneche_bases(d)
    rec4 = ep4.exact_record(rho)
    four = uniqueness_probe(ep4, rec4, probes=probes, seed=probe_seed, tol=probe_tol)
    out = {"spread_4basis": four.spread, "witness_found": float(four.witness is not None)}
    if four.witness is not None:
        out["witness_rank"] = float(rank_with_tol(four.witness, 1e-6))
        out["witness_distance"] = float(np.linalg.norm(four.witness - rho))
        out["witness_residual"] = float(four.witness_residual)
    five = five_basis_protocol(d)
    rec5 = MeasurementRecord(
        np.concatenate([born_probabilities(p, rho).probs for p in five])
    )
    out["spread_5basis"] = uniqueness_probe(
        five, rec5, probes=probes, seed=probe_seed, tol=probe_tol
    ).spread
    return out


def run_strictness_separation(cfg: ExperimentConfig) -> ExperimentReport:
    """Probe spread on the four-basis record vs the five-basis record for
    the same pure states."""
    d = cfg.dims[0]
    probes = int(cfg.params.get("probes", 8))
    probe_tol = float(cfg.params.get("probe_tol", 1e-6))
    rows = []
    args = [(d, t, cfg.seed, probes, probe_tol) for t in range(cfg.trials)]
    for trial, metrics in enumerate(_map_trials(_separation_trial, args)):
        for metric, value in metrics.items():
            rows.append({
                "experiment": cfg.kind, "construction": "goyeneche4",
                "dim": d, "rank": 1, "trial": trial,
                "metric": metric, "value": float(value),
            })
    return ExperimentReport(rows, _metadata(cfg, {"probe_tol": probe_tol}))


_RUNNERS = {
    "noiseless_sweep": run_noiseless_sweep,
    "shot_sweep": run_shot_sweep,
    "failure_ball": run_failure_ball,
    "iterative_refinement": run_iterative_refinement,
    "strictness_separation": run_strictness_separation,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return _RUNNERS[cfg.kind](cfg)


def evaluate_thresholds(report: ExperimentReport, thresholds: list[dict]) -> list[str]:
    """Threshold clauses: {"metric", "agg": max|min|median, "max"/"min",
    optional "where": {column: value}}.  Returns violation messages."""
    aggs = {"max": max, "min": min, "median": lambda v: float(np.median(v))}
    violations = []
    for clause in thresholds:
        where = clause.get("where", {})
        vals = report.values(clause["metric"], **where)
        if not vals:
            violations.append(f"no rows matched metric {clause['metric']} where {where}")
            continue
        agg = aggs[clause.get("agg", "max")](vals)
        if "max" in clause and agg > clause["max"]:
            violations.append(
                f"{clause.get('agg', 'max')}({clause['metric']}) = {agg:.3e} "
                f"exceeds {clause['max']:.3e}"
            )
        if "min" in clause and agg < clause["min"]:
            violations.append(
                f"{clause.get('agg', 'max')}({clause['metric']}) = {agg:.3e} "
                f"below {clause['min']:.3e}"
            )
    return violations
