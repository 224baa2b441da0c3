"""Density-matrix completion from measured element patterns.

A rank-r PSD matrix whose block ``A`` (r x r, nonsingular) and borders
``B`` are known has its remaining block pinned at ``C = B A^-1 B^dag``:
rank additivity forces the Schur complement to vanish.  Two pattern
families are supported:

* first r rows/columns (``complete_rows_cols``): one global window;
* cyclic band of width r (``complete_band``): a sweep of growing principal
  windows reconstructs one diagonal at a time, with an independent
  wraparound plan as fallback when an interior block is singular.

Completion is exact on noiseless rank-r inputs and purely diagnostic on
noisy ones; positivity repair belongs to the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import FailureSetError, smallest_singular_value
from .patterns import ElementPattern, PartialMatrix, band_pattern, rows_cols_pattern

BASE_WINDOW_TOL = 1e-8


@dataclass(frozen=True)
class Window:
    """One completion step: solve ``target`` from the principal submatrix
    on ``window_indices`` using the nonsingular block at ``a_indices``."""

    window_indices: tuple[int, ...]
    a_indices: tuple[int, ...]
    target: tuple[int, int]
    plan: str  # "M" (direct) or "M'" (wraparound)
    stage: int


@dataclass(frozen=True)
class CompletionPlan:
    dim: int
    rank: int
    windows: tuple[Window, ...]


@dataclass
class CompletionReport:
    completed: np.ndarray = field(repr=False)
    window_conditions: list[float]
    failure_flags: list[int]
    min_eigenvalue: float
    served_by: dict[tuple[int, int], str] = field(default_factory=dict)

    @property
    def any_failures(self) -> bool:
        return bool(self.failure_flags)


def _effective_tol(matrix: np.ndarray, window: Sequence[int], tol: float | None) -> float:
    """Scale-aware singularity threshold: BASE * trace of the window."""
    if tol is not None:
        return float(tol)
    tr = float(np.real(np.trace(matrix[np.ix_(window, window)])))
    return BASE_WINDOW_TOL * max(tr, np.finfo(float).tiny)


def complete_rows_cols(
    partial: PartialMatrix, r: int, tol: float | None = None
) -> CompletionReport:
    """Complete a matrix measured on its first r rows and columns.

    ``A`` is the leading r x r block and ``B`` the remaining rows of the
    first r columns; the unmeasured block is set to ``B A^-1 B^dag``.
    Raises :class:`FailureSetError` when ``A`` is singular within
    tolerance (the states this measurement cannot reconstruct).
    """
    d = partial.dim
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}")
    required = rows_cols_pattern(d, r)
    if not required.indices <= partial.pattern.indices:
        raise ValueError("pattern does not cover the first r rows and columns")
    m = partial.matrix.copy()
    if r == d:
        return CompletionReport(m, [], [], float(np.linalg.eigvalsh(m)[0]))
    eff_tol = _effective_tol(m, range(d), tol)
    a = m[:r, :r]
    sigma_min = smallest_singular_value(a)
    if sigma_min <= eff_tol:
        raise FailureSetError(range(r), sigma_min, eff_tol)
    b = m[r:, :r]
    c = b @ np.linalg.solve(a, b.conj().T)
    m[r:, r:] = (c + c.conj().T) / 2.0
    return CompletionReport(
        completed=m,
        window_conditions=[sigma_min],
        failure_flags=[],
        min_eigenvalue=float(np.linalg.eigvalsh(m)[0]),
    )


def build_band_plan(d: int, r: int, wraparound: bool) -> CompletionPlan:
    """Window schedule for band-pattern completion.

    The direct plan reconstructs diagonal t (ascending, t = r+1 ..) with
    windows {i .. i+t} whose interior block {i+1 .. i+r} serves as ``A``
    and whose corner (i, i+t) is the target.  With wraparound data a
    second plan covers each element again through the window running the
    other way around the index circle, giving per-target redundancy with a
    disjoint ``A`` block.
    """
    if not 1 <= r < d - 1:
        raise ValueError(f"need 1 <= r < d-1, got r={r}, d={d}")
    windows: list[Window] = []
    t_max = d - 1 - r if wraparound else d - 1
    for t in range(r + 1, t_max + 1):
        for i in range(0, d - t):
            windows.append(
                Window(
                    window_indices=tuple(range(i, i + t + 1)),
                    a_indices=tuple(range(i + 1, i + r + 1)),
                    target=(i, i + t),
                    plan="M",
                    stage=t,
                )
            )
    if wraparound:
        for t in range(r + 1, d - r):
            for i in range(0, d - t):
                n = i + t
                windows.append(
                    Window(
                        window_indices=tuple((n + q) % d for q in range(d - t + 1)),
                        a_indices=tuple((n + 1 + q) % d for q in range(r)),
                        target=(n, i),
                        plan="M'",
                        stage=d - t,
                    )
                )
    windows.sort(key=lambda w: (w.stage, w.plan, w.window_indices))
    return CompletionPlan(d, r, tuple(windows))


def solve_window(
    values: np.ndarray, window: Window, tol: float | None = None
) -> complex:
    """Schur-predict the window's target entry from known values.

    Only the ``A`` block and the borders ``B`` (window rows against the
    ``A`` columns) enter the corner of ``B A^-1 B^dag``, so the other
    unmeasured entries of the window are never touched.
    """
    a = list(window.a_indices)
    rows = [i for i in window.window_indices if i not in set(a)]
    eff_tol = _effective_tol(values, window.window_indices, tol)
    block_a = values[np.ix_(a, a)]
    sigma_min = smallest_singular_value(block_a)
    if sigma_min <= eff_tol:
        raise FailureSetError(a, sigma_min, eff_tol, target=window.target)
    block_b = values[np.ix_(rows, a)]
    c_pred = block_b @ np.linalg.solve(block_a, block_b.conj().T)
    ti, tj = window.target
    return complex(c_pred[rows.index(ti), rows.index(tj)])


def _window_dependencies(window: Window) -> list[tuple[int, int]]:
    """Entries that must be known before the window can run: the window
    rows against the ``A`` columns (which includes ``A`` itself)."""
    return [
        (u, a)
        for u in window.window_indices
        for a in window.a_indices
        if (u, a) != window.target and (a, u) != window.target
    ]


def complete_band(
    partial: PartialMatrix,
    r: int,
    tol: float | None = None,
    wraparound: bool | None = None,
) -> CompletionReport:
    """Complete a matrix measured on the band of diagonals 0..r.

    Runs the direct plan diagonal by diagonal; when the pattern includes
    the wraparound diagonals, each element also has a fallback window and
    a single singular interior block no longer aborts the reconstruction.
    Raises :class:`FailureSetError` only when every plan covering some
    target has failed or stalled.
    """
    d = partial.dim
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}")
    r_eff = min(r, d - 1)  # r = d measures everything, same as r = d-1
    if not band_pattern(d, r_eff, include_wraparound=False).indices <= partial.pattern.indices:
        raise ValueError("pattern does not cover diagonals 0..r")
    if wraparound is None:
        wraparound = (
            band_pattern(d, r_eff, include_wraparound=True).indices
            <= partial.pattern.indices
        )
    m = partial.matrix.copy()
    if r_eff >= d - 1:
        return CompletionReport(m, [], [], float(np.linalg.eigvalsh(m)[0]))
    r = r_eff

    plan = build_band_plan(d, r, wraparound)
    known = partial.pattern.mask()
    conditions = [float("nan")] * len(plan.windows)
    failure_flags: list[int] = []
    failures: dict[tuple[int, int], list[FailureSetError]] = {}
    served: dict[tuple[int, int], str] = {}

    def sweep_to_fixpoint(active: list[int]) -> None:
        progress = True
        while progress:
            progress = False
            for idx in active:
                window = plan.windows[idx]
                ti, tj = window.target
                if known[ti, tj]:
                    continue
                if not all(known[u, v] for u, v in _window_dependencies(window)):
                    continue
                try:
                    value = solve_window(m, window, tol)
                except FailureSetError as exc:
                    if np.isnan(conditions[idx]):
                        conditions[idx] = exc.sigma_min
                        failure_flags.append(idx)
                        failures.setdefault(_upper(window.target), []).append(exc)
                    continue
                conditions[idx] = smallest_singular_value(
                    m[np.ix_(window.a_indices, window.a_indices)]
                )
                m[ti, tj] = value
                m[tj, ti] = np.conj(value)
                known[ti, tj] = known[tj, ti] = True
                served[_upper(window.target)] = window.plan
                progress = True

    # Direct plan first; fallback windows join only for what it left open.
    sweep_to_fixpoint([i for i, w in enumerate(plan.windows) if w.plan == "M"])
    sweep_to_fixpoint(list(range(len(plan.windows))))

    unresolved = [
        (i, j) for i in range(d) for j in range(i + 1, d) if not known[i, j]
    ]
    if unresolved:
        target = unresolved[0]
        errs = failures.get(target, [])
        sigmas = ", ".join(f"{e.sigma_min:.3e}" for e in errs) or "windows never runnable"
        raise FailureSetError(
            errs[0].a_indices if errs else (),
            errs[0].sigma_min if errs else 0.0,
            errs[0].tol if errs else 0.0,
            target=target,
            detail=f"all plans failed for {len(unresolved)} entries (sigma_min: {sigmas})",
        )
    return CompletionReport(
        completed=m,
        window_conditions=conditions,
        failure_flags=sorted(failure_flags),
        min_eigenvalue=float(np.linalg.eigvalsh(m)[0]),
        served_by=served,
    )


def _upper(pair: tuple[int, int]) -> tuple[int, int]:
    i, j = pair
    return (i, j) if i <= j else (j, i)


def default_completer(ep_kind: str):
    """Completion routine matching a construction kind, or ``None`` when
    the measured pattern supports no engine (e.g. the four-basis set,
    whose pattern lacks the principal diagonal)."""
    if ep_kind in ("flammia", "example1"):
        return complete_rows_cols
    if ep_kind == "example2":
        return complete_band
    return None


def complete_extracted(ep, partial: PartialMatrix, r: int, tol: float | None = None) -> CompletionReport:
    """Dispatch completion on the construction kind of an EP measurement."""
    completer = default_completer(ep.kind)
    if completer is None:
        raise ValueError(f"no completion engine for construction kind {ep.kind!r}")
    return completer(partial, r, tol)
