"""Completeness certification for element-probing measurements.

Three tools, in increasing strength of claim:

* ``check_rank_r_complete`` -- randomized mask/complete/compare evidence
  that the measured elements pin down every rank-r state (or a concrete
  witness pair refuting it).
* ``check_proposition1`` -- the analytic sufficient condition for strict
  completeness: a rank-r complete measurement that also determines every
  diagonal element distinguishes its states from *all* higher-rank states.
* ``uniqueness_probe`` -- a convex search over all states consistent with
  an exact record; a nonzero objective spread exhibits a higher-rank state
  with the same record (refuting strictness), a zero spread is evidence of
  uniqueness at that state.

Certification language is deliberately conservative: sampling can refute
but never prove a for-all-states property, so only Proposition 1 upgrades
a verdict to ``strictly_complete``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .linalg import FailureSetError, inertia, random_rank_r_state, rank_with_tol
from .patterns import ElementPattern, PartialMatrix
from .povm import EpPovm, MeasurementRecord
from .completion import default_completer


class ProbeInfeasibleError(RuntimeError):
    """The convex probe found no state matching a record that should be
    consistent; indicates solver tolerance misconfiguration."""


@dataclass
class CompletenessVerdict:
    kind: str  # rank_r_complete | strictly_complete | indeterminate | refuted
    trials: int
    max_error: float
    failure_draws: int
    witness: tuple[np.ndarray, np.ndarray] | None
    params: dict = field(default_factory=dict)


def check_rank_r_complete(
    ep: EpPovm,
    r: int,
    trials: int = 100,
    seed: int = 0,
    tol: float = 1e-8,
    completer=None,
) -> CompletenessVerdict:
    """Randomized mask-complete-compare certification of Definition-1-style
    completeness.

    Draws random rank-r states, restricts them to the measured pattern,
    reconstructs, and compares.  Draws on which the completion window is
    singular are the measurement's failure set: counted and reported, not
    errors.  For measurements without a completion engine, a rank-r
    factorization fit searches for a second rank-r state with the same
    measured elements; finding one refutes completeness with a witness.
    """
    if completer is None:
        completer = default_completer(ep.kind)
    d = ep.dim
    seeds = np.random.SeedSequence(seed).spawn(trials)
    params = {"dim": d, "rank": r, "seed": seed, "tol": tol, "kind": ep.kind}
    failures = 0
    max_error = 0.0
    for child in seeds:
        rho = random_rank_r_state(d, r, child)
        partial = PartialMatrix.mask_state(rho, ep.pattern)
        if completer is not None:
            try:
                report = completer(partial, r)
            except FailureSetError:
                failures += 1
                continue
            err = float(np.abs(report.completed - rho).max())
            max_error = max(max_error, err)
            if err > tol:
                candidate = report.completed
                if rank_with_tol(candidate, 1e-6) <= r:
                    return CompletenessVerdict(
                        "refuted", trials, err, failures, (rho, candidate), params
                    )
                # Reconstruction failed numerically without producing a
                # bona fide rank-r witness; report inconclusively.
                return CompletenessVerdict(
                    "indeterminate", trials, err, failures, None, params
                )
        else:
            other = _fit_rank_r_to_pattern(partial, r, child)
            if other is not None and np.abs(other - rho).max() > 1e-4:
                return CompletenessVerdict(
                    "refuted", trials, float(np.abs(other - rho).max()),
                    failures, (rho, other), params,
                )
    kind = "rank_r_complete" if completer is not None else "indeterminate"
    return CompletenessVerdict(kind, trials, max_error, failures, None, params)


def _fit_rank_r_to_pattern(
    partial: PartialMatrix, r: int, seed, starts: int = 4
) -> np.ndarray | None:
    """Search for a rank-r state matching the measured entries.

    Minimizes the masked misfit of ``V V^dag`` (plus a unit-trace penalty)
    from random starts.  Returns a state that matches to 1e-8, or None.
    """
    d = partial.dim
    mask = partial.pattern.mask()
    target = partial.matrix
    rng = np.random.default_rng(seed)

    def unpack(x: np.ndarray) -> np.ndarray:
        return x[: d * r].reshape(d, r) + 1j * x[d * r :].reshape(d, r)

    def cost_grad(x: np.ndarray):
        v = unpack(x)
        m = v @ v.conj().T
        resid = np.where(mask, m - target, 0.0)
        tr_err = float(np.trace(m).real - 1.0)
        cost = float(np.sum(np.abs(resid) ** 2)) + tr_err**2
        grad_v = 4.0 * resid @ v + 4.0 * tr_err * v
        return cost, np.concatenate([grad_v.real.ravel(), grad_v.imag.ravel()])

    for _ in range(starts):
        x0 = rng.standard_normal(2 * d * r) / np.sqrt(d)
        res = scipy.optimize.minimize(
            cost_grad, x0, jac=True, method="L-BFGS-B",
            options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12},
        )
        v = unpack(res.x)
        m = v @ v.conj().T
        m = (m + m.conj().T) / 2
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > 1e-6:
            continue
        m /= tr
        if np.abs(np.where(mask, m - target, 0.0)).max() <= 1e-8:
            return m
    return None


def _real_embedding(h: np.ndarray) -> np.ndarray:
    return np.concatenate([h.real.ravel(), h.imag.ravel()])


def record_determined_entries(ep: EpPovm, entries) -> list[bool]:
    """Whether each Hermitian entry functional lies in the real span of the
    POVM effects, i.e. is linearly determined by any record."""
    d = ep.dim
    basis = np.stack([_real_embedding(e) for e in ep.all_effects()]).T
    out = []
    for i, j in entries:
        probe = np.zeros((d, d), dtype=complex)
        probe[i, j] = 1.0
        probe = (probe + probe.conj().T) / (1.0 if i == j else 2.0)
        target = _real_embedding(probe)
        coeff, *_ = np.linalg.lstsq(basis, target, rcond=None)
        out.append(bool(np.linalg.norm(basis @ coeff - target) <= 1e-9))
    return out


def check_proposition1(construction, rank_r_complete: bool) -> bool:
    """Sufficient condition for strict completeness.

    True iff the measurement is rank-r complete *and* determines every
    diagonal element.  Given an :class:`EpPovm`, "determines" means the
    diagonal functionals lie in the record's linear span (the effect
    span), which credits trace-style recovery of diagonals the raw pattern
    misses; given a bare pattern, the diagonal must be measured directly.
    A False result is no conclusion.
    """
    if not rank_r_complete:
        return False
    if isinstance(construction, EpPovm):
        d = construction.dim
        return all(record_determined_entries(construction, [(i, i) for i in range(d)]))
    pattern: ElementPattern = construction
    return pattern.covers_diagonal()


@dataclass
class ProbeResult:
    spread: float
    witness: np.ndarray | None
    spreads: list[float]
    witness_residual: float | None
    witness_pair: tuple[np.ndarray, np.ndarray] | None = None
    params: dict = field(default_factory=dict)


def _flatten_effects(povms) -> list[np.ndarray]:
    if isinstance(povms, EpPovm):
        return povms.all_effects()
    if hasattr(povms, "effects"):
        return list(povms.effects)
    out = []
    for p in povms:
        out.extend(p.effects)
    return out


def uniqueness_probe(
    povms,
    record: MeasurementRecord,
    probes: int = 8,
    seed: int = 0,
    tol: float = 1e-6,
) -> ProbeResult:
    """Convex exploration of the states consistent with an exact record.

    Maximizes and minimizes random Hermitian objectives over
    ``{sigma >= 0, Tr sigma = 1, Tr(E_mu sigma) = p_mu}``.  The spread
    (max - min) is zero iff that set is a single state along every probed
    direction; a spread above ``tol`` returns the maximizing state as a
    witness of non-uniqueness.
    """
    import cvxpy as cp

    effects = _flatten_effects(povms)
    p = np.asarray(record.probs, dtype=float)
    if len(effects) != len(p):
        raise ValueError(f"record has {len(p)} entries for {len(effects)} effects")
    d = effects[0].shape[0]

    sigma = cp.Variable((d, d), hermitian=True)
    w_param = cp.Parameter((d, d), hermitian=True)
    constraints = [sigma >> 0, cp.real(cp.trace(sigma)) == 1]
    constraints += [
        cp.real(cp.trace(e @ sigma)) == p_mu for e, p_mu in zip(effects, p)
    ]
    problem = cp.Problem(cp.Maximize(cp.real(cp.trace(w_param @ sigma))), constraints)

    rng = np.random.default_rng(seed)
    spreads: list[float] = []
    best_pair = None
    best_spread = -np.inf
    for _ in range(probes):
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        w = (g + g.conj().T) / 2
        w /= np.linalg.norm(w)
        endpoints = []
        for sign in (1.0, -1.0):
            w_param.value = sign * w
            problem.solve(solver=cp.CLARABEL)
            if problem.status not in ("optimal", "optimal_inaccurate"):
                raise ProbeInfeasibleError(
                    f"probe solve ended with status {problem.status!r} on a "
                    "record that should be consistent"
                )
            val = np.array(sigma.value)
            endpoints.append(((val + val.conj().T) / 2, sign * problem.value))
        hi = max(endpoints, key=lambda t: t[1])
        lo = min(endpoints, key=lambda t: t[1])
        spread = float(hi[1] - lo[1])
        spreads.append(spread)
        if spread > best_spread:
            best_spread = spread
            best_pair = (hi[0], lo[0])

    spread = float(max(spreads))
    witness = None
    witness_residual = None
    witness_pair = None
    if spread > tol and best_pair is not None:
        # Either endpoint may be the probed state itself (extreme points of
        # the feasible set); their midpoint is a feasible state that
        # provably differs from every extreme point and has rank >= 2.
        witness_pair = best_pair
        witness = (best_pair[0] + best_pair[1]) / 2
        witness_residual = float(
            max(abs(float(np.trace(e @ witness).real) - pi) for e, pi in zip(effects, p))
        )
    return ProbeResult(
        spread=spread,
        witness=witness,
        spreads=spreads,
        witness_residual=witness_residual,
        witness_pair=witness_pair,
        params={"probes": probes, "seed": seed, "tol": tol},
    )


@dataclass
class PerturbationSpace:
    """Hermitian directions supported entirely off a pattern."""

    pattern: ElementPattern
    basis: list[np.ndarray]

    @classmethod
    def off_pattern(cls, pattern: ElementPattern) -> "PerturbationSpace":
        d = pattern.dim
        basis = []
        for i in range(d):
            for j in range(i, d):
                if (i, j) in pattern:
                    continue
                if i == j:
                    e = np.zeros((d, d), dtype=complex)
                    e[i, i] = 1.0
                    basis.append(e)
                else:
                    x = np.zeros((d, d), dtype=complex)
                    x[i, j] = x[j, i] = 1.0
                    basis.append(x)
                    y = np.zeros((d, d), dtype=complex)
                    y[i, j] = -1j
                    y[j, i] = 1j
                    basis.append(y)
        return cls(pattern, basis)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        coeffs = rng.standard_normal(len(self.basis))
        v = sum(c * b for c, b in zip(coeffs, self.basis))
        return v / np.linalg.norm(v)


@dataclass
class TracelessCheckReport:
    applicable: bool
    samples: int
    trace_violations: int
    negativity_violations: int
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.applicable and not (self.trace_violations or self.negativity_violations)


def traceless_negativity_check(
    pattern: ElementPattern, samples: int = 200, seed: int = 0
) -> TracelessCheckReport:
    """Mechanized sanity check of the diagonal-measurement argument.

    When the pattern covers the diagonal, every off-pattern perturbation is
    traceless by construction, and a nonzero traceless Hermitian matrix
    must have a negative eigenvalue; sampling confirms both.  Patterns
    missing diagonal entries admit PSD perturbations (a bare diagonal
    direction), so the check reports itself inapplicable.
    """
    if not pattern.covers_diagonal():
        return TracelessCheckReport(
            applicable=False, samples=0, trace_violations=0, negativity_violations=0,
            note="pattern misses diagonal entries; off-pattern perturbations "
            "need not be traceless",
        )
    space = PerturbationSpace.off_pattern(pattern)
    if space.dimension == 0:
        return TracelessCheckReport(
            applicable=True, samples=0, trace_violations=0, negativity_violations=0,
            note="pattern is complete; no perturbation directions exist",
        )
    rng = np.random.default_rng(seed)
    trace_bad = 0
    negativity_bad = 0
    for _ in range(samples):
        v = space.sample(rng)
        if abs(np.trace(v)) > 1e-12:
            trace_bad += 1
        if inertia(v, 1e-12).n_minus < 1:
            negativity_bad += 1
    return TracelessCheckReport(True, samples, trace_bad, negativity_bad)


def certify_strictness(
    ep: EpPovm,
    r: int,
    trials: int = 50,
    probe_states: int = 5,
    seed: int = 0,
    probe_tol: float = 1e-6,
) -> CompletenessVerdict:
    """Combined verdict for strict completeness.

    Proposition 1 certifies; a probe witness refutes; otherwise the result
    is indeterminate (unique at every tested state), because sampling
    cannot prove a property quantified over all states.
    """
    base = check_rank_r_complete(ep, r, trials=trials, seed=seed)
    if base.kind == "refuted":
        return base
    if check_proposition1(ep, base.kind == "rank_r_complete"):
        return CompletenessVerdict(
            "strictly_complete", base.trials, base.max_error,
            base.failure_draws, None, base.params,
        )
    seeds = np.random.SeedSequence((seed, 1)).spawn(probe_states)
    for child in seeds:
        rho = random_rank_r_state(ep.dim, r, child)
        probe = uniqueness_probe(ep, ep.exact_record(rho), seed=seed, tol=probe_tol)
        if probe.witness is not None:
            return CompletenessVerdict(
                "refuted", base.trials, probe.spread, base.failure_draws,
                (rho, probe.witness), base.params,
            )
    return CompletenessVerdict(
        "indeterminate", base.trials, base.max_error,
        base.failure_draws, None, base.params,
    )
