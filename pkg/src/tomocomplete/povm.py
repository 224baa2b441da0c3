"""POVMs, Born-rule probabilities, finite-shot sampling, and the
element-probing abstraction that maps outcome probabilities back to
density-matrix entries.

A measurement protocol is a list of POVMs (a single one for probe-style
measurements, one per orthonormal basis for multi-basis protocols).  A
measurement record concatenates the outcome blocks in protocol order; each
block sums to one for exact records.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linalg import as_density_matrix, as_hermitian
from .patterns import ElementPattern, PartialMatrix

PSD_TOL = 1e-10
IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class Povm:
    """An ordered list of PSD effects summing to the identity."""

    effects: tuple[np.ndarray, ...]

    def __init__(self, effects: Sequence) -> None:
        herm = tuple(as_hermitian(e) for e in effects)
        if not herm:
            raise ValueError("a POVM needs at least one effect")
        d = herm[0].shape[0]
        if any(e.shape[0] != d for e in herm):
            raise ValueError("effects have mixed dimensions")
        object.__setattr__(self, "effects", herm)

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def __len__(self) -> int:
        return len(self.effects)


@dataclass(frozen=True)
class PovmViolation:
    kind: str  # "effect_not_psd" | "identity_sum"
    effect_index: int | None
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[PovmViolation, ...]

    @property
    def is_valid(self) -> bool:
        return not self.violations


def validate_povm(povm: Povm, tol: float = PSD_TOL) -> ValidationReport:
    """Report non-PSD effects and the identity-sum residual.

    An empty report means the POVM satisfies both defining conditions at
    the given tolerance.
    """
    violations = []
    total = np.zeros((povm.dim, povm.dim), dtype=complex)
    for idx, effect in enumerate(povm.effects):
        lo = float(np.linalg.eigvalsh(effect)[0])
        if lo < -tol:
            violations.append(PovmViolation("effect_not_psd", idx, lo))
        total += effect
    residual = float(np.abs(total - np.eye(povm.dim)).max())
    if residual > tol:
        violations.append(PovmViolation("identity_sum", None, residual))
    return ValidationReport(tuple(violations))


@dataclass(frozen=True)
class MeasurementRecord:
    """Outcome probabilities (or finite-shot frequencies) in effect order.

    ``shots`` of ``None`` marks an exact record.
    """

    probs: np.ndarray
    shots: int | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1:
            raise ValueError("record must be a flat vector")
        if p.min() < -1e-9 or p.max() > 1 + 1e-9:
            raise ValueError(f"probabilities outside [0, 1]: [{p.min()}, {p.max()}]")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be positive")

    def __len__(self) -> int:
        return len(self.probs)

    @property
    def exact(self) -> bool:
        return self.shots is None


def born_probabilities(povm: Povm, rho) -> MeasurementRecord:
    """Exact outcome probabilities ``p_mu = Tr(E_mu rho)``.

    Values within 1e-12 outside [0, 1] are clamped.
    """
    rho = as_density_matrix(rho)
    if rho.shape[0] != povm.dim:
        raise ValueError(f"state dim {rho.shape[0]} != POVM dim {povm.dim}")
    p = np.array([float(np.trace(e @ rho).real) for e in povm.effects])
    outside = (p < -1e-12) | (p > 1 + 1e-12)
    if outside.any():
        raise ValueError(f"Born probabilities outside [0,1] beyond tolerance: {p[outside]}")
    return MeasurementRecord(np.clip(p, 0.0, 1.0), shots=None)


def sample_record(exact: MeasurementRecord, shots: int, seed) -> MeasurementRecord:
    """One multinomial draw of ``shots`` outcomes; frequencies sum to 1 exactly."""
    p = exact.probs
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"record sums to {p.sum()!r}, cannot sample")
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(int(shots), p / p.sum())
    return MeasurementRecord(counts / float(shots), shots=int(shots))


@dataclass(frozen=True)
class Extractor:
    """Sparse affine map from a measurement record to pattern entries.

    Entry (i, j) is recovered as ``sum_mu coeff[mu] * p[mu] + const``.  The
    constant absorbs identity contributions inside effects; it is exact for
    any record whose blocks are normalized (frequencies included).
    """

    terms: Mapping[tuple[int, int], tuple[tuple[int, complex], ...]]
    consts: Mapping[tuple[int, int], complex]

    def apply(self, probs: np.ndarray) -> dict[tuple[int, int], complex]:
        out = {}
        for key, coeffs in self.terms.items():
            val = self.consts.get(key, 0.0)
            for mu, c in coeffs:
                val += c * probs[mu]
            out[key] = complex(val)
        return out


def hermitian_closure(
    terms: dict[tuple[int, int], list[tuple[int, complex]]],
    consts: dict[tuple[int, int], complex],
) -> Extractor:
    """Add conjugate-transposed entries to one-sided extractor tables."""
    full_terms: dict[tuple[int, int], tuple[tuple[int, complex], ...]] = {}
    full_consts: dict[tuple[int, int], complex] = {}
    for (i, j), coeffs in terms.items():
        full_terms[(i, j)] = tuple(coeffs)
        full_consts[(i, j)] = complex(consts.get((i, j), 0.0))
        if i != j and (j, i) not in terms:
            full_terms[(j, i)] = tuple((mu, np.conj(c)) for mu, c in coeffs)
            full_consts[(j, i)] = complex(np.conj(consts.get((i, j), 0.0)))
    return Extractor(full_terms, full_consts)


@dataclass(frozen=True)
class EpPovm:
    """An element-probing measurement: POVM blocks plus the pattern of
    density-matrix entries their probabilities determine, and the sparse
    map that recovers those entries from a record."""

    povms: tuple[Povm, ...]
    pattern: ElementPattern
    extractor: Extractor
    kind: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.povms:
            raise ValueError("need at least one POVM block")
        d = self.povms[0].dim
        if any(p.dim != d for p in self.povms):
            raise ValueError("POVM blocks have mixed dimensions")
        if self.pattern.dim != d:
            raise ValueError("pattern dim does not match POVM dim")

    @property
    def dim(self) -> int:
        return self.povms[0].dim

    @property
    def block_sizes(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.povms)

    @property
    def n_outcomes(self) -> int:
        return sum(self.block_sizes)

    def all_effects(self) -> list[np.ndarray]:
        return [e for p in self.povms for e in p.effects]

    def exact_record(self, rho) -> MeasurementRecord:
        """Concatenated Born probabilities, one block per POVM."""
        blocks = [born_probabilities(p, rho).probs for p in self.povms]
        return MeasurementRecord(np.concatenate(blocks), shots=None)

    def sample(self, exact: MeasurementRecord, shots: int, seed) -> MeasurementRecord:
        """Sample each POVM block independently with ``shots`` each.

        Per-block seeds are spawned from ``seed``, so trials are
        reproducible and blocks are statistically independent.
        """
        if len(exact) != self.n_outcomes:
            raise ValueError("record length does not match outcome count")
        seeds = np.random.SeedSequence(seed).spawn(len(self.povms))
        out, start = [], 0
        for povm, child in zip(self.povms, seeds):
            block = MeasurementRecord(exact.probs[start : start + len(povm)])
            out.append(sample_record(block, shots, child).probs)
            start += len(povm)
        return MeasurementRecord(np.concatenate(out), shots=int(shots))

    def extract(self, record: MeasurementRecord) -> PartialMatrix:
        return extract_elements(self, record)


def extract_elements(ep: EpPovm, record: MeasurementRecord) -> PartialMatrix:
    """Apply the extraction map to a record, yielding the measured entries.

    This is pure linear inversion; no positivity is imposed, so noisy
    records produce the same affine map applied to frequencies.
    """
    if len(record) != ep.n_outcomes:
        raise ValueError(
            f"record has {len(record)} entries, measurement has {ep.n_outcomes}"
        )
    values = ep.extractor.apply(record.probs)
    return PartialMatrix(ep.pattern, values)
