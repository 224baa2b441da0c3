"""Measured-element patterns and partially known Hermitian matrices.

An element pattern is the set of (row, col) density-matrix indices that a
measurement determines.  Patterns are closed under conjugate transposition:
knowing ``rho[i, j]`` is knowing ``rho[j, i]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .linalg import as_hermitian


@dataclass(frozen=True)
class ElementPattern:
    """A Hermitian-closed set of matrix index pairs."""

    dim: int
    indices: frozenset[tuple[int, int]]

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, int]]) -> "ElementPattern":
        """Build a pattern from index pairs, adding conjugate partners."""
        closed = set()
        for i, j in pairs:
            i, j = int(i), int(j)
            if not (0 <= i < dim and 0 <= j < dim):
                raise ValueError(f"index ({i}, {j}) out of range for dim {dim}")
            closed.add((i, j))
            closed.add((j, i))
        return cls(dim, frozenset(closed))

    def __contains__(self, pair) -> bool:
        return (int(pair[0]), int(pair[1])) in self.indices

    def __len__(self) -> int:
        return len(self.indices)

    def __or__(self, other: "ElementPattern") -> "ElementPattern":
        if other.dim != self.dim:
            raise ValueError("patterns have different dims")
        return ElementPattern(self.dim, self.indices | other.indices)

    def mask(self) -> np.ndarray:
        """Boolean dim x dim array, True on measured entries."""
        m = np.zeros((self.dim, self.dim), dtype=bool)
        for i, j in self.indices:
            m[i, j] = True
        return m

    def covers_diagonal(self) -> bool:
        return all((i, i) in self.indices for i in range(self.dim))

    def complement_pairs(self) -> list[tuple[int, int]]:
        """Unmeasured index pairs, row-major order."""
        return [
            (i, j)
            for i in range(self.dim)
            for j in range(self.dim)
            if (i, j) not in self.indices
        ]

    def upper_pairs(self) -> list[tuple[int, int]]:
        """Representative pairs (i <= j) in the pattern, sorted."""
        return sorted((i, j) for i, j in self.indices if i <= j)


def rows_cols_pattern(dim: int, r: int) -> ElementPattern:
    """First ``r`` rows and columns: all (i, j) with min(i, j) < r."""
    if not 1 <= r <= dim:
        raise ValueError(f"need 1 <= r <= dim, got r={r}, dim={dim}")
    return ElementPattern.from_pairs(
        dim, [(k, n) for k in range(r) for n in range(k, dim)]
    )


def band_pattern(dim: int, r: int, include_wraparound: bool = True) -> ElementPattern:
    """Principal diagonal plus the first ``r`` off-diagonals.

    With ``include_wraparound`` the corner diagonals ``d-1 .. d-r`` are
    included too, i.e. the band is cyclic: measured iff the cyclic distance
    ``min(|i-j|, d-|i-j|)`` is at most ``r``.
    """
    if r < 0 or r >= dim:
        raise ValueError(f"need 0 <= r < dim, got r={r}, dim={dim}")
    pairs = []
    for i in range(dim):
        for j in range(i, dim):
            t = j - i
            if t <= r or (include_wraparound and t >= dim - r):
                pairs.append((i, j))
    return ElementPattern.from_pairs(dim, pairs)


@dataclass
class PartialMatrix:
    """A Hermitian matrix known only on a pattern of entries.

    ``matrix`` holds the known values (zero elsewhere); conjugate symmetry
    across the pattern is validated at construction.
    """

    dim: int
    pattern: ElementPattern
    matrix: np.ndarray = field(repr=False)

    def __init__(self, pattern: ElementPattern, values) -> None:
        self.dim = pattern.dim
        self.pattern = pattern
        if isinstance(values, dict):
            m = np.zeros((self.dim, self.dim), dtype=complex)
            for (i, j), v in values.items():
                if (i, j) not in pattern:
                    raise ValueError(f"value given for unmeasured entry ({i}, {j})")
                m[i, j] = v
            # Fill conjugate partners that were given one-sided.
            for i, j in pattern.indices:
                if m[i, j] == 0 and m[j, i] != 0:
                    m[i, j] = np.conj(m[j, i])
        else:
            m = np.array(values, dtype=complex)
            if m.shape != (self.dim, self.dim):
                raise ValueError(f"expected shape {(self.dim, self.dim)}, got {m.shape}")
            m = np.where(pattern.mask(), m, 0.0)
        for i, j in pattern.indices:
            if abs(m[i, j] - np.conj(m[j, i])) > 1e-9 * max(1.0, abs(m[i, j])):
                raise ValueError(
                    f"values break conjugate symmetry at ({i}, {j}): "
                    f"{m[i, j]} vs conj({m[j, i]})"
                )
        self.matrix = m

    @classmethod
    def mask_state(cls, rho, pattern: ElementPattern) -> "PartialMatrix":
        """Restrict a full Hermitian matrix to the measured entries."""
        rho = as_hermitian(rho)
        if rho.shape[0] != pattern.dim:
            raise ValueError("state dim does not match pattern dim")
        return cls(pattern, rho)

    def value(self, i: int, j: int) -> complex:
        if (i, j) not in self.pattern:
            raise KeyError(f"entry ({i}, {j}) is not measured")
        return complex(self.matrix[i, j])
