"""Hermitian linear algebra core: inertia, Schur complements, toleranced
rank and PSD tests, fidelity, and random bounded-rank state generation.

All matrices are plain complex ``numpy`` arrays.  Hermiticity is enforced
once at the boundary (:func:`as_hermitian`) so that everything downstream
may assume exact conjugate symmetry and use ``eigh``-type solvers.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

HERMITICITY_TOL = 1e-12
DEFAULT_ZERO_TOL = 1e-10


class EigensolverError(RuntimeError):
    """Eigendecomposition failed to converge; carries a condition report."""


class FailureSetError(RuntimeError):
    """The block that must be inverted is singular within tolerance.

    Reconstruction by Schur complement is undefined on such inputs.  The
    offending index set and its smallest singular value are attached so
    callers can report or fall back to an alternative window.
    """

    def __init__(self, a_indices, sigma_min, tol, target=None, detail=""):
        self.a_indices = tuple(int(i) for i in a_indices)
        self.sigma_min = float(sigma_min)
        self.tol = float(tol)
        self.target = target
        msg = (
            f"block {self.a_indices} is singular within tolerance "
            f"(smallest singular value {self.sigma_min:.3e} <= {self.tol:.3e})"
        )
        if target is not None:
            msg += f" while solving for entry {target}"
        if detail:
            msg += f"; {detail}"
        super().__init__(msg)


class Inertia(NamedTuple):
    """Counts of negative, zero, and positive eigenvalues."""

    n_minus: int
    n_zero: int
    n_plus: int


def as_hermitian(matrix, tol: float = HERMITICITY_TOL) -> np.ndarray:
    """Validate conjugate symmetry and return the symmetrized copy.

    The maximum absolute asymmetry ``|M - M^dag|`` must not exceed ``tol``
    (relative to the largest entry for matrices that are not O(1)); the
    returned array is exactly Hermitian, ``(M + M^dag) / 2``.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()) if m.size else 1.0)
    asym = float(np.abs(m - m.conj().T).max()) if m.size else 0.0
    if asym > tol * scale:
        raise ValueError(
            f"matrix is not Hermitian: max asymmetry {asym:.3e} exceeds {tol:.3e}"
        )
    return (m + m.conj().T) / 2.0


def is_hermitian(matrix, tol: float = HERMITICITY_TOL) -> bool:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return float(np.abs(m - m.conj().T).max()) <= tol * max(1.0, float(np.abs(m).max()))


def _eigh(h: np.ndarray):
    try:
        return np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        finite = np.all(np.isfinite(h))
        norm = float(np.abs(h).max()) if h.size else 0.0
        raise EigensolverError(
            f"eigendecomposition did not converge (dim={h.shape[0]}, "
            f"finite={finite}, max |entry|={norm:.3e})"
        ) from exc


def as_density_matrix(
    matrix,
    psd_tol: float = DEFAULT_ZERO_TOL,
    trace_tol: float = 1e-10,
) -> np.ndarray:
    """Validate that ``matrix`` is a density matrix and return it Hermitized.

    Requires min eigenvalue >= -psd_tol and unit trace within ``trace_tol``.
    """
    rho = as_hermitian(matrix)
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"trace is {tr!r}, not 1 within {trace_tol:.1e}")
    lo = float(np.linalg.eigvalsh(rho)[0])
    if lo < -psd_tol:
        raise ValueError(f"matrix is not PSD: min eigenvalue {lo:.3e} < -{psd_tol:.1e}")
    return rho


def inertia(h, zero_tol: float = DEFAULT_ZERO_TOL) -> Inertia:
    """Signature of a Hermitian matrix: eigenvalues below -zero_tol, within
    +-zero_tol, and above +zero_tol."""
    if zero_tol <= 0:
        raise ValueError("zero_tol must be positive")
    w, _ = _eigh(as_hermitian(h))
    n_minus = int(np.sum(w < -zero_tol))
    n_plus = int(np.sum(w > zero_tol))
    return Inertia(n_minus, len(w) - n_minus - n_plus, n_plus)


def rank_with_tol(h, zero_tol: float = DEFAULT_ZERO_TOL) -> int:
    """Number of eigenvalues with magnitude above ``zero_tol``."""
    ine = inertia(h, zero_tol)
    return ine.n_minus + ine.n_plus


def smallest_singular_value(a) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    if a.size == 0:
        return np.inf
    return float(np.linalg.svd(a, compute_uv=False)[-1])


def schur_complement(
    m,
    a_indices: Sequence[int],
    singular_tol: float = DEFAULT_ZERO_TOL,
) -> np.ndarray:
    """Schur complement ``M/A = C - B A^-1 B^dag`` for a Hermitian ``m``.

    ``a_indices`` selects the principal block ``A`` to eliminate; the
    remaining indices, in their original order, span ``C``.  Nonsingularity
    of ``A`` is measured by its smallest singular value (scale artifacts of
    determinants are avoided); a singular block raises
    :class:`FailureSetError`.
    """
    m = as_hermitian(m)
    d = m.shape[0]
    a = [int(i) for i in a_indices]
    if len(set(a)) != len(a) or any(i < 0 or i >= d for i in a):
        raise ValueError(f"a_indices must be distinct indices in [0, {d}), got {a}")
    c = [i for i in range(d) if i not in set(a)]
    block_a = m[np.ix_(a, a)]
    sigma_min = smallest_singular_value(block_a)
    if not (sigma_min > singular_tol):
        raise FailureSetError(a, sigma_min, singular_tol)
    block_b = m[np.ix_(c, a)]
    block_c = m[np.ix_(c, c)]
    comp = block_c - block_b @ np.linalg.solve(block_a, block_b.conj().T)
    return (comp + comp.conj().T) / 2.0


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`` in [0, 1]."""
    rho = as_density_matrix(rho)
    sigma = as_density_matrix(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    w, v = _eigh(rho)
    w = np.clip(w, 0.0, None)
    # Rank-1 shortcut: F(|psi><psi|, sigma) = <psi|sigma|psi>.
    if np.sum(w > DEFAULT_ZERO_TOL) == 1:
        psi = v[:, -1]
        return float(np.clip(np.real(psi.conj() @ sigma @ psi), 0.0, 1.0))
    sqrt_rho = (v * np.sqrt(w)) @ v.conj().T
    inner = sqrt_rho @ sigma @ sqrt_rho
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2.0)
    val = float(np.sum(np.sqrt(np.clip(ev, 0.0, None))) ** 2)
    return float(np.clip(val, 0.0, 1.0))


def infidelity(rho, sigma) -> float:
    return 1.0 - fidelity(rho, sigma)


def random_rank_r_state(d: int, r: int, seed) -> np.ndarray:
    """Draw ``G G^dag / Tr(G G^dag)`` with ``G`` a d x r complex Gaussian.

    Deterministic per seed; the result has rank exactly ``r`` with
    probability one.
    """
    if not 1 <= r <= d:
        raise ValueError(f"rank must satisfy 1 <= r <= d, got r={r}, d={d}")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return (rho + rho.conj().T) / 2.0


def random_hermitian(d: int, seed, norm: float | None = None) -> np.ndarray:
    """GUE-style random Hermitian matrix, optionally Frobenius-normalized."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (g + g.conj().T) / 2.0
    if norm is not None:
        h *= norm / np.linalg.norm(h)
    return h
