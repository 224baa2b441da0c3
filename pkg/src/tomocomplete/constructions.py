"""Element-probing measurement families.

Four constructions are provided, each returning an :class:`~tomocomplete.povm.EpPovm`
whose extractor recovers a specific pattern of density-matrix entries:

* ``flammia_povm`` -- a single POVM of 2d effects probing row/column 0.
* ``goyeneche_bases`` -- four orthonormal bases probing the first
  off-diagonals (with the wraparound corner).
* ``example1_povm`` / ``example1_slice`` -- the (2d-r)r+1 effect family
  probing the first r rows and columns, and its per-row slices.
* ``example2_bases`` -- 4r+1 orthonormal bases probing the cyclic band of
  width r, built by pairing the k-th and (d-k)-th diagonals.

Extraction coefficients are derived from the Born rule.  For a projector
pair ``(|m> +- |n>)/sqrt(2)`` the probabilities give
``Re rho[m, n] = (p_plus - p_minus) / 2``, and for ``(|m> +- i|n>)/sqrt(2)``
they give ``Im rho[m, n] = (p_minus - p_plus) / 2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import as_hermitian
from .patterns import ElementPattern, band_pattern, rows_cols_pattern
from .povm import EpPovm, Povm, hermitian_closure

RESIDUAL_PSD_TOL = 1e-10


@dataclass(frozen=True)
class BasisSet:
    """Orthonormal measurement bases; rows of each matrix are the vectors."""

    dim: int
    bases: tuple[np.ndarray, ...]

    def __post_init__(self):
        for idx, b in enumerate(self.bases):
            if b.shape != (self.dim, self.dim):
                raise ValueError(f"basis {idx} has shape {b.shape}")
            if np.abs(b @ b.conj().T - np.eye(self.dim)).max() > 1e-10:
                raise ValueError(f"basis {idx} is not orthonormal")

    def __len__(self) -> int:
        return len(self.bases)


def basis_povm(basis: np.ndarray) -> Povm:
    """POVM of rank-1 projectors onto the rows of ``basis``."""
    return Povm([np.outer(row, row.conj()) for row in basis])


def computational_basis(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex)


def _check_residual(effects: Sequence[np.ndarray], tol: float = RESIDUAL_PSD_TOL) -> np.ndarray:
    """Residual effect completing ``effects`` to identity; must be PSD."""
    d = effects[0].shape[0]
    residual = np.eye(d, dtype=complex) - sum(effects)
    residual = as_hermitian(residual, tol=1e-9)
    lo = float(np.linalg.eigvalsh(residual)[0])
    if lo < -tol:
        raise ValueError(
            f"residual effect is not PSD (min eigenvalue {lo:.3e}); "
            "choose smaller probe coefficients"
        )
    return residual


def _probe_effects(d: int, k: int, a: float, b: float):
    """Effects a|k><k|, b(1 + |k><n| + |n><k|), b(1 - i|k><n| + i|n><k|)
    for n = k+1 .. d-1, plus the extraction table rows they support."""
    eye = np.eye(d, dtype=complex)
    diag = np.zeros((d, d), dtype=complex)
    diag[k, k] = a
    real_probes = []
    imag_probes = []
    for n in range(k + 1, d):
        kn = np.zeros((d, d), dtype=complex)
        kn[k, n] = 1.0
        real_probes.append(b * (eye + kn + kn.T))
        imag_probes.append(b * (eye - 1j * kn + 1j * kn.T))
    return [diag] + real_probes + imag_probes


def _probe_extractor_rows(d, k, a, b, offset):
    """Extractor terms for one probe block laid out by :func:`_probe_effects`.

    ``p_k = a rho[k,k]``;  ``p_{k,n} = b (1 + 2 Re rho[n,k])``;
    ``ptilde_{k,n} = b (1 + 2 Im rho[n,k])``.
    """
    terms = {(k, k): [(offset, 1.0 / a)]}
    consts = {(k, k): 0.0}
    n_off = d - 1 - k
    for pos, n in enumerate(range(k + 1, d)):
        re_mu = offset + 1 + pos
        im_mu = offset + 1 + n_off + pos
        terms[(n, k)] = [(re_mu, 0.5 / b), (im_mu, 0.5j / b)]
        consts[(n, k)] = -0.5 - 0.5j
    return terms, consts


def flammia_povm(d: int, a: float | None = None, b: float | None = None) -> EpPovm:
    """Row/column-0 probing POVM with 2d effects.

    Defaults ``a = b = 1/(2(2d-1))``; the residual effect is verified PSD
    and construction fails otherwise.
    """
    if d < 2:
        raise ValueError("need dim >= 2")
    if a is None:
        a = 1.0 / (2 * (2 * d - 1))
    if b is None:
        b = a
    effects = _probe_effects(d, 0, a, b)
    effects.append(_check_residual(effects))
    terms, consts = _probe_extractor_rows(d, 0, a, b, offset=0)
    pattern = rows_cols_pattern(d, 1)
    return EpPovm(
        povms=(Povm(effects),),
        pattern=pattern,
        extractor=hermitian_closure(terms, consts),
        kind="flammia",
        params={"dim": d, "a": a, "b": b},
    )


def example1_povm(
    d: int, r: int, a: float | Sequence[float] | None = None,
    b: float | Sequence[float] | None = None,
) -> EpPovm:
    """Single POVM of (2d-r)r+1 effects probing the first r rows/columns.

    Coefficients may be scalars or length-r sequences.  The default
    ``a_k = b_k = 1/(2 r (2d-r))`` keeps the residual effect PSD for every
    rank; rank-independent coefficients of order 1/(2(2d-r)) over-count the
    identity once r >= 2.
    """
    if not 1 <= r <= d:
        raise ValueError(f"need 1 <= r <= d, got r={r}, d={d}")
    default = 1.0 / (2 * r * (2 * d - r))
    a_arr = np.full(r, default) if a is None else np.broadcast_to(np.asarray(a, float), (r,))
    b_arr = np.full(r, default) if b is None else np.broadcast_to(np.asarray(b, float), (r,))
    effects: list[np.ndarray] = []
    terms: dict = {}
    consts: dict = {}
    for k in range(r):
        t, c = _probe_extractor_rows(d, k, a_arr[k], b_arr[k], offset=len(effects))
        terms.update(t)
        consts.update(c)
        effects.extend(_probe_effects(d, k, a_arr[k], b_arr[k]))
    effects.append(_check_residual(effects))
    return EpPovm(
        povms=(Povm(effects),),
        pattern=rows_cols_pattern(d, r),
        extractor=hermitian_closure(terms, consts),
        kind="example1",
        params={"dim": d, "rank": r, "a": list(map(float, a_arr)), "b": list(map(float, b_arr))},
    )


def example1_slice(
    d: int, k: int, a: float | None = None, b: float | None = None
) -> EpPovm:
    """The k-th slice POVM with 2(d-k) effects, probing row/column k from
    index k onward.  Slice 0 is exactly :func:`flammia_povm`."""
    if not 0 <= k < d:
        raise ValueError(f"need 0 <= k < d, got k={k}, d={d}")
    if a is None:
        a = 1.0 / (2 * (2 * d - 1))
    if b is None:
        b = a
    effects = _probe_effects(d, k, a, b)
    effects.append(_check_residual(effects))
    terms, consts = _probe_extractor_rows(d, k, a, b, offset=0)
    pattern = ElementPattern.from_pairs(d, [(k, n) for n in range(k, d)])
    return EpPovm(
        povms=(Povm(effects),),
        pattern=pattern,
        extractor=hermitian_closure(terms, consts),
        kind="example1-slice",
        params={"dim": d, "k": k, "a": a, "b": b},
    )


def _pair_basis(d: int, pairs: Sequence[tuple[int, int]], flavor: str) -> np.ndarray:
    """Orthonormal basis from a perfect matching of indices.

    Each pair (m, n) contributes rows ``(e_m + e_n)/sqrt(2)`` and
    ``(e_m - e_n)/sqrt(2)`` (flavor ``x``) or the ``+-i`` versions
    (flavor ``y``), plus-vector first.
    """
    seen: set[int] = set()
    for m, n in pairs:
        if m == n or m in seen or n in seen:
            raise ValueError(f"pairs do not form a perfect matching: {pairs}")
        seen.update((m, n))
    if seen != set(range(d)):
        raise ValueError(f"pairs do not cover all {d} indices: {pairs}")
    phase = 1.0 if flavor == "x" else 1j
    rows = []
    for m, n in pairs:
        v = np.zeros(d, dtype=complex)
        v[m], v[n] = 1.0, phase
        rows.append(v / np.sqrt(2))
        w = np.zeros(d, dtype=complex)
        w[m], w[n] = 1.0, -phase
        rows.append(w / np.sqrt(2))
    return np.array(rows)


def _pair_extractor_terms(pairs, x_offset, y_offset):
    """Extraction terms for one x-basis / y-basis pair over a matching.

    Within each basis, pair number ``t`` owns outcomes ``2t`` (plus) and
    ``2t+1`` (minus).
    """
    terms = {}
    for t, (m, n) in enumerate(pairs):
        terms[(m, n)] = [
            (x_offset + 2 * t, 0.5),
            (x_offset + 2 * t + 1, -0.5),
            (y_offset + 2 * t, -0.5j),
            (y_offset + 2 * t + 1, 0.5j),
        ]
    return terms


def goyeneche_bases(d: int) -> tuple[BasisSet, EpPovm]:
    """The four first-diagonal probing bases for even ``d``.

    Basis 1 pairs (0,1), (2,3), ...; basis 2 pairs (1,2), (3,4), ...,
    (d-1, 0); bases 3 and 4 repeat them with ``+-i`` superpositions.  The
    measured elements are the first off-diagonals plus the wraparound
    corner (d-1, 0); the principal diagonal is *not* measured.
    """
    if d % 2 != 0 or d < 2:
        raise ValueError(f"dimension must be even, got {d}")
    even_pairs = [(2 * t, 2 * t + 1) for t in range(d // 2)]
    odd_pairs = [(2 * t + 1, (2 * t + 2) % d) for t in range(d // 2)]
    bases = BasisSet(
        d,
        (
            _pair_basis(d, even_pairs, "x"),
            _pair_basis(d, odd_pairs, "x"),
            _pair_basis(d, even_pairs, "y"),
            _pair_basis(d, odd_pairs, "y"),
        ),
    )
    terms = {}
    terms.update(_pair_extractor_terms(even_pairs, x_offset=0, y_offset=2 * d))
    terms.update(_pair_extractor_terms(odd_pairs, x_offset=d, y_offset=3 * d))
    pattern = ElementPattern.from_pairs(d, list(terms))
    ep = EpPovm(
        povms=tuple(basis_povm(b) for b in bases.bases),
        pattern=pattern,
        extractor=hermitian_closure(terms, {}),
        kind="goyeneche4",
        params={"dim": d},
    )
    return bases, ep


def _two_adic_block(k: int) -> int:
    """Largest power of two dividing k."""
    return k & -k


def diagonal_pair_vector(d: int, k: int) -> list[tuple[int, int]]:
    """The d index pairs of the k-th and (d-k)-th diagonals, in order.

    Position p holds the pair {p, (p+k) mod d}, written with the smaller
    index first: the k-th diagonal for p < d-k, then the (d-k)-th.
    """
    out = [(p, p + k) for p in range(d - k)]
    out += [(p + k - d, p) for p in range(d - k, d)]
    return out


def split_pair_vector(pairs: list[tuple[int, int]], k: int):
    """Split the pair vector into two groups by alternating blocks of
    ``2^Z`` where ``2^Z`` is the largest power of two dividing ``k``."""
    block = _two_adic_block(k)
    group1, group2 = [], []
    for start in range(0, len(pairs), block):
        chunk = pairs[start : start + block]
        (group1 if (start // block) % 2 == 0 else group2).extend(chunk)
    return group1, group2


def example2_bases(d: int, r: int) -> tuple[BasisSet, EpPovm]:
    """4r+1 orthonormal bases probing the cyclic band of width r.

    ``d`` must be a power of two and ``1 <= r <= d/2``.  Basis 0 is
    computational; each k = 1..r contributes four bases built from the two
    groups of the k-th/(d-k)-th diagonal pair vector.  Bases for rank r-1
    are a prefix of those for rank r, which is what enables iterative
    refinement.
    """
    if d < 2 or d & (d - 1) != 0:
        raise ValueError(f"dimension must be a power of two, got {d}")
    if not 1 <= r <= d // 2:
        raise ValueError(f"need 1 <= r <= d/2, got r={r}, d={d}")
    if r >= d / 4:
        warnings.warn(
            f"rank {r} >= dim/4: measuring d+1 mutually unbiased bases is "
            "informationally complete and may need fewer outcomes",
            stacklevel=2,
        )
    matrices: list[np.ndarray] = [computational_basis(d)]
    terms = {(i, i): [(i, 1.0)] for i in range(d)}
    for k in range(1, r + 1):
        group1, group2 = split_pair_vector(diagonal_pair_vector(d, k), k)
        for group in (group1, group2):
            ordered = sorted(set(group))
            x_offset = d * len(matrices)
            matrices.append(_pair_basis(d, ordered, "x"))
            y_offset = d * len(matrices)
            matrices.append(_pair_basis(d, ordered, "y"))
            for key, val in _pair_extractor_terms(ordered, x_offset, y_offset).items():
                terms.setdefault(key, val)  # k = d/2 duplicates the groups
    bases = BasisSet(d, tuple(matrices))
    ep = EpPovm(
        povms=tuple(basis_povm(b) for b in bases.bases),
        pattern=band_pattern(d, r, include_wraparound=True),
        extractor=hermitian_closure(terms, {}),
        kind="example2",
        params={"dim": d, "rank": r},
    )
    return bases, ep


def pattern_of(construction) -> ElementPattern:
    """Measured-element pattern of a construction (EpPovm or (bases, EpPovm))."""
    if isinstance(construction, tuple):
        construction = construction[1]
    return construction.pattern


def canonical_basis(basis: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Phase-fix each vector (first nonzero component real positive) and
    sort rows lexicographically, for order/phase-insensitive comparison."""
    rows = []
    for row in basis:
        nz = np.flatnonzero(np.abs(row) > tol)
        v = row.copy()
        if len(nz):
            c = row[nz[0]]
            v = row * (np.conj(c) / abs(c))
        rows.append(v)
    key = [tuple(np.round(np.concatenate([r.real, r.imag]), 10)) for r in rows]
    order = sorted(range(len(rows)), key=lambda i: key[i])
    return np.array([rows[i] for i in order])


def build_construction(kind: str, dim: int, rank: int | None = None,
                       k: int | None = None, a: float | None = None,
                       b: float | None = None) -> EpPovm:
    """Uniform entry point used by the CLI and the experiment harness."""
    if kind == "flammia":
        return flammia_povm(dim, a=a, b=b)
    if kind == "goyeneche4":
        return goyeneche_bases(dim)[1]
    if kind == "example1":
        if rank is None:
            raise ValueError("example1 requires a rank")
        return example1_povm(dim, rank, a=a, b=b)
    if kind == "example1-slice":
        if k is None:
            raise ValueError("example1-slice requires k")
        return example1_slice(dim, k, a=a, b=b)
    if kind == "example2":
        if rank is None:
            raise ValueError("example2 requires a rank")
        return example2_bases(dim, rank)[1]
    raise ValueError(f"unknown construction kind {kind!r}")


CONSTRUCTION_KINDS = ("flammia", "goyeneche4", "example1", "example1-slice", "example2")
