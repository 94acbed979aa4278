"""Spectral statistics and exact integer rank.

Floating-point singular values come from LAPACK; singularity decisions for
integer matrices never rely on them.  ``exact_rank`` prescreens with Gaussian
elimination over two random 62-bit prime fields and confirms any deficient or
disagreeing answer with fraction-free (Bareiss) elimination over the integers,
so the reported rank is the rank over the rationals, exactly.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

import numpy as np

from .ensemble import SignedMatrix

#: Floating threshold used only for float-vs-exact cross checks.
FLOAT_SINGULAR_TOL = 1e-8


class CorankError(Exception):
    """Raised when a row span has corank > 1 and the unit normal is not unique."""


@dataclass(frozen=True)
class SpectralSummary:
    """Full singular spectrum of a real matrix, sorted descending."""

    singular_values: np.ndarray
    smallest: float
    largest: float
    hs_norm: float


def _as_float_matrix(M) -> np.ndarray:
    if isinstance(M, SignedMatrix):
        M = M.values
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {A.shape}")
    if not np.isfinite(A).all():
        raise ValueError("matrix contains non-finite entries")
    return A


def singular_values(M) -> SpectralSummary:
    """All singular values of M, descending, to LAPACK accuracy."""
    A = _as_float_matrix(M)
    svals = np.linalg.svd(A, compute_uv=False)
    svals = np.sort(svals)[::-1]
    return SpectralSummary(
        singular_values=svals,
        smallest=float(svals[-1]),
        largest=float(svals[0]),
        hs_norm=float(np.linalg.norm(A)),
    )


def hs_norm_squared(M) -> int:
    """Squared Hilbert-Schmidt norm by integer arithmetic (exact for int input)."""
    if isinstance(M, SignedMatrix):
        M = M.values
    A = np.asarray(M)
    if not np.issubdtype(A.dtype, np.integer):
        raise ValueError("hs_norm_squared expects an integer matrix")
    return int(np.sum(A.astype(np.int64) ** 2))


def _rowspace_basis(basis_rows: np.ndarray) -> tuple[np.ndarray, int]:
    """Orthonormal basis of the row space and its dimension (SVD-based)."""
    B = _as_float_matrix(basis_rows)
    _, s, vt = np.linalg.svd(B, full_matrices=False)
    if s.size == 0:
        return np.zeros((0, B.shape[1])), 0
    tol = s[0] * max(B.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    return vt[:rank], rank


def distance_to_span(r, basis_rows) -> float:
    """Euclidean distance from r to the span of the given rows.

    Projects onto an orthonormal basis of the row space and re-orthogonalizes
    the residual once; rank-deficient bases are handled.
    """
    r = np.asarray(r, dtype=np.float64)
    onb, rank = _rowspace_basis(np.atleast_2d(basis_rows))
    if rank == 0:
        return float(np.linalg.norm(r))
    resid = r - onb.T @ (onb @ r)
    resid -= onb.T @ (onb @ resid)
    return float(np.linalg.norm(resid))


def unit_normal(basis_rows) -> np.ndarray:
    """Unit vector orthogonal to the span of (n-1) rows in R^n.

    Sign convention: first coordinate of magnitude > 1e-12 is positive.
    Raises CorankError when the span has dimension < n-1.
    """
    B = _as_float_matrix(np.atleast_2d(basis_rows))
    m, n = B.shape
    if m != n - 1:
        raise ValueError(f"expected an (n-1) x n matrix, got {B.shape}")
    _, s, vt = np.linalg.svd(B, full_matrices=True)
    tol = (s[0] if s.size else 0.0) * max(B.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if rank < n - 1:
        raise CorankError(f"row span has dimension {rank} < {n - 1}; normal not unique")
    v = vt[-1]
    lead = np.flatnonzero(np.abs(v) > 1e-12)
    if lead.size and v[lead[0]] < 0:
        v = -v
    return v


# -- exact rank over the rationals -------------------------------------------

_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)  # deterministic < 3.3e24


def _is_prime(x: int) -> bool:
    if x < 2:
        return False
    for p in _MR_BASES:
        if x % p == 0:
            return x == p
    d, r = x - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        y = pow(a, d, x)
        if y in (1, x - 1):
            continue
        for _ in range(r - 1):
            y = y * y % x
            if y == x - 1:
                break
        else:
            return False
    return True


def _random_prime_62bit() -> int:
    while True:
        cand = (1 << 61) | secrets.randbits(61) | 1
        if _is_prime(cand):
            return cand


_PRIME_PAIR: list[int] = []


def _prime_pair() -> list[int]:
    if not _PRIME_PAIR:
        p = _random_prime_62bit()
        q = _random_prime_62bit()
        while q == p:
            q = _random_prime_62bit()
        _PRIME_PAIR.extend((p, q))
    return _PRIME_PAIR


def _rank_mod_p(rows: list[list[int]], p: int) -> int:
    a = [[x % p for x in row] for row in rows]
    m, n = len(a), len(a[0])
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, m) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        inv = pow(a[r][c], -1, p)
        arow = a[r]
        for i in range(r + 1, m):
            f = a[i][c]
            if f:
                f = f * inv % p
                irow = a[i]
                for j in range(c, n):
                    irow[j] = (irow[j] - f * arow[j]) % p
        r += 1
        if r == m:
            break
    return r


def _bareiss_rank(rows: list[list[int]]) -> int:
    """Fraction-free elimination with exact integer arithmetic.

    Pivot is the first nonzero in column order; an all-zero column is skipped
    and elimination continues on the remaining columns.
    """
    a = [row[:] for row in rows]
    m, n = len(a), len(a[0])
    prev = 1
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, m) if a[i][c]), None)
        if piv is None:
            continue
        a[r], a[piv] = a[piv], a[r]
        arc = a[r][c]
        arow = a[r]
        for i in range(r + 1, m):
            aic = a[i][c]
            irow = a[i]
            for j in range(c + 1, n):
                irow[j] = (arc * irow[j] - aic * arow[j]) // prev
            irow[c] = 0
        prev = arc
        r += 1
        if r == m:
            break
    return r


def _to_int_rows(M) -> list[list[int]]:
    if isinstance(M, SignedMatrix):
        M = M.values
    A = np.asarray(M)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {A.shape}")
    if np.issubdtype(A.dtype, np.integer):
        return [[int(x) for x in row] for row in A]
    if np.issubdtype(A.dtype, np.floating):
        if not np.isfinite(A).all() or not (A == np.rint(A)).all():
            raise ValueError("exact_rank expects integer entries")
        return [[int(x) for x in np.rint(row)] for row in A]
    raise ValueError(f"unsupported dtype {A.dtype} for exact_rank")


def exact_rank(M) -> int:
    """Rank over the rationals of an integer matrix, exactly."""
    rows = _to_int_rows(M)
    m, n = len(rows), len(rows[0])
    rmin = min(m, n)
    p1, p2 = _prime_pair()
    r1 = _rank_mod_p(rows, p1)
    if r1 == rmin and _rank_mod_p(rows, p2) == rmin:
        # full rank mod p lower-bounds the rational rank, which caps at rmin
        return rmin
    return _bareiss_rank(rows)


def is_singular(M) -> bool:
    """Exact singularity decision for a square integer matrix."""
    rows = _to_int_rows(M)
    if len(rows) != len(rows[0]):
        raise ValueError("is_singular expects a square matrix")
    return exact_rank(M) < len(rows)
