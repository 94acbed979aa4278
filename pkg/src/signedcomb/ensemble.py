"""Sampling for the signed combinatorial row ensemble.

A row of the ensemble is uniform over the ``{-1, 0, 1}``-vectors of length
``n`` with exactly ``d`` nonzero entries.  Sampling factorizes into a uniform
``d``-subset (the support) and independent Rademacher signs on that support;
matrices stack independent rows.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

Label = "int | str"

_MASK64 = (1 << 64) - 1


def _label_key(label) -> int:
    # repr() keeps int 0 and str "0" distinct and is stable across processes.
    digest = hashlib.sha256(repr(label).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class EnsembleParams:
    """Row-law dimensions: ``n`` columns, exactly ``d`` nonzeros per row.

    ``d`` defaults to ``n/2``, which requires ``n`` even.
    """

    n: int
    d: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.d is None:
            if self.n % 2:
                raise ValueError("default d = n/2 requires n even")
            object.__setattr__(self, "d", self.n // 2)
        if not 1 <= self.d <= self.n:
            raise ValueError(f"need 1 <= d <= n, got d={self.d}, n={self.n}")

    @property
    def row_count(self) -> int:
        """Number of admissible rows, C(n, d) * 2**d."""
        return math.comb(self.n, self.d) * 2**self.d


class RngStream:
    """Deterministic random stream addressed by (seed, path).

    Same (seed, path) always reproduces the same byte sequence; distinct
    paths yield statistically independent streams.  Backed by the Philox
    counter-based generator keyed through a SeedSequence whose spawn key is
    a hash of the path labels.
    """

    def __init__(self, seed: int, path: Sequence = ()):
        self.seed = int(seed)
        self.path = tuple(path)
        spawn_key = tuple(_label_key(label) for label in self.path)
        seq = np.random.SeedSequence(entropy=self.seed & _MASK64, spawn_key=spawn_key)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *labels) -> "RngStream":
        """Fresh independent substream under an extended path."""
        return RngStream(self.seed, self.path + tuple(labels))

    def __repr__(self):  # pragma: no cover
        return f"RngStream(seed={self.seed}, path={self.path!r})"


def derive_stream(seed: int, path: Sequence = ()) -> RngStream:
    """Derive the reproducible stream for (seed, path)."""
    return RngStream(seed, path)


@dataclass(frozen=True)
class RowSample:
    """One sampled row: dense values plus its support/sign factorization."""

    values: np.ndarray  # (n,) int8 in {-1, 0, 1}
    support: np.ndarray  # (d,) sorted column indices of the nonzeros
    signs: np.ndarray  # (d,) int8 signs aligned with support


@dataclass(frozen=True)
class SignedMatrix:
    """Stack of m independent ensemble rows (entries in {-1, 0, 1})."""

    values: np.ndarray  # (m, n) int8
    params: EnsembleParams

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int8)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 2 or vals.shape[1] != self.params.n:
            raise ValueError(f"expected shape (m, {self.params.n}), got {vals.shape}")
        if not np.isin(vals, (-1, 0, 1)).all():
            raise ValueError("entries must lie in {-1, 0, 1}")
        weights = np.count_nonzero(vals, axis=1)
        if not (weights == self.params.d).all():
            raise ValueError(f"every row must have exactly d={self.params.d} nonzeros")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    def row(self, i: int) -> RowSample:
        values = self.values[i]
        support = np.flatnonzero(values)
        return RowSample(values=values, support=support, signs=values[support])

    @property
    def rows(self) -> list[RowSample]:
        return [self.row(i) for i in range(self.m)]

    def to_csv(self) -> str:
        """Row-major CSV of integer entries."""
        buf = io.StringIO()
        for row in self.values:
            buf.write(",".join(str(int(x)) for x in row))
            buf.write("\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, params: EnsembleParams | None = None) -> "SignedMatrix":
        rows = [
            [int(tok) for tok in line.split(",")]
            for line in text.strip().splitlines()
            if line.strip()
        ]
        if not rows:
            raise ValueError("empty CSV matrix")
        vals = np.array(rows, dtype=np.int8)
        if params is None:
            d = int(np.count_nonzero(vals[0]))
            params = EnsembleParams(n=vals.shape[1], d=d)
        return cls(values=vals, params=params)


def _support_batch(params: EnsembleParams, count: int, rng: RngStream) -> np.ndarray:
    """(count, d) uniform random d-subsets of [n], via per-row Fisher-Yates."""
    base = np.tile(np.arange(params.n), (count, 1))
    return rng.generator.permuted(base, axis=1)[:, : params.d]


def _sign_batch(d: int, count: int, rng: RngStream) -> np.ndarray:
    return (rng.generator.integers(0, 2, size=(count, d), dtype=np.int8) * 2 - 1).astype(np.int8)


def sample_rows_dense(params: EnsembleParams, count: int, rng: RngStream) -> np.ndarray:
    """(count, n) int8 array of independent ensemble rows."""
    if count < 1:
        raise ValueError("count must be >= 1")
    supports = _support_batch(params, count, rng)
    signs = _sign_batch(params.d, count, rng)
    dense = np.zeros((count, params.n), dtype=np.int8)
    np.put_along_axis(dense, supports, signs, axis=1)
    return dense


def sample_row(params: EnsembleParams, rng: RngStream) -> RowSample:
    """One row, uniform over all C(n, d) * 2**d admissible rows."""
    support = np.sort(rng.generator.permutation(params.n)[: params.d])
    signs = _sign_batch(params.d, 1, rng)[0]
    values = np.zeros(params.n, dtype=np.int8)
    values[support] = signs
    return RowSample(values=values, support=support, signs=signs)


def sample_matrix(params: EnsembleParams, m: int, rng: RngStream) -> SignedMatrix:
    """m independent rows stacked into a SignedMatrix."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return SignedMatrix(values=sample_rows_dense(params, m, rng), params=params)


def empirical_covariance(params: EnsembleParams, reps: int, rng: RngStream) -> np.ndarray:
    """(1/reps) * sum of R^T R over sampled rows R; expectation is (d/n) I."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rows = sample_rows_dense(params, reps, rng).astype(np.float64)
    return rows.T @ rows / reps


def all_rows(params: EnsembleParams) -> list[tuple[int, ...]]:
    """Every admissible row, as integer tuples (used by exact enumeration)."""
    import itertools

    out = []
    for support in itertools.combinations(range(params.n), params.d):
        for mask in range(2**params.d):
            row = [0] * params.n
            for bit, idx in enumerate(support):
                row[idx] = 1 if (mask >> bit) & 1 else -1
            out.append(tuple(row))
    return out
