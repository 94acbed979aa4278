"""Exact and Monte Carlo study of the row linear form W_v.

W_v = sum_i xi_i v_i where xi is a uniform ensemble row: a uniform d-subset
support with independent Rademacher signs.  The law of W_v is a finite atom
distribution; for moderate n it is enumerated exactly, which gives exact
Levy concentration values to check the Monte Carlo estimator and the
anti-concentration inequality driven by the certified denominator scans.
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .ensemble import EnsembleParams, RngStream
from .geometry import difference_vector

#: merge tolerance for atom values; summation noise must not fragment atoms
ATOM_MERGE_TOL = 1e-12
#: guard on exact enumeration size C(n, d) * 2**d
ENUMERATION_GUARD = 10**7
#: two-sided failure budget of the uniform-CDF confidence bound
CI_BETA = 0.01


@dataclass(frozen=True)
class AtomDistribution:
    """Exact finite law: strictly increasing values with positive weights."""

    values: np.ndarray
    weights: np.ndarray
    n: int
    d: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)
        if values.shape != weights.shape or values.ndim != 1:
            raise ValueError("values and weights must be 1-d arrays of equal length")
        if np.any(np.diff(values) <= 0):
            raise ValueError("atom values must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("atom weights must be positive")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.weights.tolist()))

    def moment(self, k: int) -> float:
        return float(np.sum(self.weights * self.values**k))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("value,weight\n")
        for v, w in self.atoms:
            buf.write(f"{v!r},{w!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n: int = 0, d: int = 0) -> "AtomDistribution":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        if not lines or lines[0] != "value,weight":
            raise ValueError("expected a 'value,weight' header")
        pairs = [tuple(float(tok) for tok in ln.split(",")) for ln in lines[1:]]
        values = np.array([p[0] for p in pairs])
        weights = np.array([p[1] for p in pairs])
        return cls(values=values, weights=weights, n=n, d=d)


@dataclass(frozen=True)
class LevyEstimate:
    """Value of the concentration function sup_lambda P(|X - lambda| <= eps)."""

    epsilon: float
    estimate: float
    ci_halfwidth: float
    sample_count: int
    method: str  # "exact" | "monte_carlo"


def _params_for(v, params: EnsembleParams | None) -> EnsembleParams:
    v = np.asarray(v, dtype=np.float64)
    return params if params is not None else EnsembleParams(n=v.size)


def sample_Wv_batch(v, params: EnsembleParams | None, count: int, rng: RngStream) -> np.ndarray:
    """count independent draws of W_v (vectorized support + sign sampling)."""
    v = np.asarray(v, dtype=np.float64)
    params = _params_for(v, params)
    if v.size != params.n:
        raise ValueError(f"vector length {v.size} != n = {params.n}")
    base = np.tile(np.arange(params.n), (count, 1))
    supports = rng.generator.permuted(base, axis=1)[:, : params.d]
    signs = rng.generator.integers(0, 2, size=(count, params.d)) * 2 - 1
    return np.sum(v[supports] * signs, axis=1)


def sample_Wv(v, params: EnsembleParams | None, rng: RngStream) -> float:
    """One draw of W_v."""
    return float(sample_Wv_batch(v, params, 1, rng)[0])


def _merge_counts(values: np.ndarray, counts: np.ndarray, total: int, n: int, d: int) -> AtomDistribution:
    order = np.argsort(values, kind="stable")
    values = values[order]
    counts = counts[order]
    breaks = np.flatnonzero(np.diff(values) > ATOM_MERGE_TOL) + 1
    groups = np.split(np.arange(values.size), breaks)
    merged_vals = np.empty(len(groups))
    merged_wts = np.empty(len(groups))
    for g, idx in enumerate(groups):
        c = counts[idx]
        merged_vals[g] = float(np.sum(values[idx] * c) / np.sum(c))
        merged_wts[g] = float(np.sum(c)) / total
    return AtomDistribution(values=merged_vals, weights=merged_wts, n=n, d=d)


def enumerate_Wv(v, params: EnsembleParams | None = None) -> AtomDistribution:
    """Exact law of W_v by exhausting all C(n, d) * 2**d outcomes."""
    v = np.asarray(v, dtype=np.float64)
    params = _params_for(v, params)
    n, d = params.n, params.d
    if v.size != n:
        raise ValueError(f"vector length {v.size} != n = {n}")
    total = params.row_count
    if total > ENUMERATION_GUARD:
        raise ValueError(f"enumeration size {total} exceeds guard {ENUMERATION_GUARD}")
    supports = np.array(list(itertools.combinations(range(n), d)), dtype=np.intp)
    signs = ((np.arange(2**d)[:, None] >> np.arange(d)[None, :]) & 1) * 2 - 1
    outcomes = (v[supports] @ signs.T).ravel()
    return _merge_counts(outcomes, np.ones(outcomes.size, dtype=np.int64), total, n, d)


def enumerate_Wv_pair(v, p: int, q: int, params: EnsembleParams | None = None) -> AtomDistribution:
    """Exact conditional law of W_v given p plus-signs and q minus-signs."""
    v = np.asarray(v, dtype=np.float64)
    params = _params_for(v, params)
    n, d = params.n, params.d
    if p < 0 or q < 0 or p + q != d:
        raise ValueError(f"need p + q = d with p, q >= 0; got p={p}, q={q}, d={d}")
    values = []
    counts = []
    idx = np.arange(n)
    for plus in itertools.combinations(range(n), p):
        rest = np.setdiff1d(idx, plus, assume_unique=True)
        plus_sum = float(np.sum(v[list(plus)])) if p else 0.0
        for minus in itertools.combinations(rest.tolist(), q):
            values.append(plus_sum - (float(np.sum(v[list(minus)])) if q else 0.0))
            counts.append(1)
    total = math.comb(n, p) * math.comb(n - p, q)
    return _merge_counts(np.array(values), np.array(counts, dtype=np.int64), total, n, d)


def sign_split_probability(d: int, p: int) -> float:
    """P(exactly p plus-signs among the d support signs) = C(d, p) / 2**d."""
    return math.comb(d, p) / 2.0**d


def levy_exact(dist: AtomDistribution, epsilon: float) -> LevyEstimate:
    """Exact sup_lambda P(|X - lambda| <= eps) for an atom distribution.

    The optimal closed window of width 2*eps can be slid until its left edge
    sits on an atom, so a sweep anchored at atoms is exhaustive.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    values, weights = dist.values, dist.weights
    cum = np.cumsum(weights)
    right = np.searchsorted(values, values + 2.0 * epsilon + ATOM_MERGE_TOL, side="right")
    mass = cum[right - 1] - cum + weights
    return LevyEstimate(
        epsilon=float(epsilon),
        estimate=float(min(mass.max(), 1.0)),
        ci_halfwidth=0.0,
        sample_count=0,
        method="exact",
    )


def window_mass_max(sorted_samples: np.ndarray, epsilon: float) -> float:
    """Max fraction of sorted samples inside any closed window of width 2*eps."""
    s = np.asarray(sorted_samples, dtype=np.float64)
    right = np.searchsorted(s, s + 2.0 * epsilon + ATOM_MERGE_TOL, side="right")
    return float((right - np.arange(s.size)).max()) / s.size


def mc_ci_halfwidth(count: int, beta: float = CI_BETA) -> float:
    """Two-sided uniform-CDF bound covering the sup-window estimator."""
    return 2.0 * math.sqrt(math.log(2.0 / beta) / (2.0 * count))


def levy_mc(
    v,
    epsilon: float,
    count: int,
    rng: RngStream,
    params: EnsembleParams | None = None,
) -> LevyEstimate:
    """Monte Carlo estimate of the concentration function of W_v.

    The estimator is a supremum over windows and therefore biased upward; the
    reported CI halfwidth is a uniform empirical-CDF bound, which covers a
    difference of CDF values uniformly over window positions.
    """
    if count < 100:
        raise ValueError("need at least 100 samples")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    samples = np.sort(sample_Wv_batch(v, params, count, rng))
    return LevyEstimate(
        epsilon=float(epsilon),
        estimate=window_mass_max(samples, epsilon),
        ci_halfwidth=mc_ci_halfwidth(count),
        sample_count=count,
        method="monte_carlo",
    )


# -- anti-concentration inequality checks -------------------------------------


@dataclass(frozen=True)
class LotRow:
    epsilon: float
    levy: float
    denominator: float
    ratio: float


@dataclass(frozen=True)
class LotReport:
    """Fitted constant for the concentration bound of one vector.

    c_hat is the smallest constant C with L(W_v, eps) <= C * (eps + 1/lb +
    exp(-2 alpha^2 / n)) over the epsilon grid, where lb is the certified
    denominator lower bound supplied by the caller.  The hypothesis flag
    records whether ||D(v)|| >= b sqrt(n); the report is still produced when
    the hypothesis fails, it is just labelled out-of-hypothesis.
    """

    c_hat: float
    rows: list[LotRow] = field(repr=False)
    clcd_lower_bound: float
    alpha: float
    gamma: float
    in_hypothesis: bool
    b: float
    method: str


def lot_check(
    v,
    eps_grid,
    alpha: float,
    gamma: float,
    clcd_lb: float,
    params: EnsembleParams | None = None,
    b: float = 0.5,
    mc_count: int | None = None,
    rng: RngStream | None = None,
) -> LotReport:
    """Fitted-constant report for the small-ball bound on W_v.

    Uses the exact enumerated law unless mc_count is given.  clcd_lb must be
    a certified lower bound (bracket lower end or certified ceiling) from a
    denominator scan at the same (alpha, gamma).
    """
    v = np.asarray(v, dtype=np.float64)
    params = _params_for(v, params)
    n = params.n
    dv_norm = float(np.linalg.norm(difference_vector(v).entries))
    in_hypothesis = dv_norm >= b * math.sqrt(n)
    tail_term = math.exp(-2.0 * alpha**2 / n)
    inv_lb = math.inf if clcd_lb <= 0 else 1.0 / clcd_lb

    if mc_count is None:
        dist = enumerate_Wv(v, params)
        levy = {eps: levy_exact(dist, eps).estimate for eps in eps_grid}
        method = "exact"
    else:
        if rng is None:
            raise ValueError("Monte Carlo mode needs an RngStream")
        samples = np.sort(sample_Wv_batch(v, params, mc_count, rng))
        levy = {eps: window_mass_max(samples, eps) for eps in eps_grid}
        method = "monte_carlo"

    rows = []
    for eps in eps_grid:
        denom = eps + (1.0 / clcd_lb if clcd_lb > 0 else math.inf) + tail_term
        ratio = 0.0 if math.isinf(denom) else levy[eps] / denom
        rows.append(LotRow(epsilon=float(eps), levy=levy[eps], denominator=denom, ratio=ratio))
    c_hat = max(row.ratio for row in rows)
    return LotReport(
        c_hat=c_hat,
        rows=rows,
        clcd_lower_bound=clcd_lb,
        alpha=alpha,
        gamma=gamma,
        in_hypothesis=in_hypothesis,
        b=b,
        method=method,
    )


def lot_corpus_max(reports) -> float:
    """Aggregate fitted constant over a corpus of reports (max of c_hat)."""
    reports = list(reports)
    if not reports:
        raise ValueError("empty corpus")
    return max(r.c_hat for r in reports)


def enumerate_weighted_signed_sum(x, probs) -> AtomDistribution:
    """Exact law of sum_i x_i sigma_i B_i with P(B_i = 1) = probs[i].

    Used for conditional column-sum laws: each coordinate contributes
    +-x_i with probability probs[i]/2 each and 0 otherwise.  Enumeration is
    3**n outcomes, so keep n small.
    """
    x = np.asarray(x, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if x.shape != probs.shape:
        raise ValueError("x and probs must have the same shape")
    values = np.array([0.0])
    weights = np.array([1.0])
    for xi, pi in zip(x, probs):
        values = np.concatenate([values - xi, values, values + xi])
        weights = np.concatenate([weights * (pi / 2), weights * (1 - pi), weights * (pi / 2)])
        keep = weights > 0
        values, weights = values[keep], weights[keep]
        order = np.argsort(values, kind="stable")
        values, weights = values[order], weights[order]
        breaks = np.flatnonzero(np.diff(values) > ATOM_MERGE_TOL) + 1
        groups = np.split(np.arange(values.size), breaks)
        values = np.array([float(np.mean(values[g])) for g in groups])
        weights = np.array([float(np.sum(weights[g])) for g in groups])
    weights = weights / weights.sum()
    return AtomDistribution(values=values, weights=weights, n=x.size, d=x.size)
