"""Certified grid scans for combinatorial least common denominators.

For a target vector w (here always a difference lift D(v), or the tensor
D(a) (x) D(v) in the pair form) the scan walks theta over a uniform grid and
tests the defining inequality

    dist(theta * w, Z^dim)  <  min(gamma * ||theta * w||_2, alpha).

Writing F(theta) for the margin (distance minus threshold), F is Lipschitz
with constant (1 + gamma) * ||w||_2, so a grid value F(theta_k) above
(1 + gamma) * ||w||_2 * h certifies that no crossing hides between certified
grid points.  Near zero no grid is needed: while every coordinate satisfies
|theta w_i| < 1/2 the lattice distance equals ||theta w||_2 itself, which
strictly exceeds the threshold for gamma < 1, so the interval
(0, 1/(2 ||w||_inf)] is certified analytically.

Outcomes: Bracket (first grid point satisfying the inequality, with the
preceding grid point as lower end), AtLeast (no crossing certified up to
theta_max), or Unresolved (some grid point could be neither certified nor
bracketed).  Exact boundary cases F = 0 are flagged, never guessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import difference_vector, sign_pattern_vector

_CHUNK = 8192
#: dimensionless default grid step: h = GRID_STEP_SCALE / ||w||_2
GRID_STEP_SCALE = 1e-4


def lattice_distance(x) -> float:
    """Euclidean distance from x to the integer lattice (round half to even)."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.linalg.norm(x - np.rint(x)))


def large_clcd_floor(n: int, delta: float) -> float:
    """(1/7) * sqrt(delta * n), the guaranteed floor for non-almost-constant v
    whenever gamma < delta * rho / 12."""
    return math.sqrt(delta * n) / 7.0


def default_theta_max(n: int, delta: float = 0.1) -> float:
    """Scan ceiling used for lower-bound checks: 4x the guaranteed floor."""
    return 4.0 * large_clcd_floor(n, delta)


@dataclass(frozen=True)
class ClcdQuery:
    """Scan parameters: threshold pair (alpha, gamma), ceiling and grid step.

    ``h=None`` selects the dimensionless default 1e-4 / ||w||_2.  In the pair
    form alpha plays the role of L and gamma the role of u.
    """

    alpha: float
    gamma: float
    theta_max: float
    h: float | None = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.theta_max <= 0:
            raise ValueError("theta_max must be positive")
        if self.h is not None:
            if self.h <= 0:
                raise ValueError("h must be positive")
            if self.theta_max < self.h:
                raise ValueError("theta_max must be >= h")


@dataclass(frozen=True)
class ClcdResult:
    """Outcome of a certified scan.

    kind == "bracket":    the defining inequality holds at theta_hi and the
                          bracket width is one grid step.
    kind == "at_least":   every grid point up to theta_max carried the
                          Lipschitz certificate; no crossing in (0, theta_max].
    kind == "unresolved": scanning reached theta_max without a crossing but
                          theta_uncertified could not be certified.

    theta_uncertified is also set on a bracket whose certified prefix was
    interrupted earlier; certified_lower_bound accounts for it.
    """

    kind: str
    theta_lo: float | None
    theta_hi: float | None
    theta_max: float | None
    theta_uncertified: float | None
    lipschitz_margin: float
    grid_step: float

    @property
    def certified_lower_bound(self) -> float:
        """Largest theta below which the scan certified no crossing."""
        if self.theta_uncertified is not None:
            return max(self.theta_uncertified - self.grid_step, 0.0)
        if self.kind == "bracket":
            return self.theta_lo
        return self.theta_max


def _scan_blocks(blocks, query: ClcdQuery) -> ClcdResult:
    """Core scan over a weighted-block representation of w.

    blocks is a list of (vector, multiplicity) pairs; w is the concatenation
    of multiplicity copies of each vector.  Distances and norms factor over
    blocks, so copies are never materialized.
    """
    blocks = [(np.asarray(vec, dtype=np.float64), int(mult)) for vec, mult in blocks if mult > 0]
    norm_sq = sum(mult * float(vec @ vec) for vec, mult in blocks)
    if norm_sq == 0.0 or not blocks:
        raise ValueError("scan target has zero norm; the denominator direction is undefined")
    norm_w = math.sqrt(norm_sq)
    inf_w = max(float(np.max(np.abs(vec))) for vec, _ in blocks)
    h = query.h if query.h is not None else GRID_STEP_SCALE / norm_w
    if query.theta_max < h:
        raise ValueError("theta_max must be >= h")
    margin = (1.0 + query.gamma) * norm_w * h
    theta_safe = 1.0 / (2.0 * inf_w)
    k_max = math.ceil(query.theta_max / h)
    first_unc: float | None = None

    for start in range(1, k_max + 1, _CHUNK):
        ks = np.arange(start, min(start + _CHUNK, k_max + 1), dtype=np.float64)
        thetas = ks * h
        f_sq = np.zeros_like(thetas)
        for vec, mult in blocks:
            x = thetas[:, None] * vec[None, :]
            resid = x - np.rint(x)
            f_sq += mult * np.einsum("ij,ij->i", resid, resid)
        f = np.sqrt(f_sq)
        g = np.minimum(query.gamma * norm_w * thetas, query.alpha)
        F = f - g
        beyond = thetas > theta_safe
        neg = beyond & (F < 0.0)
        unc = beyond & (F >= 0.0) & (F <= margin)
        if neg.any():
            i_neg = int(np.argmax(neg))
            if first_unc is None and unc[:i_neg].any():
                first_unc = float(thetas[int(np.argmax(unc[:i_neg]))])
            return ClcdResult(
                kind="bracket",
                theta_lo=float((ks[i_neg] - 1.0) * h),
                theta_hi=float(thetas[i_neg]),
                theta_max=None,
                theta_uncertified=first_unc,
                lipschitz_margin=margin,
                grid_step=h,
            )
        if first_unc is None and unc.any():
            first_unc = float(thetas[int(np.argmax(unc))])

    if first_unc is None:
        return ClcdResult(
            kind="at_least",
            theta_lo=None,
            theta_hi=None,
            theta_max=query.theta_max,
            theta_uncertified=None,
            lipschitz_margin=margin,
            grid_step=h,
        )
    return ClcdResult(
        kind="unresolved",
        theta_lo=None,
        theta_hi=None,
        theta_max=None,
        theta_uncertified=first_unc,
        lipschitz_margin=margin,
        grid_step=h,
    )


def scan_lattice_target(w, query: ClcdQuery) -> ClcdResult:
    """Certified scan for an arbitrary coordinate vector w (cross-check path)."""
    return _scan_blocks([(np.asarray(w, dtype=np.float64), 1)], query)


def clcd_scan(v, query: ClcdQuery) -> ClcdResult:
    """Certified scan for the denominator of a single vector v (target D(v))."""
    dv = difference_vector(v).entries
    if not np.any(dv):
        raise ValueError("D(v) = 0; CLCD direction undefined for constant vectors")
    return _scan_blocks([(dv, 1)], query)


def pair_clcd_scan(p: int, q: int, v, query: ClcdQuery) -> ClcdResult:
    """Certified scan for the pair denominator, target D(a^(p,q)) (x) D(v).

    The tensor splits into n^2/4 copies of D(v), p*q copies of 2 D(v) and
    zeros, so the scan runs on that counting decomposition; dropping the zero
    coordinates changes neither distances nor norms.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    sign_pattern_vector(p, q, n)  # validates parity and p, q >= 0
    dv = difference_vector(v).entries
    if not np.any(dv):
        raise ValueError("zero tensor: D(v) = 0")
    blocks = [(dv, n * n // 4)]
    if p * q > 0:
        blocks.append((2.0 * dv, p * q))
    return _scan_blocks(blocks, query)


def stability_lower_bound(
    v,
    w,
    alpha: float,
    gamma: float,
    theta_max: float | None = None,
    h: float | None = None,
) -> float:
    """Certified floor for the denominator of a perturbed vector.

    Requires ||v - w||_2 < gamma * ||D(v)||_2 / (5 sqrt(n)).  Returns
    min(scan lower bound for v at (alpha, gamma), alpha / (4 sqrt(n) ||v-w||)),
    which lower-bounds any certified scan of w at (alpha/2, gamma/2) up to one
    grid step.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = v.size
    dv_norm = float(np.linalg.norm(difference_vector(v).entries))
    drift = float(np.linalg.norm(v - w))
    if not drift < gamma * dv_norm / (5.0 * math.sqrt(n)):
        raise ValueError(
            "perturbation too large: need ||v - w|| < gamma * ||D(v)|| / (5 sqrt(n))"
        )
    if theta_max is None:
        theta_max = default_theta_max(n)
    result = clcd_scan(v, ClcdQuery(alpha=alpha, gamma=gamma, theta_max=theta_max, h=h))
    bound = result.certified_lower_bound
    if drift > 0.0:
        bound = min(bound, alpha / (4.0 * math.sqrt(n) * drift))
    return bound
