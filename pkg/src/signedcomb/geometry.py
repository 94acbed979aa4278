"""Vector taxonomy and pairwise-difference machinery.

The central object is the difference lift D(v) with coordinates v_i - v_j for
i < j; its arithmetic structure is what the CLCD scans probe.  This module
also classifies unit vectors (sparse / compressible / incompressible,
almost-constant or not), extracts separated coordinate subsets from
non-almost-constant vectors, and builds small probe-audited epsilon-nets on
the unit sphere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import derive_stream

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class DifferenceVector:
    """Pairwise-difference lift of a length-n vector, lexicographic (i<j)."""

    entries: np.ndarray  # shape (n*(n-1)/2,)
    source_dim: int


@dataclass(frozen=True)
class TaxonomyVerdict:
    """Where a unit vector sits in the sparse/compressible decomposition."""

    kind: str  # "sparse" | "compressible" | "incompressible"
    sparse_distance: float
    almost_constant: bool
    witness_lambda: float | None
    params: tuple[float, float]  # (delta, rho)


def pair_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Index arrays (i, j) with i < j in lexicographic order."""
    return np.triu_indices(n, k=1)


def difference_vector(v) -> DifferenceVector:
    """D(v) with coordinates v_i - v_j for i < j."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ValueError("difference_vector needs a 1-d vector of length >= 2")
    i, j = pair_indices(v.size)
    return DifferenceVector(entries=v[i] - v[j], source_dim=v.size)


def _require_unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ValueError(f"expected a unit vector, got norm {norm!r}")
    return v


def sparse_distance(v, delta: float) -> float:
    """L2 distance to the set of floor(delta*n)-sparse vectors.

    The nearest sparse vector keeps the top-magnitude coordinates, so the
    distance is the tail norm after a magnitude sort.
    """
    v = np.asarray(v, dtype=np.float64)
    keep = int(math.floor(delta * v.size))
    if keep >= v.size:
        return 0.0
    mags = np.sort(np.abs(v))[::-1]
    return float(np.linalg.norm(mags[keep:]))


def almost_constant_witness(v, delta: float, rho: float) -> float | None:
    """A level lambda with >= (1-delta)*n coordinates within rho/sqrt(n), if any.

    Decided exactly by sliding a closed window of width 2*rho/sqrt(n) over the
    sorted coordinates; an optimal window can always be slid until its left
    edge touches a coordinate, so anchoring at coordinates is exhaustive.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    width = 2.0 * rho / math.sqrt(n)
    needed = (1.0 - delta) * n
    s = np.sort(v)
    right = np.searchsorted(s, s + width, side="right")
    counts = right - np.arange(n)
    best = int(np.argmax(counts))
    if counts[best] >= needed - 1e-9:
        lo, hi = s[best], s[right[best] - 1]
        return float((lo + hi) / 2.0)
    return None


def classify_vector(v, delta: float, rho: float) -> TaxonomyVerdict:
    """Sparse/compressible/incompressible verdict plus the almost-constant flag."""
    if not (0.0 < delta < 1.0 and 0.0 < rho < 1.0):
        raise ValueError("delta and rho must lie in (0, 1)")
    v = _require_unit(v)
    dist = sparse_distance(v, delta)
    if dist == 0.0:
        kind = "sparse"
    elif dist <= rho:
        kind = "compressible"
    else:
        kind = "incompressible"
    witness = almost_constant_witness(v, delta, rho)
    return TaxonomyVerdict(
        kind=kind,
        sparse_distance=dist,
        almost_constant=witness is not None,
        witness_lambda=witness,
        params=(delta, rho),
    )


def separated_subsets(v, delta: float, rho: float):
    """Disjoint index sets (sigma1, sigma2) with a uniform coordinate gap.

    For a non-almost-constant unit vector, returns sets of size >= delta*n/8
    with rho/sqrt(2n) <= |v_i - v_j| <= 6/sqrt(delta*n) for every cross pair,
    found by sorting the coordinates and scanning gap positions.  Returns
    None only if the exhaustive scan fails.
    """
    v = _require_unit(v)
    if almost_constant_witness(v, delta, rho) is not None:
        raise ValueError("separated_subsets requires a non-almost-constant vector")
    n = v.size
    m0 = math.ceil(delta * n / 8.0)
    gap_lo = rho / math.sqrt(2.0 * n)
    gap_hi = 6.0 / math.sqrt(delta * n)
    order = np.argsort(v)
    s = v[order]
    for t in range(m0 - 1, n - m0):
        c = int(np.searchsorted(s, s[t] + gap_lo, side="left"))
        if c + m0 > n:
            continue
        lo_idx = t - m0 + 1
        if s[c + m0 - 1] - s[lo_idx] <= gap_hi:
            sigma1 = np.sort(order[lo_idx : t + 1])
            sigma2 = np.sort(order[c : c + m0])
            return sigma1, sigma2
    return None


def volumetric_net(n: int, eps: float, seed: int = 0) -> np.ndarray:
    """Probe-audited eps-net of the unit sphere in R^n (n <= 8).

    Greedy farthest-point insertion over fresh random clouds, repeated until a
    full 1e5-probe audit finds no sphere point farther than eps from the net.
    Inserted points are pairwise > 0.9*eps apart, so the packing bound keeps
    the cardinality below (3/eps)^n.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if not 1 <= n <= 8:
        raise ValueError("dimension guard: volumetric_net supports n <= 8")
    if n == 1:
        return np.array([[-1.0], [1.0]])
    rng = derive_stream(seed, ("volumetric-net", n, float(eps))).generator
    tau = 0.9 * eps
    axes = np.vstack([np.eye(n), -np.eye(n)])
    net = [axes[0]]

    def min_dist(points, net_arr):
        # chunked pairwise distances to keep memory bounded
        out = np.full(len(points), np.inf)
        for start in range(0, net_arr.shape[0], 512):
            block = net_arr[start : start + 512]
            d2 = np.sum((points[:, None, :] - block[None, :, :]) ** 2, axis=2)
            out = np.minimum(out, np.sqrt(d2.min(axis=1)))
        return out

    def insert_uncovered(points):
        added = 0
        dist = min_dist(points, np.array(net))
        while True:
            far = int(np.argmax(dist))
            if dist[far] <= tau:
                break
            net.append(points[far])
            added += 1
            dist = np.minimum(dist, np.linalg.norm(points - points[far], axis=1))
        return added

    insert_uncovered(axes)
    audit_size = 100_000
    for _ in range(64):
        probes = rng.normal(size=(audit_size, n))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        if insert_uncovered(probes) == 0:
            break
    out = np.array(net)
    bound = (3.0 / eps) ** n
    if out.shape[0] > bound:
        raise RuntimeError(f"net of size {out.shape[0]} exceeds cardinality bound {bound:.3g}")
    return out


def sign_pattern_vector(p: int, q: int, n: int) -> np.ndarray:
    """The length-n pattern with p ones, then n/2 zeros, then q minus-ones."""
    if n % 2:
        raise ValueError("n must be even")
    if p < 0 or q < 0 or p + q != n // 2:
        raise ValueError(f"need p + q = n/2 with p, q >= 0; got p={p}, q={q}, n={n}")
    return np.concatenate([np.ones(p), np.zeros(n // 2), -np.ones(q)])


def tensor_pair_norm(p: int, q: int, v) -> float:
    """Norm of D(a) (x) D(v) for the (p, q) sign pattern a.

    Computed both in closed form, sqrt(n^2/4 + 4 p q) * ||D(v)||, and by
    direct expansion of all (a_i - a_j)(v_k - v_l) coordinates; the two must
    agree to 1e-12 relative.
    """
    v = np.asarray(v, dtype=np.float64)
    n = v.size
    a = sign_pattern_vector(p, q, n)
    dv = difference_vector(v).entries
    da = difference_vector(a).entries
    closed = math.sqrt(n * n / 4.0 + 4.0 * p * q) * float(np.linalg.norm(dv))
    direct = float(np.linalg.norm(np.outer(da, dv)))
    scale = max(closed, direct)
    if scale > 0.0 and abs(closed - direct) > 1e-12 * scale:
        raise RuntimeError(
            f"tensor norm mismatch: closed={closed!r}, direct={direct!r}"
        )
    return closed
