"""Seeded Monte Carlo experiments with CSV/JSONL persistence.

Every experiment draws replica r from the substream (seed, [name, r]), so
results do not depend on worker count or scheduling; aggregation is a
commutative count merge.  Exact enumeration replaces sampling for the
singularity probability whenever the full matrix space is small enough.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from functools import partial

import numpy as np

from . import linalg
from .ensemble import EnsembleParams, derive_stream, sample_matrix, all_rows

WORKERS_ENV = "SIGNEDCOMB_WORKERS"
#: exact enumeration branch is taken when the matrix space is at most this big
ENUMERATION_CUTOFF = 10**6
#: replica counts below this always run serially (pool overhead dominates)
_PARALLEL_MIN = 512

RESULT_COLUMNS = ("experiment", "x", "estimate", "stderr", "reps", "n", "d", "seed")

# default taxonomy / denominator parameters (the hierarchy mu << gamma << 1)
DEFAULT_DELTA = 0.1
DEFAULT_RHO = 0.1
DEFAULT_GAMMA = DEFAULT_DELTA * DEFAULT_RHO / 13.0
DEFAULT_MU = DEFAULT_GAMMA / 10.0


@dataclass(frozen=True)
class ExperimentConfig:
    params: EnsembleParams
    reps: int = 1000
    seed: int = 0
    eps_grid: tuple[float, ...] = ()
    t_grid: tuple[float, ...] = ()
    delta: float = DEFAULT_DELTA
    rho: float = DEFAULT_RHO
    gamma: float = DEFAULT_GAMMA
    mu: float = DEFAULT_MU
    output_path: str | None = None
    format: str = "csv"

    def __post_init__(self):
        object.__setattr__(self, "eps_grid", tuple(float(x) for x in self.eps_grid))
        object.__setattr__(self, "t_grid", tuple(float(x) for x in self.t_grid))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for name, grid in (("eps_grid", self.eps_grid), ("t_grid", self.t_grid)):
            if any(x < 0 for x in grid):
                raise ValueError(f"{name} must be nonnegative")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError(f"{name} must be strictly increasing")
        if self.format not in ("csv", "jsonl"):
            raise ValueError(f"format must be 'csv' or 'jsonl', got {self.format!r}")

    def to_json(self) -> str:
        payload = asdict(self)
        payload["params"] = {"n": self.params.n, "d": self.params.d}
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        payload = json.loads(text)
        payload["params"] = EnsembleParams(**payload["params"])
        for key in ("eps_grid", "t_grid"):
            if key in payload:
                payload[key] = tuple(payload[key])
        return cls(**payload)


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    x: float
    estimate: float
    stderr: float
    reps: int
    n: int
    d: int
    seed: int

    def to_dict(self) -> dict:
        return {key: getattr(self, key) for key in RESULT_COLUMNS}


def binomial_stderr(p_hat: float, reps: int) -> float:
    return math.sqrt(p_hat * (1.0 - p_hat) / reps)


def resolve_workers(explicit: int | None = None) -> int:
    if explicit is not None:
        if explicit < 1:
            raise ValueError("workers must be >= 1")
        return explicit
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_replicas(fn, reps: int, workers: int | None):
    """Ordered map of fn over replica indices, optionally in a process pool."""
    nworkers = resolve_workers(workers)
    if nworkers == 1 or reps < _PARALLEL_MIN:
        return [fn(i) for i in range(reps)]
    chunk = max(1, reps // (nworkers * 8))
    with ProcessPoolExecutor(max_workers=nworkers) as pool:
        return list(pool.map(fn, range(reps), chunksize=chunk))


def _row(cfg: ExperimentConfig, experiment: str, x: float, hits: int, reps: int) -> ResultRow:
    p_hat = hits / reps
    return ResultRow(
        experiment=experiment,
        x=float(x),
        estimate=p_hat,
        stderr=binomial_stderr(p_hat, reps),
        reps=reps,
        n=cfg.params.n,
        d=cfg.params.d,
        seed=cfg.seed,
    )


# -- smallest singular value tail ---------------------------------------------


def _tail_replica(params: EnsembleParams, seed: int, index: int) -> float:
    stream = derive_stream(seed, ("tail", index))
    M = sample_matrix(params, params.n, stream)
    return linalg.singular_values(M).smallest


def tail_curve(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """Empirical frequency of s_n(M) <= eps / sqrt(n) for each grid eps.

    All grid points share one replica set (common random numbers), so the
    curve is monotone in eps by construction.
    """
    if not cfg.eps_grid:
        raise ValueError("tail_curve needs a nonempty eps_grid")
    smallest = np.array(
        _map_replicas(partial(_tail_replica, cfg.params, cfg.seed), cfg.reps, workers)
    )
    scale = 1.0 / math.sqrt(cfg.params.n)
    return [
        _row(cfg, "tail", eps, int(np.sum(smallest <= eps * scale)), cfg.reps)
        for eps in cfg.eps_grid
    ]


# -- singularity probability ---------------------------------------------------


def _singularity_replica(params: EnsembleParams, seed: int, index: int) -> bool:
    stream = derive_stream(seed, ("singularity", index))
    return linalg.is_singular(sample_matrix(params, params.n, stream))


def singularity_probability(cfg: ExperimentConfig, workers: int | None = None) -> ResultRow:
    """P(M is singular), by exact enumeration when the space is small.

    Singularity is always decided by exact integer rank, never by a floating
    threshold.
    """
    params = cfg.params
    space = params.row_count**params.n
    if space <= ENUMERATION_CUTOFF:
        import itertools

        rows = all_rows(params)
        singular = sum(
            1
            for combo in itertools.product(rows, repeat=params.n)
            if linalg.exact_rank(np.array(combo, dtype=np.int64)) < params.n
        )
        row = _row(cfg, "singularity", 0.0, singular, space)
        return ResultRow(**{**row.to_dict(), "stderr": 0.0, "reps": space})
    hits = sum(
        _map_replicas(partial(_singularity_replica, params, cfg.seed), cfg.reps, workers)
    )
    return _row(cfg, "singularity", 0.0, hits, cfg.reps)


# -- operator norm tail ---------------------------------------------------------


def _opnorm_replica(params: EnsembleParams, seed: int, index: int) -> float:
    stream = derive_stream(seed, ("opnorm", index))
    M = sample_matrix(params, params.n, stream)
    return linalg.singular_values(M).largest


def operator_norm_tail(cfg: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """Empirical frequency of s_1(M) >= t * sqrt(n) for each grid t."""
    if not cfg.t_grid:
        raise ValueError("operator_norm_tail needs a nonempty t_grid")
    largest = np.array(
        _map_replicas(partial(_opnorm_replica, cfg.params, cfg.seed), cfg.reps, workers)
    )
    root_n = math.sqrt(cfg.params.n)
    return [
        _row(cfg, "opnorm", t, int(np.sum(largest >= t * root_n)), cfg.reps)
        for t in cfg.t_grid
    ]


# -- distance to the span of the other rows -------------------------------------


@dataclass(frozen=True)
class DistanceTailResult:
    rows: list[ResultRow]
    distances: np.ndarray
    inner_products: np.ndarray  # <R_n, v_n> on corank-1 replicas, NaN otherwise
    identity_gaps: np.ndarray  # | dist - |<R_n, v_n>| | on corank-1 replicas
    degenerate_count: int


def _distance_replica(params: EnsembleParams, seed: int, index: int):
    stream = derive_stream(seed, ("distance", index))
    M = sample_matrix(params, params.n, stream)
    basis = M.values[:-1].astype(np.float64)
    last = M.values[-1].astype(np.float64)
    dist = linalg.distance_to_span(last, basis)
    try:
        normal = linalg.unit_normal(basis)
    except linalg.CorankError:
        # confirm the float-tolerance verdict with exact integer rank
        if linalg.exact_rank(M.values[:-1]) >= params.n - 1:
            raise RuntimeError("float corank disagreed with exact rank")
        return dist, math.nan, True
    return dist, float(last @ normal), False


def distance_tail(cfg: ExperimentConfig, workers: int | None = None) -> DistanceTailResult:
    """Tail of dist(R_n, H_n) plus the inner products with the unit normal.

    Replicas whose first n-1 rows span less than a hyperplane have no unique
    normal; they are excluded from the inner-product record but still counted
    in the distance frequencies and reported in a degenerate row.
    """
    if not cfg.eps_grid:
        raise ValueError("distance_tail needs a nonempty eps_grid")
    out = _map_replicas(partial(_distance_replica, cfg.params, cfg.seed), cfg.reps, workers)
    distances = np.array([r[0] for r in out])
    inner = np.array([r[1] for r in out])
    degenerate = sum(1 for r in out if r[2])
    ok = ~np.isnan(inner)
    gaps = np.abs(distances[ok] - np.abs(inner[ok]))
    rows = [
        _row(cfg, "distance", eps, int(np.sum(distances <= eps)), cfg.reps)
        for eps in cfg.eps_grid
    ]
    rows.append(_row(cfg, "distance.degenerate", 0.0, degenerate, cfg.reps))
    return DistanceTailResult(
        rows=rows,
        distances=distances,
        inner_products=inner,
        identity_gaps=gaps,
        degenerate_count=degenerate,
    )


# -- fixed-vector small ball -----------------------------------------------------


def _fixed_vector_replica(params: EnsembleParams, seed: int, v: tuple, mode: str, index: int) -> float:
    stream = derive_stream(seed, ("fixed-vector", mode, index))
    M = sample_matrix(params, params.n, stream).values.astype(np.float64)
    vec = np.asarray(v, dtype=np.float64)
    image = M @ vec if mode == "right" else vec @ M
    return float(np.linalg.norm(image))


def fixed_vector_smallball(
    cfg: ExperimentConfig,
    v,
    mode: str = "right",
    threshold: float | None = None,
    workers: int | None = None,
) -> ResultRow:
    """Empirical frequency of ||M v|| <= threshold (or ||v^T M|| in left mode).

    Default thresholds: sqrt(n)/4 on the right, sqrt(n)/36 on the left.
    """
    if mode not in ("right", "left"):
        raise ValueError("mode must be 'right' or 'left'")
    v = np.asarray(v, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("v must be a unit vector")
    n = cfg.params.n
    if threshold is None:
        threshold = math.sqrt(n) / (4.0 if mode == "right" else 36.0)
    norms = np.array(
        _map_replicas(
            partial(_fixed_vector_replica, cfg.params, cfg.seed, tuple(v), mode),
            cfg.reps,
            workers,
        )
    )
    return _row(cfg, f"fixed-vector.{mode}", threshold, int(np.sum(norms <= threshold)), cfg.reps)


# -- persistence -----------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render_csv(rows) -> str:
    lines = [",".join(RESULT_COLUMNS)]
    for row in rows:
        d = row.to_dict()
        lines.append(",".join(_format_cell(d[c]) for c in RESULT_COLUMNS))
    return "\n".join(lines) + "\n"


def _render_jsonl(rows) -> str:
    return "".join(json.dumps(row.to_dict()) + "\n" for row in rows)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-results-")
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"failed writing results to {path!r}: {exc}") from exc


def write_results(rows, cfg: ExperimentConfig, append: bool = False) -> str:
    """Persist rows to cfg.output_path in cfg.format; atomic temp + rename.

    With append=True existing rows are kept and the new ones added (the file
    is still replaced atomically).  Returns the path written.
    """
    if cfg.output_path is None:
        raise ValueError("cfg.output_path is not set")
    path = cfg.output_path
    rows = list(rows)
    if append and os.path.exists(path):
        rows = read_results(path, cfg.format) + rows
    text = _render_csv(rows) if cfg.format == "csv" else _render_jsonl(rows)
    _atomic_write(path, text)
    return path


def read_results(path: str, format: str | None = None) -> list[ResultRow]:
    """Load rows written by write_results (format inferred from content)."""
    with open(path) as handle:
        text = handle.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return []
    if format is None:
        format = "csv" if lines[0] == ",".join(RESULT_COLUMNS) else "jsonl"
    rows = []
    if format == "csv":
        for line in lines[1:]:
            cells = line.split(",")
            record = dict(zip(RESULT_COLUMNS, cells))
            rows.append(_row_from_record(record))
    else:
        for line in lines:
            rows.append(_row_from_record(json.loads(line)))
    return rows


def _row_from_record(record: dict) -> ResultRow:
    return ResultRow(
        experiment=str(record["experiment"]),
        x=float(record["x"]),
        estimate=float(record["estimate"]),
        stderr=float(record["stderr"]),
        reps=int(record["reps"]),
        n=int(record["n"]),
        d=int(record["d"]),
        seed=int(record["seed"]),
    )
