"""Leaders (dynamic clouds) clustering.

Alternates two argmin half-steps on the criterion ``P = Σ_C p(C)``: optimal
leaders for the current partition, then nearest-leader assignment.  Empty
clusters receive the unit farthest from all current leaders.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dissim import KindSpec, aggregates_of, dissim_matrix, leader_from_aggregates, resolve_kinds
from .model import ClusterAggregates, Clustering, DissimKind, Leader, Schema, UnitMatrix

logger = logging.getLogger(__name__)

INIT_METHODS = ("random-units-as-leaders", "random-partition")


class InfeasibleError(ValueError):
    """Fewer units than clusters."""


@dataclass(frozen=True)
class LeadersConfig:
    k: int
    max_iter: int = 100
    restarts: int = 1
    seed: int = 0
    init: str = "random-units-as-leaders"
    tol: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.max_iter < 1 or self.restarts < 1:
            raise ValueError("max_iter and restarts must be positive")
        if not self.tol >= 0:
            raise ValueError("tol must be nonnegative")
        if self.init not in INIT_METHODS:
            raise ValueError(f"unknown init {self.init!r}; expected one of {INIT_METHODS}")


@dataclass
class LeadersState:
    labels: np.ndarray
    leaders: list[Leader]
    aggregates: list[ClusterAggregates]
    distances: np.ndarray  # units x leaders
    cluster_errors: np.ndarray
    trace: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def total_error(self) -> float:
        return float(np.sum(self.cluster_errors))


def _as_matrix(U) -> UnitMatrix:
    return U if isinstance(U, UnitMatrix) else UnitMatrix.stack(list(U))


def assign_units(U, leaders: Sequence[Leader], s: Schema, kind: KindSpec, distances: Optional[np.ndarray] = None):
    """Nearest-leader assignment; ties go to the lowest leader index.

    Returns ``(labels, total)`` where ``total`` is the sum of each unit's
    distance to its chosen leader.
    """
    if not leaders:
        raise ValueError("assign_units needs at least one leader")
    um = _as_matrix(U)
    D = dissim_matrix(um, leaders, s, kind) if distances is None else distances
    labels = np.argmin(D, axis=1)
    total = float(np.sum(D[np.arange(len(um)), labels]))
    return labels, total


def repair_empty_clusters(labels, U, leaders: Sequence[Leader], s: Schema, kind: KindSpec,
                          distances: Optional[np.ndarray] = None) -> np.ndarray:
    """Fill every empty cluster, lowest index first.

    The unit with the largest distance to its nearest leader moves in, chosen
    among units whose own cluster keeps at least one member.
    """
    labels = np.array(labels, dtype=np.int64)
    k = len(leaders)
    n = len(labels)
    if n < k:
        raise InfeasibleError(f"cannot fill {k} clusters with {n} units")
    counts = np.bincount(labels, minlength=k)
    if np.all(counts > 0):
        return labels
    D = dissim_matrix(_as_matrix(U), leaders, s, kind) if distances is None else distances
    nearest = D.min(axis=1)
    for c in range(k):
        if counts[c] > 0:
            continue
        donors = np.flatnonzero(counts[labels] > 1)
        u = donors[np.argmax(nearest[donors])]
        counts[labels[u]] -= 1
        labels[u] = c
        counts[c] = 1
    return labels


def state_from_labels(U, labels, s: Schema, kind: KindSpec, k: Optional[int] = None) -> LeadersState:
    """Optimal leaders, distances and cluster errors for a fixed partition."""
    um = _as_matrix(U)
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1 if k is None else k
    kinds = resolve_kinds(kind, s.m, s)
    aggs, leaders = [], []
    for c in range(k):
        rows = np.flatnonzero(labels == c)
        if len(rows) == 0:
            raise ValueError(f"cluster {c} is empty")
        agg = aggregates_of(um, rows)
        aggs.append(agg)
        leaders.append(leader_from_aggregates(agg, kinds))
    D = dissim_matrix(um, leaders, s, kinds)
    own = D[np.arange(len(um)), labels]
    errors = np.array([np.sum(own[labels == c]) for c in range(k)])
    return LeadersState(labels=labels, leaders=leaders, aggregates=aggs, distances=D, cluster_errors=errors)


def leaders_step(U, state: LeadersState, s: Schema, kind: KindSpec) -> LeadersState:
    """Assign to the current leaders, repair empties, recompute optimal leaders."""
    um = _as_matrix(U)
    labels, _ = assign_units(um, state.leaders, s, kind, distances=state.distances)
    labels = repair_empty_clusters(labels, um, state.leaders, s, kind, distances=state.distances)
    return state_from_labels(um, labels, s, kind, k=len(state.leaders))


def _initial_labels(um: UnitMatrix, s: Schema, kinds, cfg: LeadersConfig, rng: np.random.Generator) -> np.ndarray:
    n, k = len(um), cfg.k
    if cfg.init == "random-partition":
        perm = rng.permutation(n)
        labels = np.empty(n, dtype=np.int64)
        labels[perm[:k]] = np.arange(k)
        labels[perm[k:]] = rng.integers(0, k, size=n - k)
        return labels
    rows = np.sort(rng.choice(n, size=k, replace=False))
    leaders = [Leader(t=tuple(um.p[i][r] for i in range(um.m))) for r in rows]
    D = dissim_matrix(um, leaders, s, kinds)
    labels, _ = assign_units(um, leaders, s, kinds, distances=D)
    return repair_empty_clusters(labels, um, leaders, s, kinds, distances=D)


def _single_run(um: UnitMatrix, s: Schema, kinds, cfg: LeadersConfig, seed_seq) -> LeadersState:
    rng = np.random.default_rng(seed_seq)
    state = state_from_labels(um, _initial_labels(um, s, kinds, cfg, rng), s, kinds, k=cfg.k)
    trace = [state.total_error]
    converged = False
    for _ in range(cfg.max_iter):
        new = leaders_step(um, state, s, kinds)
        trace.append(new.total_error)
        if np.array_equal(new.labels, state.labels):
            state, converged = new, True
            break
        prev = state.total_error
        state = new
        if cfg.tol > 0 and prev > 0 and (prev - new.total_error) / prev < cfg.tol:
            break
    state.trace = trace
    state.converged = converged
    return state


def leaders_run(U, s: Schema, kind: KindSpec, cfg: LeadersConfig) -> Clustering:
    """Best of ``cfg.restarts`` seeded leaders runs (lowest P, then lowest restart index)."""
    um = _as_matrix(U)
    if len(um) < cfg.k:
        raise InfeasibleError(f"k={cfg.k} exceeds the number of units ({len(um)})")
    kinds = resolve_kinds(kind, s.m, s)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    if cfg.workers > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            runs = list(pool.map(_single_run, [um] * len(seeds), [s] * len(seeds), [kinds] * len(seeds),
                                 [cfg] * len(seeds), seeds))
    else:
        runs = [_single_run(um, s, kinds, cfg, ss) for ss in seeds]
    errors = [r.total_error for r in runs]
    best = min(range(len(runs)), key=lambda r: (errors[r], r))
    st = runs[best]
    logger.debug("leaders: restart errors %s, best %d", errors, best)
    default = DissimKind.parse(kind) if isinstance(kind, (str, DissimKind)) else kinds[0]
    return Clustering(
        unit_ids=um.ids,
        labels=st.labels,
        leaders=tuple(st.leaders),
        cluster_errors=tuple(float(e) for e in st.cluster_errors),
        total_error=st.total_error,
        delta_kind=default,
        aggregates=tuple(st.aggregates),
        trace=tuple(st.trace),
        iterations=len(st.trace) - 1,
        converged=st.converged,
        restart_errors=tuple(errors),
        best_restart=best,
    )


def evaluate_partition(U, labels, s: Schema, kind: KindSpec) -> Clustering:
    """Wrap a given partition (labels 0..k-1, none empty) as a :class:`Clustering`."""
    um = _as_matrix(U)
    st = state_from_labels(um, labels, s, kind)
    default = DissimKind.parse(kind) if isinstance(kind, (str, DissimKind)) else resolve_kinds(kind, s.m)[0]
    return Clustering(
        unit_ids=um.ids,
        labels=st.labels,
        leaders=tuple(st.leaders),
        cluster_errors=tuple(float(e) for e in st.cluster_errors),
        total_error=st.total_error,
        delta_kind=default,
        aggregates=tuple(st.aggregates),
        trace=(st.total_error,),
        converged=True,
    )

