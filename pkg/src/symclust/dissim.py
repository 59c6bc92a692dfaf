"""Basic dissimilarities, object dissimilarities and optimal cluster leaders.

The object dissimilarity is ``d(X, T) = Σ_i α_i Σ_j w_ij δ(p_ij, t_ij)`` and
the criterion separates per variable and per component, so every leader
component has a closed form in terms of five weighted sums over the cluster
(see :class:`~symclust.model.ClusterAggregates`).

Zero probabilities follow one rule throughout: for the kinds that divide by
``p`` (d4, d5, d6) a member with ``p = 0`` contributes nothing and is left out
of ``H``, ``G`` and ``w_pos``.  A component where no member has mass gets a
leader value of 0.  Terms with weight 0 are dropped before evaluation.
"""

from __future__ import annotations

from typing import Iterable, Sequence, Union

import numpy as np

from .model import (
    ClusterAggregates,
    DissimKind,
    Leader,
    Schema,
    SchemaError,
    SymbolicObject,
    UnitMatrix,
)

KindSpec = Union[DissimKind, str, Sequence[DissimKind]]

D1, D2, D3, D4, D5, D6 = (
    DissimKind.D1,
    DissimKind.D2,
    DissimKind.D3,
    DissimKind.D4,
    DissimKind.D5,
    DissimKind.D6,
)


class DomainError(ValueError):
    """A dissimilarity was evaluated at a leader value of 0 against positive mass."""


class DegenerateError(ArithmeticError):
    """Aggregates are internally inconsistent (zero denominator, nonzero numerator)."""


def resolve_kinds(kind: KindSpec, m: int, s: Schema | None = None) -> tuple[DissimKind, ...]:
    if isinstance(kind, (DissimKind, str)):
        if s is not None:
            return s.kinds(kind)
        return (DissimKind.parse(kind),) * m
    kinds = tuple(DissimKind.parse(k) for k in kind)
    if len(kinds) != m:
        raise SchemaError(f"expected {m} dissimilarity kinds, got {len(kinds)}")
    return kinds


def delta_array(kind: DissimKind, p, t) -> np.ndarray:
    """Vectorised basic dissimilarity; ``inf`` marks the t = 0 < p domain error.

    Values that overflow (tiny ``p`` or ``t``) are also ``inf``.
    """
    p = np.asarray(p, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind is D1:
            return (p - t) ** 2
        if kind is D2:
            out = ((p - t) / t) ** 2
            return np.where(t > 0, out, np.where(p > 0, np.inf, 0.0))
        if kind is D3:
            out = (p - t) ** 2 / t
            return np.where(t > 0, out, np.where(p > 0, np.inf, 0.0))
        if kind is D4:
            out = ((p - t) / p) ** 2
            return np.where(p > 0, out, 0.0)
        if kind is D5:
            out = (p - t) ** 2 / p
            return np.where(p > 0, out, 0.0)
        if kind is D6:
            out = (p - t) ** 2 / (p * t)
            return np.where(p > 0, np.where(t > 0, out, np.inf), 0.0)
    raise ValueError(f"unknown dissimilarity {kind!r}")


def delta(kind: KindSpec, p: float, t: float) -> float:
    """Basic dissimilarity between one probability ``p`` and one leader value ``t``.

    >>> delta("d2", 0.4, 0.2)
    1.0
    """
    kind = DissimKind.parse(kind)
    if not (p >= 0) or not (t >= 0):
        raise ValueError(f"delta needs p >= 0 and t >= 0, got p={p!r}, t={t!r}")
    if kind.divides_by_leader and t == 0 and p > 0:
        raise DomainError(f"{kind.value}(p={p!r}, t=0) is undefined")
    return float(delta_array(kind, p, t))


def weighted_terms(kind: DissimKind, p, w, t) -> np.ndarray:
    """``w * δ(p, t)`` with zero-weight terms forced to 0."""
    d = delta_array(kind, p, t)
    w = np.asarray(w, dtype=np.float64)
    with np.errstate(invalid="ignore", over="ignore"):
        return np.where(w > 0, w * d, 0.0)


def variable_dissim(x: SymbolicObject, i: int, t_i, kind: KindSpec) -> float:
    """``d_i(X, T) = Σ_j w_ij δ(p_ij, t_ij)`` for a single variable."""
    kind = DissimKind.parse(kind) if isinstance(kind, (str, DissimKind)) else kind[i]
    t_i = np.asarray(t_i, dtype=np.float64)
    if t_i.shape != x.p[i].shape:
        raise SchemaError(f"leader arity {t_i.shape} does not match variable arity {x.p[i].shape}")
    if kind.divides_by_leader and np.any((t_i == 0) & (x.p[i] > 0) & (x.w[i] > 0)):
        raise DomainError(f"{x.id}: variable {i} has mass where the leader is 0 under {kind.value}")
    return float(np.sum(weighted_terms(kind, x.p[i], x.w[i], t_i)))


def object_dissim(x: SymbolicObject, T: Leader, s: Schema, kind: KindSpec) -> float:
    """``d(X, T) = Σ_i α_i d_i(X, T)``; variables with α = 0 are skipped."""
    if x.m != s.m or len(T) != s.m:
        raise SchemaError(f"expected {s.m} variables, got object {x.m} / leader {len(T)}")
    kinds = resolve_kinds(kind, s.m, s)
    total = 0.0
    for i, spec in enumerate(s.variables):
        if spec.alpha == 0:
            continue
        total += spec.alpha * variable_dissim(x, i, T.t[i], kinds[i])
    return total


def cluster_error(C: Iterable[SymbolicObject], T: Leader, s: Schema, kind: KindSpec) -> float:
    """``p(C, T) = Σ_{X∈C} d(X, T)``, summed in the given member order."""
    total = 0.0
    for x in C:
        total += object_dissim(x, T, s, kind)
    return total


# -- aggregates ---------------------------------------------------------------


def _aggregate_arrays(p: np.ndarray, w: np.ndarray):
    pos = p > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(pos, 1.0 / p, 0.0)
    wp = w * p
    return (
        w.sum(axis=0),
        wp.sum(axis=0),
        (wp * p).sum(axis=0),
        (w * inv).sum(axis=0),
        (w * inv * inv).sum(axis=0),
        np.where(pos, w, 0.0).sum(axis=0),
    )


def aggregates_of(um: UnitMatrix, rows: Sequence[int] | np.ndarray) -> ClusterAggregates:
    """Aggregates of the units at ``rows`` of a stacked unit matrix (rows sorted)."""
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    parts = [_aggregate_arrays(um.p[i][rows], um.w[i][rows]) for i in range(um.m)]
    return ClusterAggregates(
        w=tuple(x[0] for x in parts),
        P=tuple(x[1] for x in parts),
        Q=tuple(x[2] for x in parts),
        H=tuple(x[3] for x in parts),
        G=tuple(x[4] for x in parts),
        w_pos=tuple(x[5] for x in parts),
        f=tuple(um.f[i][rows].sum(axis=0) for i in range(um.m)),
        n=tuple(float(um.n[i][rows].sum()) for i in range(um.m)),
        count=len(rows),
    )


def compute_aggregates(C: Sequence[SymbolicObject], arities: Sequence[int] | None = None) -> ClusterAggregates:
    """Aggregates of a list of units; ``arities`` is required only when ``C`` is empty."""
    C = list(C)
    if not C:
        if arities is None:
            raise ValueError("arities are needed to build aggregates of an empty cluster")
        return ClusterAggregates.zeros(arities)
    return aggregates_of(UnitMatrix.stack(C), np.arange(len(C)))


def unit_aggregates(um: UnitMatrix) -> list[ClusterAggregates]:
    return [aggregates_of(um, [r]) for r in range(len(um))]


# -- leaders ------------------------------------------------------------------


def _ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    bad = (den == 0) & (num != 0)
    if np.any(bad):
        raise DegenerateError(f"{what}: zero denominator with nonzero numerator at components {np.flatnonzero(bad).tolist()}")
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def leader_component(kind: DissimKind, w, P, Q, H, G, w_pos) -> np.ndarray:
    if kind is D1:
        return _ratio(P, w, "d1 leader P/w")
    if kind is D2:
        return _ratio(Q, P, "d2 leader Q/P")
    if kind is D3:
        return np.sqrt(_ratio(Q, w, "d3 leader Q/w"))
    if kind is D4:
        return _ratio(H, G, "d4 leader H/G")
    if kind is D5:
        return _ratio(w_pos, H, "d5 leader w/H")
    if kind is D6:
        return np.sqrt(_ratio(P, H, "d6 leader P/H"))
    raise ValueError(f"unknown dissimilarity {kind!r}")


def leader_from_aggregates(agg: ClusterAggregates, kind: KindSpec, s: Schema | None = None) -> Leader:
    kinds = resolve_kinds(kind, agg.m, s)
    return Leader(
        t=tuple(
            leader_component(kinds[i], agg.w[i], agg.P[i], agg.Q[i], agg.H[i], agg.G[i], agg.w_pos[i])
            for i in range(agg.m)
        )
    )


def optimal_leader(C: Sequence[SymbolicObject], s: Schema, kind: KindSpec) -> Leader:
    """Leader minimising ``p(C, T)`` for a nonempty cluster.

    Componentwise: d1 ``P/w``, d2 ``Q/P``, d3 ``sqrt(Q/w)``, d4 ``H/G``,
    d5 ``w/H``, d6 ``sqrt(P/H)``.
    """
    C = list(C)
    if not C:
        raise ValueError("optimal_leader needs a nonempty cluster")
    return leader_from_aggregates(compute_aggregates(C), kind, s)


# -- vectorised distances -------------------------------------------------------

_CHUNK_CELLS = 1 << 22


def dissim_matrix(um: UnitMatrix, leaders: Sequence[Leader], s: Schema, kind: KindSpec) -> np.ndarray:
    """``(n_units, n_leaders)`` matrix of ``d(X, T)``.

    Entries are ``inf`` where a unit has mass on a component at which the
    leader is 0 under d2, d3 or d6: such a leader cannot represent the unit.
    """
    kinds = resolve_kinds(kind, s.m, s)
    n, K = len(um), len(leaders)
    out = np.zeros((n, K))
    for i, spec in enumerate(s.variables):
        if spec.alpha == 0:
            continue
        T = np.stack([L.t[i] for L in leaders])
        k = T.shape[1]
        step = max(1, _CHUNK_CELLS // max(1, K * k))
        di = np.empty((n, K))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            terms = weighted_terms(kinds[i], um.p[i][lo:hi, None, :], um.w[i][lo:hi, None, :], T[None, :, :])
            di[lo:hi] = terms.sum(axis=-1)
        out += spec.alpha * di
    return out


def leader_as_unit(T: Leader, agg: ClusterAggregates, id: str = "leader") -> SymbolicObject:
    """Pseudo-unit with distribution ``T`` and the cluster's aggregate weights ``w_C``."""
    return SymbolicObject(id=id, f=T.t, n=tuple(float(np.sum(t)) for t in T.t), p=T.t, w=agg.w)
