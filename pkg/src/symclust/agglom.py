"""Agglomerative clustering compatible with the leaders criterion.

The distance between two disjoint clusters is the increase of the criterion
caused by merging them, ``D(Cu, Cv) = p(Cu ∪ Cv) - p(Cu) - p(Cv)``.  For all
six basic dissimilarities it has a closed form in the two leaders ``u``,
``v``, the merged leader ``z`` and the cluster aggregates, so the merge tree
is built from aggregates alone (a generalized Ward method).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dissim import (
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    DegenerateError,
    KindSpec,
    cluster_error,
    compute_aggregates,
    leader_from_aggregates,
    optimal_leader,
    resolve_kinds,
    unit_aggregates,
)
from .model import (
    ClusterAggregates,
    DendrogramNode,
    DissimKind,
    Leader,
    Schema,
    SymbolicObject,
    UnitMatrix,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergeRecord:
    left: int
    right: int
    height: float
    new_node: int


def _safe_div(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros(np.broadcast(a, b).shape)
    np.divide(a, b, out=out, where=np.broadcast_to(b > 0, out.shape))
    return out


def _checked_div(num, den, what):
    num, den = np.broadcast_arrays(np.asarray(num, dtype=np.float64), np.asarray(den, dtype=np.float64))
    if np.any((den == 0) & (num != 0)):
        raise DegenerateError(f"{what}: zero denominator with nonzero numerator")
    return _safe_div(num, den)


def merge_component(kind: DissimKind, u, v, au: dict, av: dict) -> np.ndarray:
    """Leader component of ``Cu ∪ Cv`` from the two leaders and their aggregates.

    ``au``/``av`` map aggregate names (w, P, Q, H, G, w_pos) to arrays that
    broadcast against ``u``/``v``.
    """
    if kind is D1:
        return _checked_div(au["w"] * u + av["w"] * v, au["w"] + av["w"], "d1 merge")
    if kind is D2:
        return _checked_div(u * au["P"] + v * av["P"], au["P"] + av["P"], "d2 merge")
    if kind is D3:
        return np.sqrt(_checked_div(u * u * au["w"] + v * v * av["w"], au["w"] + av["w"], "d3 merge"))
    if kind is D4:
        return _checked_div(au["H"] + av["H"], _safe_div(au["H"], u) + _safe_div(av["H"], v), "d4 merge")
    if kind is D5:
        return _checked_div(au["w_pos"] + av["w_pos"], au["H"] + av["H"], "d5 merge")
    if kind is D6:
        return np.sqrt(
            _checked_div(au["P"] + av["P"], _safe_div(au["P"], u * u) + _safe_div(av["P"], v * v), "d6 merge")
        )
    raise ValueError(f"unknown dissimilarity {kind!r}")


def _side_cost(kind: DissimKind, u, z, a: dict) -> np.ndarray:
    """Increase of one side's error when its leader moves from ``u`` to ``z``."""
    if kind is D2:
        return np.where(u > 0, _safe_div(a["P"], u) * _safe_div(u - z, z) ** 2, np.where(z > 0, a["w"], 0.0))
    if kind is D3:
        return a["w"] * _safe_div((u - z) ** 2, z)
    if kind is D4:
        return a["G"] * (u - z) ** 2
    if kind is D5:
        return a["w_pos"] * _safe_div((u - z) ** 2, u)
    if kind is D6:
        return _safe_div(a["P"], u) * _safe_div((u - z) ** 2, u * z)
    raise ValueError(f"unknown dissimilarity {kind!r}")


def between_component(kind: DissimKind, u, v, au: dict, av: dict, z=None) -> np.ndarray:
    if kind is D1:
        return _safe_div(au["w"] * av["w"], au["w"] + av["w"]) * (u - v) ** 2
    if z is None:
        z = merge_component(kind, u, v, au, av)
    return _side_cost(kind, u, z, au) + _side_cost(kind, v, z, av)


_FIELDS = ("w", "P", "Q", "H", "G", "w_pos")


def _agg_dict(agg: ClusterAggregates, i: int) -> dict:
    return {name: getattr(agg, name)[i] for name in _FIELDS}


def merged_leader(u_agg: ClusterAggregates, v_agg: ClusterAggregates, kind: KindSpec,
                  u: Optional[Leader] = None, v: Optional[Leader] = None, s: Optional[Schema] = None) -> Leader:
    """Leader of the union of two disjoint clusters, from their leaders and aggregates."""
    kinds = resolve_kinds(kind, u_agg.m, s)
    u = leader_from_aggregates(u_agg, kinds) if u is None else u
    v = leader_from_aggregates(v_agg, kinds) if v is None else v
    return Leader(
        t=tuple(
            merge_component(kinds[i], u.t[i], v.t[i], _agg_dict(u_agg, i), _agg_dict(v_agg, i))
            for i in range(u_agg.m)
        )
    )


def between_dissim(u_agg: ClusterAggregates, v_agg: ClusterAggregates, kind: KindSpec, s: Schema,
                   u: Optional[Leader] = None, v: Optional[Leader] = None) -> float:
    """Closed-form ``D(Cu, Cv)``; α-weighted sum of per-component terms."""
    kinds = resolve_kinds(kind, s.m, s)
    u = leader_from_aggregates(u_agg, kinds) if u is None else u
    v = leader_from_aggregates(v_agg, kinds) if v is None else v
    total = 0.0
    for i, spec in enumerate(s.variables):
        if spec.alpha == 0:
            continue
        # (1, k) rows so the arithmetic matches the stacked path used by agglomerate
        terms = between_component(
            kinds[i], u.t[i][None, :], v.t[i][None, :], _agg_dict(u_agg, i), _agg_dict(v_agg, i)
        )
        total += spec.alpha * terms.sum(axis=-1)[0]
    return float(total)


def definitional_between(Cu: Sequence[SymbolicObject], Cv: Sequence[SymbolicObject], s: Schema,
                         kind: KindSpec) -> float:
    """``p(Cu ∪ Cv) - p(Cu) - p(Cv)`` evaluated member by member."""
    Cu, Cv = list(Cu), list(Cv)
    joint = Cu + Cv
    return (
        cluster_error(joint, optimal_leader(joint, s, kind), s, kind)
        - cluster_error(Cu, optimal_leader(Cu, s, kind), s, kind)
        - cluster_error(Cv, optimal_leader(Cv, s, kind), s, kind)
    )


def leader_distance(u: Leader, v: Leader, s: Schema) -> float:
    """Unweighted squared Euclidean ``Σ_i α_i Σ_j (u_ij - v_ij)²``."""
    total = 0.0
    for i, spec in enumerate(s.variables):
        if spec.alpha == 0:
            continue
        total += spec.alpha * float(np.sum((u.t[i] - v.t[i]) ** 2))
    return total


def _constant_weight(agg: ClusterAggregates, s: Schema) -> Optional[float]:
    values = [agg.w[i] for i, spec in enumerate(s.variables) if spec.alpha > 0]
    if not values:
        return None
    w0 = float(values[0][0])
    if all(np.all(x == w0) for x in values):
        return w0
    return None


def constant_weight_ward(u_agg: ClusterAggregates, v_agg: ClusterAggregates, s: Schema,
                         u: Optional[Leader] = None, v: Optional[Leader] = None) -> Optional[float]:
    """``w_u w_v / (w_u + w_v) · d(u, v)`` for d1 when each cluster weight is one number.

    Returns ``None`` when the aggregate weights vary across the variables or
    components that enter the dissimilarity.
    """
    wu, wv = _constant_weight(u_agg, s), _constant_weight(v_agg, s)
    if wu is None or wv is None or wu + wv == 0:
        return None
    u = leader_from_aggregates(u_agg, DissimKind.D1) if u is None else u
    v = leader_from_aggregates(v_agg, DissimKind.D1) if v is None else v
    return wu * wv / (wu + wv) * leader_distance(u, v, s)


def ward_special_cases_check(Cu: Sequence[SymbolicObject], Cv: Sequence[SymbolicObject], s: Schema,
                             rtol: float = 1e-9) -> dict:
    """Compare the general d1 Ward distance with its unit-weight simplification.

    With every component weight equal to 1 the distance reduces to
    ``|Cu||Cv| / (|Cu| + |Cv|) · d(u, v)``.  Diagnostic only: the report says
    whether the simplification applies and whether the two values agree.
    """
    Cu, Cv = list(Cu), list(Cv)
    report = {"applicable": False, "reason": "", "general": None, "special": None, "abs_diff": None, "ok": None}
    kinds = s.kinds(DissimKind.D1)
    active = [i for i, spec in enumerate(s.variables) if spec.alpha > 0]
    if any(kinds[i] is not DissimKind.D1 for i in active):
        report["reason"] = "special case is derived for d1 only"
        return report
    if not all(np.all(x.w[i] == 1.0) for x in Cu + Cv for i in active):
        report["reason"] = "component weights are not all 1"
        return report
    ua, va = compute_aggregates(Cu), compute_aggregates(Cv)
    u, v = leader_from_aggregates(ua, kinds), leader_from_aggregates(va, kinds)
    general = between_dissim(ua, va, kinds, s, u, v)
    nu, nv = len(Cu), len(Cv)
    special = nu * nv / (nu + nv) * leader_distance(u, v, s)
    diff = abs(general - special)
    report.update(applicable=True, general=general, special=special, abs_diff=diff,
                  ok=diff <= rtol * max(abs(general), abs(special), 1e-300))
    return report


# -- tree construction ---------------------------------------------------------


@dataclass
class Dendrogram:
    nodes: list[DendrogramNode]
    merges: list[MergeRecord]
    n_leaves: int
    kind: DissimKind
    clamped: int = 0
    leaf_labels: tuple[str, ...] = field(default_factory=tuple)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    @property
    def inversions(self) -> list[int]:
        """Merge indices whose height is below an earlier merge height."""
        out, top = [], -math.inf
        for idx, m in enumerate(self.merges):
            if m.height < top:
                out.append(idx)
            top = max(top, m.height)
        return out

    @property
    def root(self) -> DendrogramNode:
        return self.nodes[-1]

    def cut(self, k: int) -> np.ndarray:
        return cut_merges(self.merges, self.n_leaves, k)

    def cut_height(self, h: float) -> np.ndarray:
        return cut_merges(self.merges, self.n_leaves, k_at_height(self.merges, self.n_leaves, h))

    def suggest_k(self, min_k: int = 3) -> Optional[int]:
        return largest_gap_k(self.heights, self.n_leaves, min_k)

    def members(self, node_id: int) -> list[int]:
        stack, out = [node_id], []
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if node.is_leaf:
                out.append(nid)
            else:
                stack.extend(node.children)
        return sorted(out)


def cut_merges(merges: Sequence[MergeRecord], n_leaves: int, k: int) -> np.ndarray:
    """Flat labels after the first ``n_leaves - k`` merges; clusters numbered by first leaf."""
    if not 1 <= k <= n_leaves:
        raise ValueError(f"k must lie in 1..{n_leaves}, got {k}")
    parent = list(range(n_leaves + len(merges)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for m in merges[: n_leaves - k]:
        parent[find(m.left)] = m.new_node
        parent[find(m.right)] = m.new_node
    roots = [find(i) for i in range(n_leaves)]
    numbering: dict[int, int] = {}
    return np.array([numbering.setdefault(r, len(numbering)) for r in roots], dtype=np.int64)


def k_at_height(merges: Sequence[MergeRecord], n_leaves: int, h: float) -> int:
    """Clusters left after the longest prefix of merges whose heights are all ≤ h."""
    done = 0
    for m in merges:
        if m.height > h:
            break
        done += 1
    return n_leaves - done


def largest_gap_k(heights: Sequence[float], n_leaves: int, min_k: int = 3) -> Optional[int]:
    """Number of clusters just below the largest jump between successive merge heights.

    Cutting between merge ``i-1`` and merge ``i`` leaves ``n_leaves - i``
    clusters; candidates with fewer than ``min_k`` clusters are ignored
    unless nothing else is available.
    """
    h = np.asarray(heights, dtype=np.float64)
    if len(h) < 2:
        return None
    gaps = np.diff(h)
    ks = n_leaves - np.arange(1, len(h))
    ok = ks >= min_k
    if not np.any(ok):
        ok = np.ones_like(ok)
    best = np.flatnonzero(ok)[np.argmax(gaps[ok])]
    return int(ks[best])


class _Stack:
    """Per-variable aggregate and leader arrays indexed by active slot."""

    def __init__(self, aggs: Sequence[ClusterAggregates], leaders: Sequence[Leader]):
        m = aggs[0].m
        self.fields = [{name: np.stack([getattr(a, name)[i] for a in aggs]) for name in _FIELDS} for i in range(m)]
        self.t = [np.stack([L.t[i] for L in leaders]) for i in range(m)]

    def set(self, slot: int, agg: ClusterAggregates, leader: Leader):
        for i, fld in enumerate(self.fields):
            for name in _FIELDS:
                fld[name][slot] = getattr(agg, name)[i]
            self.t[i][slot] = leader.t[i]

    def row(self, slot: int, others: np.ndarray, kinds, alpha) -> np.ndarray:
        out = np.zeros(len(others))
        for i, fld in enumerate(self.fields):
            if alpha[i] == 0:
                continue
            au = {name: fld[name][slot][None, :] for name in _FIELDS}
            av = {name: fld[name][others] for name in _FIELDS}
            terms = between_component(kinds[i], self.t[i][slot][None, :], self.t[i][others], au, av)
            out += alpha[i] * terms.sum(axis=-1)
        return out


Item = Union[SymbolicObject, ClusterAggregates]


def agglomerate(items: Sequence[Item] | UnitMatrix, s: Schema, kind: KindSpec,
                labels: Optional[Sequence[str]] = None) -> Dendrogram:
    """Merge the two closest clusters until one remains.

    ``items`` are units or cluster aggregates (for instance the clusters of a
    leaders run).  Ties at the minimal distance go to the lexicographically
    smallest pair of node ids.
    """
    if isinstance(items, UnitMatrix):
        labels = items.ids if labels is None else labels
        aggs = unit_aggregates(items)
    else:
        items = list(items)
        if items and isinstance(items[0], SymbolicObject):
            labels = tuple(x.id for x in items) if labels is None else labels
            aggs = unit_aggregates(UnitMatrix.stack(items))
        else:
            aggs = items
    n = len(aggs)
    if n < 2:
        raise ValueError("agglomerate needs at least two items")
    labels = tuple(str(x) for x in labels) if labels is not None else tuple(str(i) for i in range(n))
    kinds = resolve_kinds(kind, s.m, s)
    alpha = s.alpha
    leaders = [leader_from_aggregates(a, kinds) for a in aggs]
    nodes = [
        DendrogramNode(id=i, children=(), height=0.0, leader=leaders[i], member_count=aggs[i].count,
                       aggregates=aggs[i], label=labels[i])
        for i in range(n)
    ]
    stack = _Stack(aggs, leaders)
    slot_node = np.arange(n)
    slot_agg = list(aggs)
    slot_leader = list(leaders)
    active = np.ones(n, dtype=bool)
    D = np.full((n, n), np.inf)
    for a in range(n - 1):
        others = np.arange(a + 1, n)
        D[a, others] = stack.row(a, others, kinds, alpha)
        D[others, a] = D[a, others]

    merges: list[MergeRecord] = []
    clamped = 0
    for step in range(n - 1):
        dmin = D.min()
        rows, cols = np.nonzero(D == dmin)
        lo = np.minimum(slot_node[rows], slot_node[cols])
        hi = np.maximum(slot_node[rows], slot_node[cols])
        pick = np.lexsort((hi, lo))[0]
        a, b = rows[pick], cols[pick]
        if slot_node[a] > slot_node[b]:
            a, b = b, a
        height = float(dmin)
        if height < 0:
            clamped += 1
            logger.warning("negative merge height %.3g clamped to 0", height)
            height = 0.0
        new_id = n + step
        agg = slot_agg[a] + slot_agg[b]
        z = merged_leader(slot_agg[a], slot_agg[b], kinds, slot_leader[a], slot_leader[b])
        nodes.append(DendrogramNode(id=new_id, children=(int(slot_node[a]), int(slot_node[b])), height=height,
                                    leader=z, member_count=agg.count, aggregates=agg))
        merges.append(MergeRecord(left=int(slot_node[a]), right=int(slot_node[b]), height=height, new_node=new_id))
        active[b] = False
        D[b, :] = np.inf
        D[:, b] = np.inf
        slot_node[a] = new_id
        slot_agg[a] = agg
        slot_leader[a] = z
        stack.set(a, agg, z)
        others = np.flatnonzero(active)
        others = others[others != a]
        if len(others):
            D[a, others] = stack.row(a, others, kinds, alpha)
            D[others, a] = D[a, others]
    default = DissimKind.parse(kind) if isinstance(kind, (str, DissimKind)) else kinds[0]
    return Dendrogram(nodes=nodes, merges=merges, n_leaves=n, kind=default, clamped=clamped, leaf_labels=labels)
