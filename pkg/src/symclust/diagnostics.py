"""Inertia decomposition of a clustering.

For d1 the total inertia splits exactly into within- and between-cluster
parts, ``TI = WI + BI``.  The report is produced for every kind but the
residual is only meaningful for d1.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dissim import KindSpec, aggregates_of, dissim_matrix, leader_as_unit, leader_from_aggregates, object_dissim
from .model import Clustering, DissimKind, Schema, UnitMatrix


@dataclass(frozen=True)
class InertiaReport:
    TI: float
    WI: float
    BI: float
    residual: float
    kind: DissimKind

    @property
    def holds(self) -> bool:
        """Whether ``|TI - WI - BI| <= 1e-9 max(TI, 1)``."""
        return abs(self.residual) <= 1e-9 * max(self.TI, 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def inertia(U, clustering: Clustering, s: Schema, kind: KindSpec | None = None) -> InertiaReport:
    """Total, within and between inertia of ``clustering`` over units ``U``.

    ``BI`` treats each cluster leader as a pseudo-unit weighted by the
    cluster's aggregate weights ``w_C``.
    """
    um = U if isinstance(U, UnitMatrix) else UnitMatrix.stack(list(U))
    if len(um) != len(clustering.labels):
        raise ValueError("clustering does not cover the given units")
    kind = clustering.delta_kind if kind is None else kind
    kinds = s.kinds(kind) if isinstance(kind, (str, DissimKind)) else tuple(kind)
    everything = aggregates_of(um, np.arange(len(um)))
    t_all = leader_from_aggregates(everything, kinds)
    TI = float(np.sum(dissim_matrix(um, [t_all], s, kinds)[:, 0]))
    D = dissim_matrix(um, list(clustering.leaders), s, kinds)
    WI = float(np.sum(D[np.arange(len(um)), clustering.labels]))
    BI = 0.0
    for c, leader in enumerate(clustering.leaders):
        agg = aggregates_of(um, clustering.members(c))
        BI += object_dissim(leader_as_unit(leader, agg, id=f"C{c}"), t_all, s, kinds)
    default = DissimKind.parse(kind) if isinstance(kind, (str, DissimKind)) else kinds[0]
    return InertiaReport(TI=TI, WI=WI, BI=BI, residual=TI - WI - BI, kind=default)


def cluster_profiles(U, labels, s: Schema) -> list[dict]:
    """Pooled distribution of every variable over each flat cluster.

    One record per (cluster, variable, category) with the member count, the
    pooled frequency ``f_C``, count ``n_C``, component weight ``w_C`` and
    share ``f_C / n_C``.  Variables with α = 0 are included, which is how
    supplementary variables get profiled.
    """
    um = U if isinstance(U, UnitMatrix) else UnitMatrix.stack(list(U))
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != len(um):
        raise ValueError("labels do not match the units")
    out = []
    for c in np.unique(labels):
        agg = aggregates_of(um, np.flatnonzero(labels == c))
        shares = agg.pooled_distribution()
        for i, spec in enumerate(s.variables):
            for j, cat in enumerate(spec.categories):
                out.append({
                    "cluster": int(c), "members": agg.count, "variable": spec.name, "category": cat,
                    "frequency": float(agg.f[i][j]), "n": agg.n[i], "weight": float(agg.w[i][j]),
                    "share": float(shares[i][j]),
                })
    return out
