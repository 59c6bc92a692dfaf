"""Domain types for modal-valued symbolic objects.

A symbolic object describes a unit with one frequency distribution per
variable.  Every variable ``i`` carries a frequency vector ``f_i``, its total
``n_i``, the derived distribution ``p_i = f_i / n_i`` and a vector of
component weights ``w_i``.  Leaders (cluster representatives) share the same
shape but are only required to be componentwise nonnegative.

All arrays held by these types are made read-only on construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-9
ALPHA_SUM_TOL = 1e-12


class SchemaError(ValueError):
    """Raised for malformed schemas or inconsistent object/schema pairs."""


class DissimKind(enum.Enum):
    """The six basic dissimilarities between a probability ``p`` and a leader value ``t``."""

    D1 = "d1"  # (p - t)^2
    D2 = "d2"  # ((p - t) / t)^2
    D3 = "d3"  # (p - t)^2 / t
    D4 = "d4"  # ((p - t) / p)^2
    D5 = "d5"  # (p - t)^2 / p
    D6 = "d6"  # (p - t)^2 / (p t)

    @classmethod
    def parse(cls, name: "str | DissimKind") -> "DissimKind":
        if isinstance(name, DissimKind):
            return name
        key = str(name).strip().lower()
        for prefix in ("delta", "δ", "d"):
            if key.startswith(prefix):
                key = key[len(prefix):]
                break
        key = key.lstrip("_")
        try:
            return cls("d" + key)
        except ValueError:
            raise ValueError(f"unknown dissimilarity {name!r}; expected one of d1..d6") from None

    @property
    def divides_by_leader(self) -> bool:
        return self in (DissimKind.D2, DissimKind.D3, DissimKind.D6)

    @property
    def divides_by_probability(self) -> bool:
        return self in (DissimKind.D4, DissimKind.D5, DissimKind.D6)


def _frozen(values, ndim: int = 1) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise SchemaError(f"expected a {ndim}-d vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


CATEGORICAL = "categorical"
NUMERIC_BINNED = "numeric-binned"


def bin_labels(breaks: Sequence[float]) -> list[str]:
    def fmt(b):
        return f"{b:g}"

    if not breaks:
        return ["all"]
    labels = [f"<{fmt(breaks[0])}"]
    labels += [f"[{fmt(a)},{fmt(b)})" for a, b in zip(breaks, breaks[1:])]
    labels.append(f">={fmt(breaks[-1])}")
    return labels


@dataclass(frozen=True)
class VariableSpec:
    """One symbolic variable.

    ``categories`` includes the trailing NA bucket when ``na_category`` is
    set.  For numeric-binned variables, ``breaks`` has one entry fewer than
    the number of non-NA categories.  ``per_unit`` marks share-type
    variables (one value per unit, e.g. country) rather than per-row counts.
    ``delta`` optionally overrides the clustering dissimilarity for this
    variable only.
    """

    name: str
    categories: tuple[str, ...]
    kind: str = CATEGORICAL
    breaks: Optional[tuple[float, ...]] = None
    na_category: bool = False
    alpha: float = 1.0
    column: Optional[str] = None
    per_unit: bool = False
    delta: Optional[DissimKind] = None

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.breaks is not None:
            object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        if self.delta is not None:
            object.__setattr__(self, "delta", DissimKind.parse(self.delta))
        object.__setattr__(self, "alpha", float(self.alpha))
        problems = self.violations()
        if problems:
            raise SchemaError(f"variable {self.name!r}: " + "; ".join(problems))

    @property
    def k(self) -> int:
        return len(self.categories)

    @property
    def source_column(self) -> str:
        return self.column or self.name

    @property
    def na_index(self) -> Optional[int]:
        return self.k - 1 if self.na_category else None

    def violations(self) -> list[str]:
        out = []
        if self.kind not in (CATEGORICAL, NUMERIC_BINNED):
            out.append(f"unknown kind {self.kind!r}")
        if not self.categories:
            out.append("categories must be nonempty")
        if len(set(self.categories)) != len(self.categories):
            out.append("duplicate category labels")
        if not (self.alpha >= 0) or math.isinf(self.alpha):
            out.append(f"alpha must be a finite nonnegative number, got {self.alpha}")
        n_regular = self.k - (1 if self.na_category else 0)
        if self.na_category and n_regular < 1 and self.kind == NUMERIC_BINNED:
            out.append("numeric-binned variable needs at least one non-NA category")
        if self.kind == NUMERIC_BINNED:
            if self.breaks is None:
                out.append("numeric-binned variable requires breaks")
            else:
                if any(not (a < b) for a, b in zip(self.breaks, self.breaks[1:])):
                    out.append("breaks must be strictly ascending")
                if len(self.breaks) != n_regular - 1:
                    out.append(
                        f"expected {n_regular - 1} breaks for {n_regular} bins, got {len(self.breaks)}"
                    )
        elif self.breaks is not None:
            out.append("breaks are only allowed on numeric-binned variables")
        return out


WEIGHT_SCHEMES = ("per-variable-n", "ones", "custom-column")


@dataclass(frozen=True)
class Schema:
    variables: tuple[VariableSpec, ...]
    alpha_normalized: bool = False
    weight_scheme: str = "per-variable-n"
    weight_columns: tuple[str, ...] = ()
    custom_weight_column: Optional[str] = None
    unit_column: str = "unit_id"

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "weight_columns", tuple(self.weight_columns))
        if not self.variables:
            raise SchemaError("schema must define at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate variable names")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise SchemaError(f"unknown weight scheme {self.weight_scheme!r}")
        if self.weight_scheme == "custom-column" and not self.custom_weight_column:
            raise SchemaError("custom-column weight scheme needs custom_weight_column")
        if self.alpha_normalized:
            total = sum(v.alpha for v in self.variables)
            if abs(total - 1.0) > ALPHA_SUM_TOL:
                raise SchemaError(f"alpha must sum to 1 when normalized, got {total!r}")

    @property
    def m(self) -> int:
        return len(self.variables)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(v.k for v in self.variables)

    @property
    def alpha(self) -> np.ndarray:
        return np.array([v.alpha for v in self.variables], dtype=np.float64)

    def normalized(self) -> "Schema":
        """Return a copy whose variable weights sum to one."""
        total = math.fsum(v.alpha for v in self.variables)
        if total <= 0:
            raise SchemaError("cannot normalize: all variable weights are zero")
        vs = tuple(replace(v, alpha=v.alpha / total) for v in self.variables)
        return replace(self, variables=vs, alpha_normalized=True)

    def with_alpha(self, alpha: Sequence[float]) -> "Schema":
        if len(alpha) != self.m:
            raise SchemaError(f"expected {self.m} variable weights, got {len(alpha)}")
        vs = tuple(replace(v, alpha=float(a)) for v, a in zip(self.variables, alpha))
        out = replace(self, variables=vs, alpha_normalized=False)
        return out.normalized() if self.alpha_normalized else out

    def kinds(self, default: "DissimKind | str") -> tuple[DissimKind, ...]:
        default = DissimKind.parse(default)
        return tuple(v.delta or default for v in self.variables)

    @classmethod
    def simple(cls, arities: Sequence[int], alpha: Optional[Sequence[float]] = None, **kw) -> "Schema":
        """Anonymous categorical schema, mostly for tests and synthetic data."""
        alpha = [1.0] * len(arities) if alpha is None else alpha
        vs = tuple(
            VariableSpec(name=f"V{i + 1}", categories=tuple(f"c{j}" for j in range(k)), alpha=a)
            for i, (k, a) in enumerate(zip(arities, alpha))
        )
        return cls(variables=vs, **kw)


@dataclass(frozen=True, eq=False)
class SymbolicObject:
    """A unit: per variable a frequency vector, its total, distribution and weights.

    Use :meth:`from_frequencies` or :meth:`from_distributions`; the raw
    constructor stores whatever it is given so :func:`validate_object` can
    report problems instead of raising.
    """

    id: str
    f: tuple[np.ndarray, ...]
    n: tuple[float, ...]
    p: tuple[np.ndarray, ...]
    w: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "f", tuple(_frozen(x) for x in self.f))
        object.__setattr__(self, "p", tuple(_frozen(x) for x in self.p))
        object.__setattr__(self, "w", tuple(_frozen(x) for x in self.w))
        object.__setattr__(self, "n", tuple(float(x) for x in self.n))

    @property
    def m(self) -> int:
        return len(self.p)

    @classmethod
    def from_frequencies(cls, id, f: Sequence[Sequence[float]], w=None) -> "SymbolicObject":
        """Build from frequency vectors.

        ``w`` is ``None`` (component weight ``n_i`` on every component), one
        scalar for everything, a sequence of per-variable scalars, or a
        sequence of per-component vectors.  Variables with ``n_i = 0`` get a zero distribution and
        zero weights so they never contribute to a dissimilarity.
        """
        fs = [np.asarray(x, dtype=np.float64) for x in f]
        ns = [float(x.sum()) for x in fs]
        ps = [x / n if n > 0 else np.zeros_like(x) for x, n in zip(fs, ns)]
        ws = _expand_weights(w, fs, ns)
        return cls(id=id, f=tuple(fs), n=tuple(ns), p=tuple(ps), w=tuple(ws))

    @classmethod
    def from_distributions(cls, id, p: Sequence[Sequence[float]], n=1.0, w=None) -> "SymbolicObject":
        """Build from distributions and totals (scalar or one per variable)."""
        ps = [np.asarray(x, dtype=np.float64) for x in p]
        ns = [float(n)] * len(ps) if np.ndim(n) == 0 else [float(x) for x in n]
        fs = [x * nn for x, nn in zip(ps, ns)]
        return cls.from_frequencies(id, fs, w=w)

    def with_weights(self, w) -> "SymbolicObject":
        ws = _expand_weights(w, list(self.f), list(self.n))
        return SymbolicObject(id=self.id, f=self.f, n=self.n, p=self.p, w=tuple(ws))


def _expand_weights(w, fs, ns) -> list[np.ndarray]:
    if w is None:
        ws = [np.full(x.shape, n) for x, n in zip(fs, ns)]
    elif isinstance(w, (int, float, np.number)):
        ws = [np.full(x.shape, float(w)) for x in fs]
    else:
        if len(w) != len(fs):
            raise SchemaError(f"expected weights for {len(fs)} variables, got {len(w)}")
        ws = []
        for wi, x in zip(w, fs):
            if np.ndim(wi) == 0:
                ws.append(np.full(x.shape, float(wi)))
            else:
                ws.append(np.array(wi, dtype=np.float64))
    # zero-frequency variables carry no information
    return [np.zeros_like(wi) if n == 0 else wi for wi, n in zip(ws, ns)]


@dataclass(frozen=True, eq=False)
class Leader:
    """Cluster representative: one nonnegative vector per variable."""

    t: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "t", tuple(_frozen(x) for x in self.t))
        for x in self.t:
            if np.any(x < 0) or np.any(np.isnan(x)):
                raise ValueError("leader components must be nonnegative")

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return self.t[i]

    def allclose(self, other: "Leader", rtol=1e-12, atol=0.0) -> bool:
        return len(self) == len(other) and all(
            a.shape == b.shape and np.allclose(a, b, rtol=rtol, atol=atol) for a, b in zip(self.t, other.t)
        )

    @classmethod
    def of(cls, x: SymbolicObject) -> "Leader":
        return cls(t=x.p)


AGGREGATE_FIELDS = ("w", "P", "Q", "H", "G", "w_pos")


@dataclass(frozen=True, eq=False)
class ClusterAggregates:
    """Componentwise weighted sums over the members of a cluster.

    ``w = Σ w_x``, ``P = Σ w_x p_x``, ``Q = Σ w_x p_x²``; ``H = Σ w_x / p_x``,
    ``G = Σ w_x / p_x²`` and ``w_pos = Σ w_x`` run over members with
    ``p_x > 0`` only.  ``f`` and ``n`` pool raw frequencies for profiling.
    """

    w: tuple[np.ndarray, ...]
    P: tuple[np.ndarray, ...]
    Q: tuple[np.ndarray, ...]
    H: tuple[np.ndarray, ...]
    G: tuple[np.ndarray, ...]
    w_pos: tuple[np.ndarray, ...]
    f: tuple[np.ndarray, ...]
    n: tuple[float, ...]
    count: int

    def __post_init__(self):
        for name in AGGREGATE_FIELDS + ("f",):
            object.__setattr__(self, name, tuple(_frozen(x) for x in getattr(self, name)))
        object.__setattr__(self, "n", tuple(float(x) for x in self.n))

    @property
    def m(self) -> int:
        return len(self.w)

    def __add__(self, other: "ClusterAggregates") -> "ClusterAggregates":
        if not isinstance(other, ClusterAggregates):
            return NotImplemented
        if self.m != other.m:
            raise SchemaError("aggregates describe different numbers of variables")
        kw = {
            name: tuple(a + b for a, b in zip(getattr(self, name), getattr(other, name)))
            for name in AGGREGATE_FIELDS + ("f",)
        }
        return ClusterAggregates(
            **kw, n=tuple(a + b for a, b in zip(self.n, other.n)), count=self.count + other.count
        )

    @classmethod
    def zeros(cls, arities: Sequence[int]) -> "ClusterAggregates":
        z = tuple(np.zeros(k) for k in arities)
        return cls(w=z, P=z, Q=z, H=z, G=z, w_pos=z, f=z, n=tuple(0.0 for _ in arities), count=0)

    def pooled_distribution(self) -> tuple[np.ndarray, ...]:
        return tuple(f / n if n > 0 else np.zeros_like(f) for f, n in zip(self.f, self.n))


@dataclass(frozen=True, eq=False)
class Clustering:
    """Result of a leaders run; ``labels[u]`` is the cluster of the u-th unit."""

    unit_ids: tuple[str, ...]
    labels: np.ndarray
    leaders: tuple[Leader, ...]
    cluster_errors: tuple[float, ...]
    total_error: float
    delta_kind: DissimKind
    aggregates: tuple[ClusterAggregates, ...] = ()
    trace: tuple[float, ...] = ()
    iterations: int = 0
    converged: bool = False
    restart_errors: tuple[float, ...] = ()
    best_restart: int = 0

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return len(self.leaders)

    @property
    def assignments(self) -> dict[str, int]:
        return {uid: int(c) for uid, c in zip(self.unit_ids, self.labels)}

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def violations(self) -> list[str]:
        out = []
        counts = np.bincount(self.labels, minlength=self.k)
        if len(counts) > self.k:
            out.append("label outside 0..k-1")
        if np.any(counts[: self.k] == 0):
            out.append(f"empty clusters: {np.flatnonzero(counts[: self.k] == 0).tolist()}")
        total = math.fsum(self.cluster_errors)
        if abs(total - self.total_error) > 1e-9 * max(abs(total), 1e-300):
            out.append(f"total_error {self.total_error!r} != sum of cluster errors {total!r}")
        return out


@dataclass(frozen=True, eq=False)
class DendrogramNode:
    """A node of the merge tree; leaves have ``children == ()`` and height 0."""

    id: int
    children: tuple[int, ...]
    height: float
    leader: Leader
    member_count: int
    aggregates: ClusterAggregates
    label: Optional[str] = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


def validate_object(x: SymbolicObject, s: Schema) -> list[str]:
    """List every way ``x`` fails the object invariants under schema ``s``.

    An empty list means the object is well formed.
    """
    out: list[str] = []
    sizes = {len(x.f), len(x.n), len(x.p), len(x.w)}
    if sizes != {s.m}:
        out.append(f"{x.id}: expected {s.m} variables, got f/n/p/w lengths {len(x.f)}/{len(x.n)}/{len(x.p)}/{len(x.w)}")
        return out
    for i, spec in enumerate(s.variables):
        tag = f"{x.id}: variable {spec.name!r}"
        f, n, p, w = x.f[i], x.n[i], x.p[i], x.w[i]
        if not (f.shape == p.shape == w.shape == (spec.k,)):
            out.append(f"{tag}: arity mismatch, expected {spec.k} components, got f{f.shape} p{p.shape} w{w.shape}")
            continue
        if not np.all(np.isfinite(f)) or not np.all(np.isfinite(p)) or not np.all(np.isfinite(w)):
            out.append(f"{tag}: non-finite values")
            continue
        if np.any(f < 0):
            out.append(f"{tag}: negative frequencies")
        if np.any(w < 0):
            out.append(f"{tag}: negative component weights")
        if np.any((p < 0) | (p > 1)):
            out.append(f"{tag}: probabilities outside [0, 1]")
        if n < 0:
            out.append(f"{tag}: negative count n={n}")
        if abs(math.fsum(f) - n) > NORMALIZATION_TOL * max(1.0, abs(n)):
            out.append(f"{tag}: n={n} does not equal the sum of frequencies {math.fsum(f)}")
        if n > 0:
            total = math.fsum(p)
            if abs(total - 1.0) > NORMALIZATION_TOL:
                out.append(f"{tag}: normalization violated, probabilities sum to {total!r}")
        elif np.any(p != 0):
            out.append(f"{tag}: zero-count variable must have a zero distribution")
    return out


def check_objects(units: Sequence[SymbolicObject], s: Schema) -> None:
    """Raise :class:`SchemaError` listing the first violations found, if any."""
    problems: list[str] = []
    for x in units:
        problems.extend(validate_object(x, s))
        if len(problems) > 20:
            break
    if problems:
        raise SchemaError("invalid symbolic objects:\n  " + "\n  ".join(problems[:20]))


@dataclass
class UnitMatrix:
    """Stacked per-variable arrays for a list of units (rows follow input order)."""

    ids: tuple[str, ...]
    p: list[np.ndarray] = field(default_factory=list)
    w: list[np.ndarray] = field(default_factory=list)
    f: list[np.ndarray] = field(default_factory=list)
    n: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def stack(cls, units: Sequence[SymbolicObject]) -> "UnitMatrix":
        if not units:
            raise ValueError("no units")
        m = units[0].m
        if any(x.m != m for x in units):
            raise SchemaError("units describe different numbers of variables")
        um = cls(ids=tuple(x.id for x in units))
        for i in range(m):
            um.p.append(np.stack([x.p[i] for x in units]))
            um.w.append(np.stack([x.w[i] for x in units]))
            um.f.append(np.stack([x.f[i] for x in units]))
            um.n.append(np.array([x.n[i] for x in units]))
        return um

    def __len__(self):
        return len(self.ids)

    @property
    def m(self) -> int:
        return len(self.p)
