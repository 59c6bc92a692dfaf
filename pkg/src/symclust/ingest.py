"""From raw micro-data rows to symbolic objects.

Rows (e.g. household members) are grouped by unit, every variable is turned
into category counts, counts are multiplied by the unit's survey weight and
component weights are attached according to the schema's weight scheme.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import (
    CATEGORICAL,
    NUMERIC_BINNED,
    Schema,
    SchemaError,
    SymbolicObject,
    VariableSpec,
    bin_labels,
)

MISSING = {"", "na", "nan", "n/a", "none", "."}


class ProfileError(ValueError):
    """Invalid synthetic-data profile."""


# -- schema -------------------------------------------------------------------


def _variable_from_dict(d: Mapping[str, Any], where: str) -> VariableSpec:
    if not isinstance(d, Mapping):
        raise SchemaError(f"{where}: expected an object")
    unknown = set(d) - {"name", "kind", "categories", "breaks", "na_category", "alpha", "column", "per_unit", "delta"}
    if unknown:
        raise SchemaError(f"{where}: unknown fields {sorted(unknown)}")
    if "name" not in d:
        raise SchemaError(f"{where}: missing 'name'")
    kind = d.get("kind", CATEGORICAL)
    na = bool(d.get("na_category", False))
    breaks = d.get("breaks")
    cats = d.get("categories")
    if kind == NUMERIC_BINNED and cats is None and breaks is not None:
        cats = bin_labels(breaks) + (["NA"] if na else [])
    if cats is None:
        raise SchemaError(f"{where}: missing 'categories'")
    try:
        return VariableSpec(
            name=str(d["name"]),
            categories=tuple(cats),
            kind=kind,
            breaks=tuple(breaks) if breaks is not None else None,
            na_category=na,
            alpha=float(d.get("alpha", 1.0)),
            column=d.get("column"),
            per_unit=bool(d.get("per_unit", False)),
            delta=d.get("delta"),
        )
    except (SchemaError, ValueError, TypeError) as exc:
        raise SchemaError(f"{where}: {exc}") from None


def schema_from_dict(d: Mapping[str, Any]) -> Schema:
    if not isinstance(d, Mapping):
        raise SchemaError("schema: expected a JSON object")
    variables = d.get("variables")
    if not isinstance(variables, list) or not variables:
        raise SchemaError("schema.variables: expected a nonempty list")
    specs = tuple(_variable_from_dict(v, f"schema.variables[{i}]") for i, v in enumerate(variables))
    wcols = d.get("weight_columns", d.get("weight_column"))
    if isinstance(wcols, str):
        wcols = [wcols]
    s = Schema(
        variables=specs,
        alpha_normalized=False,
        weight_scheme=d.get("weight_scheme", "per-variable-n"),
        weight_columns=tuple(wcols or ()),
        custom_weight_column=d.get("custom_weight_column"),
        unit_column=d.get("unit_column", "unit_id"),
    )
    return s.normalized() if d.get("alpha_normalized", False) else s


def schema_to_dict(s: Schema) -> dict:
    out = {
        "unit_column": s.unit_column,
        "weight_scheme": s.weight_scheme,
        "alpha_normalized": s.alpha_normalized,
        "variables": [],
    }
    if s.weight_columns:
        out["weight_columns"] = list(s.weight_columns)
    if s.custom_weight_column:
        out["custom_weight_column"] = s.custom_weight_column
    for v in s.variables:
        d = {"name": v.name, "kind": v.kind, "categories": list(v.categories), "alpha": v.alpha}
        if v.breaks is not None:
            d["breaks"] = list(v.breaks)
        if v.na_category:
            d["na_category"] = True
        if v.column:
            d["column"] = v.column
        if v.per_unit:
            d["per_unit"] = True
        if v.delta is not None:
            d["delta"] = v.delta.value
        out["variables"].append(d)
    return out


def load_schema(path) -> Schema:
    """Read a JSON schema file.  Errors carry the line or the offending field."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return schema_from_dict(d)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


# -- rows -> objects ----------------------------------------------------------


def is_missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, float):
        return math.isnan(value)
    return isinstance(value, str) and value.strip().lower() in MISSING


def categorize(value, spec: VariableSpec) -> int:
    """Category index of a raw value.

    Numeric bins are left-closed: index ``j`` iff ``breaks[j-1] <= value <
    breaks[j]``.  Missing values go to the trailing NA category.
    """
    if is_missing(value):
        if spec.na_index is None:
            raise ValueError(f"missing value for {spec.name!r}, which has no NA category")
        return spec.na_index
    if spec.kind == NUMERIC_BINNED:
        x = float(value)
        if math.isnan(x):
            return categorize(None, spec)
        return int(np.searchsorted(np.asarray(spec.breaks), x, side="right"))
    label = str(value).strip()
    try:
        return spec.categories.index(label)
    except ValueError:
        raise ValueError(f"unknown category {label!r} for {spec.name!r}") from None


def aggregate_unit(rows: Sequence[Mapping[str, Any]], s: Schema, unit_weight: float = 1.0,
                   id: Optional[str] = None) -> SymbolicObject:
    """Count categories over one unit's rows and attach weights.

    Counts are multiplied by ``unit_weight``.  Share-type (``per_unit``)
    variables use the first row only, so their frequencies sum to
    ``unit_weight``.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("aggregate_unit needs at least one row")
    if not unit_weight > 0 or math.isinf(unit_weight):
        raise ValueError(f"unit weight must be a positive finite number, got {unit_weight!r}")
    if id is None:
        id = str(rows[0].get(s.unit_column, ""))
    fs = []
    for spec in s.variables:
        f = np.zeros(spec.k)
        for row in rows[:1] if spec.per_unit else rows:
            f[categorize(row.get(spec.source_column), spec)] += 1.0
        fs.append(f * unit_weight)
    ns = [float(f.sum()) for f in fs]
    if s.weight_scheme == "per-variable-n":
        w = None
    elif s.weight_scheme == "ones":
        w = [unit_weight] * len(fs)
    else:
        raw = rows[0].get(s.custom_weight_column)
        if is_missing(raw):
            raise ValueError(f"unit {id}: missing custom weight column {s.custom_weight_column!r}")
        w = [float(raw) * unit_weight] * len(fs)
    return SymbolicObject.from_frequencies(id, fs, w=w)


def unit_weight_of(row: Mapping[str, Any], s: Schema) -> float:
    """Product of the schema's weight columns (design x population), 1 if none."""
    w = 1.0
    for col in s.weight_columns:
        raw = row.get(col)
        if is_missing(raw):
            raise ValueError(f"missing weight in column {col!r}")
        w *= float(raw)
    return w


def group_rows(rows: Iterable[Mapping[str, Any]], s: Schema) -> dict[str, list[Mapping[str, Any]]]:
    """Rows grouped by unit id, in order of first appearance."""
    groups: dict[str, list] = {}
    for row in rows:
        uid = row.get(s.unit_column)
        if is_missing(uid):
            raise ValueError(f"row without a value in unit column {s.unit_column!r}")
        groups.setdefault(str(uid), []).append(row)
    return groups


def read_microdata(path) -> list[dict[str, str]]:
    """Comma- or tab-delimited text with a header row."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline()
        delim = "\t" if header.count("\t") > header.count(",") else ","
        fh.seek(0)
        return list(csv.DictReader(fh, delimiter=delim))


def ingest_rows(rows: Iterable[Mapping[str, Any]], s: Schema) -> list[SymbolicObject]:
    out = []
    for uid, members in group_rows(rows, s).items():
        try:
            out.append(aggregate_unit(members, s, unit_weight_of(members[0], s), id=uid))
        except ValueError as exc:
            raise ValueError(f"unit {uid}: {exc}") from None
    return out


def ingest_microdata(path, s: Schema) -> list[SymbolicObject]:
    return ingest_rows(read_microdata(path), s)


# -- synthetic data -----------------------------------------------------------


@dataclass
class SyntheticData:
    objects: list[SymbolicObject]
    labels: np.ndarray
    schema: Schema
    rows: list[dict[str, Any]]


def _range(value, where) -> tuple[int, int]:
    if isinstance(value, (int, np.integer)):
        lo = hi = int(value)
    else:
        try:
            lo, hi = (int(x) for x in value)
        except (TypeError, ValueError):
            raise ProfileError(f"{where}: expected an integer or [lo, hi]") from None
    if lo < 1 or hi < lo:
        raise ProfileError(f"{where}: invalid range [{lo}, {hi}]")
    return lo, hi


def _profile_schema(profile: Mapping[str, Any]) -> Schema:
    variables = profile.get("variables")
    if not isinstance(variables, list) or not variables:
        raise ProfileError("profile.variables: expected a nonempty list")
    try:
        specs = tuple(_variable_from_dict(v, f"profile.variables[{i}]") for i, v in enumerate(variables))
        return Schema(variables=specs, weight_scheme=profile.get("weight_scheme", "per-variable-n"),
                      weight_columns=("weight",) if profile.get("weights") else ())
    except SchemaError as exc:
        raise ProfileError(str(exc)) from None


def generate_synthetic(profile: Mapping[str, Any], seed: int) -> SyntheticData:
    """Seeded units drawn from planted groups of category templates.

    ``profile`` holds ``variables`` (categorical specs), ``groups`` (each
    with ``size`` units, ``members`` rows per unit and one probability
    ``templates`` entry per variable name) and optionally ``weights:
    [lo, hi]`` for uniform unit weights.
    """
    s = _profile_schema(profile)
    groups = profile.get("groups")
    if not isinstance(groups, list) or not groups:
        raise ProfileError("profile.groups: expected a nonempty list")
    templates = []
    for g, grp in enumerate(groups):
        tmpl = grp.get("templates", {})
        row = []
        for spec in s.variables:
            if spec.name not in tmpl:
                raise ProfileError(f"profile.groups[{g}]: no template for variable {spec.name!r}")
            p = np.asarray(tmpl[spec.name], dtype=np.float64)
            if p.shape != (spec.k,) or np.any(p < 0) or not p.sum() > 0:
                raise ProfileError(f"profile.groups[{g}].templates.{spec.name}: expected {spec.k} nonnegative "
                                   f"values with a positive sum")
            row.append(p / p.sum())
        templates.append(row)
    weights = profile.get("weights")
    if weights is not None:
        try:
            wlo, whi = (float(x) for x in weights)
        except (TypeError, ValueError):
            raise ProfileError("profile.weights: expected [lo, hi]") from None
        if not 0 < wlo <= whi:
            raise ProfileError("profile.weights: need 0 < lo <= hi")
    rng = np.random.default_rng(seed)
    rows: list[dict[str, Any]] = []
    objects, labels = [], []
    for g, grp in enumerate(groups):
        lo, hi = _range(grp.get("size", 1), f"profile.groups[{g}].size")
        mlo, mhi = _range(grp.get("members", 1), f"profile.groups[{g}].members")
        for _ in range(int(rng.integers(lo, hi + 1))):
            uid = f"u{len(objects):05d}"
            members = int(rng.integers(mlo, mhi + 1))
            weight = 1.0 if weights is None else float(rng.uniform(wlo, whi))
            unit_rows = [{s.unit_column: uid} for _ in range(members)]
            if weights is not None:
                for r in unit_rows:
                    r["weight"] = repr(weight)
            for spec, p in zip(s.variables, templates[g]):
                if spec.per_unit:
                    cats = [rng.choice(spec.k, p=p)] * members
                else:
                    cats = rng.choice(spec.k, size=members, p=p)
                for r, c in zip(unit_rows, cats):
                    r[spec.source_column] = spec.categories[int(c)]
            rows.extend(unit_rows)
            objects.append(aggregate_unit(unit_rows, s, weight, id=uid))
            labels.append(g)
    return SyntheticData(objects=objects, labels=np.array(labels, dtype=np.int64), schema=s, rows=rows)


def disjoint_support_profile(groups: int = 4, units_per_group: int = 125, categories_per_group: int = 3,
                             n_variables: int = 3, members=(1, 6), weights=None, seed: int = 0,
                             supplementary: bool = True) -> dict:
    """Household-style profile whose planted groups occupy disjoint categories.

    Each clustered variable has ``groups * categories_per_group`` categories
    and group ``g`` only uses block ``g``.  With ``supplementary`` a
    per-unit variable ``country`` with α = 0 is added for profiling.
    """
    rng = np.random.default_rng(seed)
    k = groups * categories_per_group
    variables = [
        {"name": f"V{i + 1}", "categories": [f"V{i + 1}_{j}" for j in range(k)]} for i in range(n_variables)
    ]
    n_countries = 6
    if supplementary:
        variables.append({"name": "country", "categories": [f"C{j}" for j in range(n_countries)],
                          "per_unit": True, "alpha": 0.0})
    grps = []
    for g in range(groups):
        tmpl = {}
        for v in variables[:n_variables]:
            p = np.zeros(k)
            p[g * categories_per_group:(g + 1) * categories_per_group] = rng.dirichlet(
                np.full(categories_per_group, 4.0))
            tmpl[v["name"]] = p.tolist()
        if supplementary:
            tmpl["country"] = rng.dirichlet(np.ones(n_countries)).tolist()
        grps.append({"size": units_per_group, "members": list(members), "templates": tmpl})
    out = {"variables": variables, "groups": grps}
    if weights is not None:
        out["weights"] = list(weights)
    return out
