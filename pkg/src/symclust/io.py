"""Text formats: symbolic-object JSON lines, leaders, merge lists, flat clusterings.

Floats are written with 17 significant digits so every file round-trips
bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .agglom import Dendrogram, MergeRecord
from .model import ClusterAggregates, Clustering, SymbolicObject


def fmt(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return format(x, ".17g")


def dumps(obj: Any) -> str:
    """Compact JSON with 17-significant-digit floats."""
    if obj is None or isinstance(obj, (bool, str)):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def object_to_dict(x: SymbolicObject) -> dict:
    return {"id": x.id, "variables": [{"f": f, "w": w, "n": n} for f, w, n in zip(x.f, x.w, x.n)]}


def object_from_dict(d: dict) -> SymbolicObject:
    fs, ws, ns, ps = [], [], [], []
    for var in d["variables"]:
        f = np.array(var["f"], dtype=np.float64)
        n = float(var["n"]) if "n" in var else float(f.sum())
        fs.append(f)
        ns.append(n)
        ps.append(f / n if n > 0 else np.zeros_like(f))
        ws.append(np.array(var["w"], dtype=np.float64))
    return SymbolicObject(id=d["id"], f=tuple(fs), n=tuple(ns), p=tuple(ps), w=tuple(ws))


def write_objects(path, objects: Iterable[SymbolicObject]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for x in objects:
            fh.write(dumps(object_to_dict(x)) + "\n")


def read_objects(path) -> list[SymbolicObject]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(object_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad symbolic object record ({exc})") from None
    return out


def aggregates_to_dict(a: ClusterAggregates) -> dict:
    return {"count": a.count, "n": list(a.n), "f": list(a.f), "w": list(a.w), "P": list(a.P), "Q": list(a.Q),
            "H": list(a.H), "G": list(a.G), "w_pos": list(a.w_pos)}


def aggregates_from_dict(d: dict) -> ClusterAggregates:
    def arrs(name):
        return tuple(np.array(x, dtype=np.float64) for x in d[name])

    return ClusterAggregates(w=arrs("w"), P=arrs("P"), Q=arrs("Q"), H=arrs("H"), G=arrs("G"), w_pos=arrs("w_pos"),
                             f=arrs("f"), n=tuple(float(x) for x in d["n"]), count=int(d["count"]))


def write_leaders(path, clustering: Clustering) -> None:
    clusters = []
    for c, leader in enumerate(clustering.leaders):
        entry = {"cluster": c, "size": int(np.sum(clustering.labels == c)), "error": clustering.cluster_errors[c],
                 "leader": list(leader.t)}
        if clustering.aggregates:
            entry["aggregates"] = aggregates_to_dict(clustering.aggregates[c])
        clusters.append(entry)
    doc = {"delta": clustering.delta_kind.value, "total_error": clustering.total_error, "clusters": clusters}
    Path(path).write_text(dumps(doc) + "\n", encoding="utf-8")


def read_leader_aggregates(path) -> list[ClusterAggregates]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [aggregates_from_dict(c["aggregates"]) for c in doc["clusters"]]


def write_assignments(path, ids: Sequence[str], labels: Sequence[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "cluster"])
        for uid, c in zip(ids, labels):
            w.writerow([uid, int(c)])


def read_assignments(path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "cluster"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns 'id' and 'cluster'")
        return {row["id"]: int(row["cluster"]) for row in reader}


def write_merges(path, tree: Dendrogram) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["left", "right", "height", "new_node"])
        for m in tree.merges:
            w.writerow([m.left, m.right, fmt(m.height), m.new_node])


def read_merges(path) -> list[MergeRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, 2):
            try:
                out.append(MergeRecord(left=int(row["left"]), right=int(row["right"]), height=float(row["height"]),
                                       new_node=int(row["new_node"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad merge record ({exc})") from None
    n_leaves = len(out) + 1
    seen: set[int] = set()
    for idx, m in enumerate(out):
        if m.new_node != n_leaves + idx:
            raise ValueError(f"{path}: merge {idx} creates node {m.new_node}, expected {n_leaves + idx}")
        for child in (m.left, m.right):
            if child in seen or not 0 <= child < m.new_node:
                raise ValueError(f"{path}: merge {idx} uses invalid or already merged node {child}")
            seen.add(child)
    return out
