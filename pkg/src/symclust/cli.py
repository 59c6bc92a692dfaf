"""Command-line driver.

    symclust cluster --config run.json [--sequential]
    symclust cut --tree merges.csv (--k N | --height H) [--assignments FILE]
    symclust profile --clustering FILE --units units.jsonl [--schema schema.json]
    symclust generate --profile profile.json --seed N --out DIR

Exit codes: 0 ok, 1 runtime or data error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import io
from .agglom import agglomerate, cut_merges, k_at_height, largest_gap_k
from .diagnostics import cluster_profiles, inertia
from .dissim import DegenerateError, DomainError
from .ingest import (
    disjoint_support_profile,
    generate_synthetic,
    ingest_microdata,
    load_schema,
    schema_from_dict,
    schema_to_dict,
)
from .leaders import InfeasibleError, LeadersConfig, evaluate_partition, leaders_run
from .model import DissimKind, Schema, SchemaError, UnitMatrix, check_objects

logger = logging.getLogger("symclust")

STAGES = ("leaders", "hierarchical")
HIERARCHICAL_LIMIT = 2000


class ConfigError(ValueError):
    pass


def _resolve(base: Path, value: Optional[str]) -> Optional[Path]:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    known = {"schema", "units", "microdata", "delta", "alpha", "alpha_normalized", "weight_scheme", "stages",
             "leaders", "cut", "output_dir", "workers"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    base = path.parent
    out: dict[str, Any] = {}
    try:
        out["delta"] = DissimKind.parse(cfg.get("delta", "d1"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if "schema" not in cfg:
        raise ConfigError("config needs 'schema'")
    if ("units" in cfg) == ("microdata" in cfg):
        raise ConfigError("config needs exactly one of 'units' or 'microdata'")
    out["schema"] = _resolve(base, cfg["schema"])
    out["units"] = _resolve(base, cfg.get("units"))
    out["microdata"] = _resolve(base, cfg.get("microdata"))
    out["alpha"] = cfg.get("alpha")
    out["alpha_normalized"] = cfg.get("alpha_normalized")
    out["weight_scheme"] = cfg.get("weight_scheme")
    stages = cfg.get("stages", list(STAGES))
    if not stages or any(st not in STAGES for st in stages):
        raise ConfigError(f"stages must be a nonempty subset of {STAGES}, got {stages!r}")
    out["stages"] = [st for st in STAGES if st in stages]
    lcfg = cfg.get("leaders", {})
    if "leaders" in out["stages"]:
        try:
            out["leaders"] = LeadersConfig(**{"k": 20, "restarts": 10, **lcfg, "workers": int(cfg.get("workers", 1))})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"leaders: {exc}") from None
    cut = cfg.get("cut")
    if cut is not None and (not isinstance(cut, dict) or len(set(cut) & {"k", "height"}) != 1):
        raise ConfigError("cut must be an object with exactly one of 'k' or 'height'")
    out["cut"] = cut
    out["output_dir"] = _resolve(base, cfg.get("output_dir", "out"))
    return out


def _schema_for(cfg: dict) -> Schema:
    try:
        s = load_schema(cfg["schema"])
        if cfg["weight_scheme"] is not None:
            d = schema_to_dict(s)
            d["weight_scheme"] = cfg["weight_scheme"]
            s = schema_from_dict(d)
        if cfg["alpha"] is not None:
            s = s.with_alpha(cfg["alpha"])
        if cfg["alpha_normalized"]:
            s = s.normalized()
    except FileNotFoundError as exc:
        raise ConfigError(f"schema file not found: {exc.filename}") from None
    except SchemaError as exc:
        raise ConfigError(str(exc)) from None
    return s


def run_cluster(cfg: dict) -> dict:
    """Run the configured pipeline, write the output files and return the report."""
    s = _schema_for(cfg)
    units = io.read_objects(cfg["units"]) if cfg["units"] else ingest_microdata(cfg["microdata"], s)
    check_objects(units, s)
    um = UnitMatrix.stack(units)
    kind = cfg["delta"]
    outdir = Path(cfg["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    report: dict[str, Any] = {"delta": kind.value, "n_units": len(um), "stages": cfg["stages"], "warnings": []}

    if "leaders" in cfg["stages"]:
        lc: LeadersConfig = cfg["leaders"]
        result = leaders_run(um, s, kind, lc)
        io.write_leaders(outdir / "leaders.json", result)
        io.write_assignments(outdir / "assignments.csv", um.ids, result.labels)
        report["leaders"] = {
            "k": lc.k, "restarts": lc.restarts, "seed": lc.seed, "init": lc.init,
            "total_error": result.total_error, "restart_errors": list(result.restart_errors),
            "best_restart": result.best_restart, "iterations": result.iterations, "converged": result.converged,
            "trace": list(result.trace), "cluster_errors": list(result.cluster_errors),
            "sizes": np.bincount(result.labels, minlength=lc.k).tolist(),
        }
        if not result.converged:
            report["warnings"].append(f"leaders stopped before assignments stabilized ({result.iterations} iterations)")
        report["inertia"] = inertia(um, result, s, kind).to_dict()
        items, leaf_labels = list(result.aggregates), [f"L{c}" for c in range(lc.k)]
        unit_leaf = result.labels
    else:
        if len(um) > HIERARCHICAL_LIMIT:
            report["warnings"].append(f"hierarchical clustering on {len(um)} units; expect long runtimes")
        io.write_assignments(outdir / "assignments.csv", um.ids, np.arange(len(um)))
        items, leaf_labels, unit_leaf = um, list(um.ids), np.arange(len(um))

    if "hierarchical" in cfg["stages"]:
        if len(items) < 2:
            raise ValueError("hierarchical stage needs at least two clusters")
        tree = agglomerate(items, s, kind, labels=leaf_labels)
        io.write_merges(outdir / "merges.csv", tree)
        report["hierarchy"] = {
            "n_leaves": tree.n_leaves, "heights": tree.heights.tolist(), "inversions": tree.inversions,
            "clamped": tree.clamped, "suggested_k": tree.suggest_k(),
        }
        if tree.inversions:
            report["warnings"].append(f"merge heights decrease at merges {tree.inversions}")
        if tree.clamped:
            report["warnings"].append(f"{tree.clamped} negative merge heights clamped to 0")
        cut = cfg["cut"]
        if cut is not None:
            k = int(cut["k"]) if "k" in cut else k_at_height(tree.merges, tree.n_leaves, float(cut["height"]))
            leaf_cluster = tree.cut(k)
            final = leaf_cluster[unit_leaf]
            io.write_assignments(outdir / "final.csv", um.ids, final)
            flat = evaluate_partition(um, final, s, kind)
            report["final"] = {"k": k, "total_error": flat.total_error,
                               "sizes": np.bincount(final, minlength=k).tolist()}

    (outdir / "report.json").write_text(io.dumps(report) + "\n", encoding="utf-8")
    return report


def cmd_cluster(args) -> int:
    cfg = load_config(args.config)
    if args.sequential and "leaders" in cfg:
        cfg["leaders"] = LeadersConfig(**{**cfg["leaders"].__dict__, "workers": 1})
    report = run_cluster(cfg)
    for w in report["warnings"]:
        logger.warning(w)
    print(f"wrote results to {cfg['output_dir']}")
    return 0


def cmd_cut(args) -> int:
    merges = io.read_merges(args.tree)
    n = len(merges) + 1
    k = args.k if args.k is not None else k_at_height(merges, n, args.height)
    if not 1 <= k <= n:
        raise ConfigError(f"k must lie in 1..{n}, got {k}")
    labels = cut_merges(merges, n, k)
    if args.assignments:
        leaf_of = io.read_assignments(args.assignments)
        bad = [uid for uid, leaf in leaf_of.items() if not 0 <= leaf < n]
        if bad:
            raise ValueError(f"assignments refer to leaves outside 0..{n - 1}: {bad[:5]}")
        ids, out = list(leaf_of), [labels[leaf_of[uid]] for uid in leaf_of]
    else:
        ids, out = [str(i) for i in range(n)], labels.tolist()
    heights = [m.height for m in merges]
    sys.stderr.write(f"k={k}; suggested k (largest height gap) = {largest_gap_k(heights, n)}\n")
    sys.stderr.write("heights: " + " ".join(io.fmt(h) for h in heights) + "\n")
    if args.out:
        io.write_assignments(args.out, ids, out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["id", "cluster"])
        w.writerows([uid, int(c)] for uid, c in zip(ids, out))
    return 0


PROFILE_COLUMNS = ("cluster", "members", "variable", "category", "frequency", "n", "weight", "share")


def cmd_profile(args) -> int:
    assignment = io.read_assignments(args.clustering)
    units = io.read_objects(args.units)
    ids = [x.id for x in units]
    missing = [uid for uid in ids if uid not in assignment]
    extra = set(assignment) - set(ids)
    if missing or extra:
        raise ValueError(f"clustering and units disagree: {len(missing)} units unassigned, "
                         f"{len(extra)} assignments without a unit")
    if args.schema:
        try:
            s = load_schema(args.schema)
        except SchemaError as exc:
            raise ConfigError(str(exc)) from None
    else:
        s = Schema.simple([len(p) for p in units[0].p])
    check_objects(units, s)
    rows = cluster_profiles(units, [assignment[uid] for uid in ids], s)
    fh = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_COLUMNS)
        for r in rows:
            w.writerow([r[c] if not isinstance(r[c], float) else io.fmt(r[c]) for c in PROFILE_COLUMNS])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_generate(args) -> int:
    if args.profile == "disjoint-support":
        profile = disjoint_support_profile(seed=args.seed)
    else:
        try:
            profile = json.loads(Path(args.profile).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read profile {args.profile}: {exc}") from None
    try:
        data = generate_synthetic(profile, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_objects(out / "units.jsonl", data.objects)
    io.write_assignments(out / "labels.csv", [x.id for x in data.objects], data.labels)
    (out / "schema.json").write_text(json.dumps(schema_to_dict(data.schema), indent=2) + "\n", encoding="utf-8")
    columns = list(dict.fromkeys(k for r in data.rows for k in r))
    with open(out / "microdata.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(data.rows)
    print(f"wrote {len(data.objects)} units to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symclust", description="Leaders and Ward clustering of modal-valued data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="run the leaders and/or hierarchical stages from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--sequential", action="store_true", help="run restarts in one process")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("cut", help="cut a merge list into flat clusters")
    p.add_argument("--tree", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--k", type=int)
    g.add_argument("--height", type=float)
    p.add_argument("--assignments", help="unit -> leaf file to map the cut back to units")
    p.add_argument("--out")
    p.set_defaults(func=cmd_cut)

    p = sub.add_parser("profile", help="pooled variable distributions per cluster")
    p.add_argument("--clustering", required=True)
    p.add_argument("--units", required=True)
    p.add_argument("--schema")
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("generate", help="write a seeded synthetic data set")
    p.add_argument("--profile", required=True, help="profile JSON, or 'disjoint-support' for the built-in one")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"symclust: configuration error: {exc}\n")
        return 2
    except (DomainError, DegenerateError, InfeasibleError, SchemaError, ValueError, OSError) as exc:
        sys.stderr.write(f"symclust: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
