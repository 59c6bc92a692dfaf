import csv
import json
import subprocess
import sys

import pytest

from symclust import cli, io
from symclust.cli import main
from symclust.dissim import optimal_leader
from symclust.ingest import load_schema


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["generate", "--profile", "disjoint-support", "--seed", "7", "--out", str(root)]) == 0
    return root


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_generate_outputs(dataset):
    assert {p.name for p in dataset.iterdir()} == {"units.jsonl", "labels.csv", "schema.json", "microdata.csv"}
    assert len(io.read_objects(dataset / "units.jsonl")) == 500


def test_two_step_pipeline(dataset, tmp_path):
    cfg = write_config(tmp_path / "run.json", schema=str(dataset / "schema.json"), units=str(dataset / "units.jsonl"),
                       leaders={"k": 20, "restarts": 10, "seed": 5}, cut={"k": 4}, output_dir=str(tmp_path / "out"))
    assert main(["cluster", "--config", cfg, "--sequential"]) == 0
    out = tmp_path / "out"
    assert len(io.read_merges(out / "merges.csv")) == 19
    report = json.loads((out / "report.json").read_text())
    assert report["hierarchy"]["suggested_k"] == 4
    assert report["final"]["sizes"] == [125] * 4
    assert report["inertia"]["kind"] == "d1"
    trace = report["leaders"]["trace"]
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    planted = {r["id"]: r["cluster"] for r in read_csv(dataset / "labels.csv")}
    final = {r["id"]: r["cluster"] for r in read_csv(out / "final.csv")}
    assert len({(planted[u], final[u]) for u in planted}) == 4

    # the stand-alone cut reproduces the final file and suggests 4 clusters
    cut_out = tmp_path / "cut.csv"
    assert main(["cut", "--tree", str(out / "merges.csv"), "--k", "4", "--assignments", str(out / "assignments.csv"),
                 "--out", str(cut_out)]) == 0
    assert cut_out.read_bytes() == (out / "final.csv").read_bytes()

    # profiles of the flat clusters equal their d1 leaders
    prof = tmp_path / "profile.csv"
    assert main(["profile", "--clustering", str(out / "final.csv"), "--units", str(dataset / "units.jsonl"),
                 "--schema", str(dataset / "schema.json"), "--out", str(prof)]) == 0
    rows = read_csv(prof)
    s = load_schema(dataset / "schema.json")
    objects = io.read_objects(dataset / "units.jsonl")
    names = [v.name for v in s.variables]
    for c in range(4):
        members = [x for x in objects if final[x.id] == str(c)]
        T = optimal_leader(members, s, "d1")
        for r in rows:
            if int(r["cluster"]) != c:
                continue
            i = names.index(r["variable"])
            j = s.variables[i].categories.index(r["category"])
            assert int(r["members"]) == len(members)
            assert float(r["share"]) == pytest.approx(T.t[i][j], abs=1e-12)


def test_cut_reports_heights(dataset, tmp_path, capsys):
    cfg = write_config(tmp_path / "run.json", schema=str(dataset / "schema.json"), units=str(dataset / "units.jsonl"),
                       stages=["leaders", "hierarchical"], leaders={"k": 20, "restarts": 3, "seed": 1},
                       output_dir=str(tmp_path / "out"))
    assert main(["cluster", "--config", cfg, "--sequential"]) == 0
    capsys.readouterr()
    tree = str(tmp_path / "out" / "merges.csv")
    assert main(["cut", "--tree", tree, "--k", "20"]) == 0
    captured = capsys.readouterr()
    assert "suggested k (largest height gap) = 4" in captured.err
    assert len(captured.err.splitlines()[1].split()) == 1 + 19
    labels = [int(r["cluster"]) for r in csv.DictReader(captured.out.splitlines())]
    assert labels == list(range(20))
    assert main(["cut", "--tree", tree, "--k", "1"]) == 0
    assert {r["cluster"] for r in csv.DictReader(capsys.readouterr().out.splitlines())} == {"0"}
    assert main(["cut", "--tree", tree, "--height", "1e9"]) == 0
    assert main(["cut", "--tree", tree, "--k", "21"]) == 2


def test_hierarchical_only(tmp_path):
    data = tmp_path / "d"
    profile = {
        "variables": [{"name": "V", "categories": ["a", "b", "c"]}],
        "groups": [{"size": 6, "members": [1, 3], "templates": {"V": [3, 1, 0]}},
                   {"size": 6, "members": [1, 3], "templates": {"V": [0, 1, 3]}}],
    }
    (tmp_path / "profile.json").write_text(json.dumps(profile))
    assert main(["generate", "--profile", str(tmp_path / "profile.json"), "--seed", "0", "--out", str(data)]) == 0
    cfg = write_config(tmp_path / "run.json", schema="d/schema.json", microdata="d/microdata.csv",
                       stages=["hierarchical"], delta="d3", cut={"k": 2}, output_dir="out")
    assert main(["cluster", "--config", cfg]) == 0
    out = tmp_path / "out"
    assert len(io.read_merges(out / "merges.csv")) == 11
    assert [int(r["cluster"]) for r in read_csv(out / "assignments.csv")] == list(range(12))
    assert not (out / "leaders.json").exists()


@pytest.mark.parametrize("cfg, code", [
    ({"delta": "d9"}, 2),
    ({"stages": ["kmeans"]}, 2),
    ({"colour": "red"}, 2),
    ({"leaders": {"k": 0}}, 2),
    ({"leaders": {"k": 600}}, 1),
])
def test_config_errors(dataset, tmp_path, cfg, code):
    base = {"schema": str(dataset / "schema.json"), "units": str(dataset / "units.jsonl"),
            "output_dir": str(tmp_path / "out")}
    path = write_config(tmp_path / "run.json", **{**base, **cfg})
    assert main(["cluster", "--config", path]) == code


def test_missing_config(tmp_path):
    assert main(["cluster", "--config", str(tmp_path / "nope.json")]) == 2


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["cut", "--tree", "x.csv"])
    assert exc.value.code == 2


def test_profile_mismatch(dataset, tmp_path):
    path = tmp_path / "a.csv"
    io.write_assignments(path, ["u00000", "ghost"], [0, 1])
    assert main(["profile", "--clustering", str(path), "--units", str(dataset / "units.jsonl")]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "symclust", "generate", "--profile", "disjoint-support",
                           "--seed", "1", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "units.jsonl").exists()


def test_parallel_and_sequential_runs_agree(dataset, tmp_path):
    results = []
    for name, extra in (("seq", ["--sequential"]), ("par", [])):
        cfg = write_config(tmp_path / f"{name}.json", schema=str(dataset / "schema.json"),
                           units=str(dataset / "units.jsonl"), workers=2, stages=["leaders"],
                           leaders={"k": 6, "restarts": 3, "seed": 2}, output_dir=str(tmp_path / name))
        assert main(["cluster", "--config", cfg, *extra]) == 0
        results.append((tmp_path / name / "assignments.csv").read_bytes())
    assert results[0] == results[1]


def test_large_hierarchical_run_warns(dataset, tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "HIERARCHICAL_LIMIT", 100)
    cfg = write_config(tmp_path / "run.json", schema=str(dataset / "schema.json"), units=str(dataset / "units.jsonl"),
                       stages=["hierarchical"], output_dir=str(tmp_path / "out"))
    assert main(["cluster", "--config", cfg]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert any("500 units" in w for w in report["warnings"])
    assert len(report["hierarchy"]["heights"]) == 499
