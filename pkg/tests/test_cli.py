import json
import subprocess
import sys

import numpy as np
import pytest

from trajpriv.cli import main
from trajpriv.datasets import make_two_cluster_world
from trajpriv.io import load_dataset, save_dataset


@pytest.fixture
def raw_file(tmp_path):
    d = make_two_cluster_world(n_trajectories=60, length=12, random_state=1)
    path = tmp_path / "raw.jsonl"
    save_dataset(d, path)
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


BBOX = "0,0,1,1"


def test_ingest(tmp_path, raw_file, capsys):
    out = tmp_path / "canonical.jsonl"
    assert run_cli("ingest", "--input", raw_file, "--output", out) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["trajectories"] == 60
    assert len(load_dataset(out)) == 60


def test_preprocess_with_explicit_bbox(tmp_path, raw_file, capsys):
    out = tmp_path / "prep.jsonl"
    code = run_cli("preprocess", "--input", raw_file, "--output", out,
                   "--bbox", BBOX, "--length", 8)
    assert code == 0
    d = load_dataset(out)
    assert d.fixed_length == 8 and len(d) == 60


def test_split(tmp_path, raw_file, capsys):
    out = tmp_path / "folds.json"
    assert run_cli("split", "--input", raw_file, "--k", 5, "--seed", 3,
                   "--output", out) == 0
    folds = json.loads(out.read_text())
    assert len(folds) == 5
    all_test = sorted(tid for f in folds for tid in f["test_ids"])
    assert len(all_test) == 60


def test_synthesize_and_budget_sidecar(tmp_path, raw_file, capsys):
    out = tmp_path / "syn.jsonl"
    code = run_cli("synthesize", "--input", raw_file, "--output", out,
                   "--eps", 5.0, "--count", 30, "--seed", 1, "--bbox", BBOX,
                   "--g1", 3)
    assert code == 0
    syn = load_dataset(out)
    assert len(syn) == 30
    budget = json.loads((tmp_path / "syn.jsonl.budget.json").read_text())
    assert budget["epsilon"] == 5.0
    assert budget["unit"] == "trajectory"


def test_synthesize_deterministic(tmp_path, raw_file, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_cli("synthesize", "--input", raw_file, "--output", a, "--seed", 7,
            "--count", 10, "--bbox", BBOX, "--g1", 3)
    run_cli("synthesize", "--input", raw_file, "--output", b, "--seed", 7,
            "--count", 10, "--bbox", BBOX, "--g1", 3)
    assert a.read_text() == b.read_text()


def test_privatize_cond(tmp_path, raw_file, capsys):
    out = tmp_path / "emb.csv"
    maps = tmp_path / "maps.json"
    code = run_cli("privatize-cond", "--input", raw_file, "--output", out,
                   "--m", 10, "--d-out", 4, "--eps", 10.0, "--seed", 2,
                   "--maps-out", maps)
    assert code == 0
    info = json.loads(capsys.readouterr().out)
    assert info["rows"] == 10
    assert info["budget"]["epsilon"] == 10.0
    emb = np.loadtxt(out, delimiter=",")
    assert emb.shape == (10, 4)
    assert json.loads((tmp_path / "emb.csv.budget.json").read_text())["adjacency"] == "replace-one"
    assert maps.exists()


def test_evaluate_identity(tmp_path, raw_file, capsys):
    report = tmp_path / "report.json"
    results = tmp_path / "runs.jsonl"
    code = run_cli("evaluate", "--real", raw_file, "--syn", raw_file,
                   "--output", report, "--pairing", "identity",
                   "--bbox", BBOX, "--case-id", "self", "--append-result", results)
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["metrics"]["jsd"] == 0.0
    assert doc["metrics"]["hd_points"] == 0.0
    assert doc["case_id"] == "self"
    assert results.exists()


def test_report_aggregation(tmp_path, raw_file, capsys):
    results = tmp_path / "runs.jsonl"
    report = tmp_path / "r.json"
    for seed in (1, 2):
        run_cli("evaluate", "--real", raw_file, "--syn", raw_file,
                "--output", report, "--pairing", "identity", "--bbox", BBOX,
                "--case-id", "self", "--seed", seed, "--append-result", results)
    table = tmp_path / "table.csv"
    assert run_cli("report", "--results", results, "--output", table) == 0
    text = table.read_text()
    assert text.startswith("case_id,n_runs")
    assert "self,2" in text


def test_density(tmp_path, raw_file, capsys):
    out = tmp_path / "grid.csv"
    assert run_cli("density", "--input", raw_file, "--g", 16, "--output", out,
                   "--bbox", BBOX) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["total_points"] == 60 * 12
    assert len(out.read_text().strip().splitlines()) == 16


def test_error_is_machine_readable_json(tmp_path, capsys):
    code = run_cli("ingest", "--input", tmp_path / "missing.jsonl",
                   "--output", tmp_path / "out.jsonl")
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"
    assert "missing.jsonl" in err["message"]


def test_secure_flag_runs(tmp_path, raw_file, capsys):
    out = tmp_path / "syn.jsonl"
    assert run_cli("synthesize", "--input", raw_file, "--output", out,
                   "--count", 5, "--secure", "--bbox", BBOX, "--g1", 3) == 0


def test_preset_dataset_flag(tmp_path, capsys):
    from trajpriv.geo import PRESETS, Trajectory, TrajectoryDataset
    box = PRESETS["porto"].bbox
    gen = np.random.default_rng(0)
    trajs = [Trajectory(f"p{i}", np.column_stack([
        gen.uniform(box.lat_min, box.lat_max, 5),
        gen.uniform(box.lon_min, box.lon_max, 5),
    ])) for i in range(6)]
    raw = tmp_path / "porto_raw.jsonl"
    save_dataset(TrajectoryDataset(trajs), raw)
    out = tmp_path / "prep.jsonl"
    assert run_cli("preprocess", "--input", raw, "--output", out,
                   "--dataset", "porto") == 0
    assert load_dataset(out).fixed_length == 100


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "trajpriv.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("ingest", "preprocess", "split", "synthesize", "privatize-cond",
                 "evaluate", "report", "density"):
        assert name in proc.stdout


def test_privatize_cond_maps_roundtrip(tmp_path, raw_file, capsys):
    maps = tmp_path / "maps.json"
    run_cli("privatize-cond", "--input", raw_file, "--output", tmp_path / "e1.csv",
            "--m", 8, "--d-out", 4, "--seed", 5, "--maps-out", maps)
    code = run_cli("privatize-cond", "--input", raw_file,
                   "--output", tmp_path / "e2.csv",
                   "--m", 8, "--d-out", 4, "--seed", 5, "--maps-in", maps)
    assert code == 0
    a = np.loadtxt(tmp_path / "e1.csv", delimiter=",")
    b = np.loadtxt(tmp_path / "e2.csv", delimiter=",")
    assert a.shape == b.shape == (8, 4)


def test_evaluate_unequal_counts_subsampled(tmp_path, raw_file, capsys):
    # 60 real vs 25 synthetic: evaluate equalizes by deterministic subsampling.
    syn = make_two_cluster_world(n_trajectories=25, length=12, random_state=4)
    syn_path = tmp_path / "syn.jsonl"
    save_dataset(syn, syn_path)
    report = tmp_path / "rep.json"
    code = run_cli("evaluate", "--real", raw_file, "--syn", syn_path,
                   "--output", report, "--bbox", BBOX, "--seed", 3)
    assert code == 0
    doc = json.loads(report.read_text())
    assert all(v >= 0 for v in doc["metrics"].values())


def test_dataset_flag_accepts_descriptor_file(tmp_path, raw_file):
    descriptor = tmp_path / "myworld.json"
    descriptor.write_text(json.dumps({"bbox": [0, 0, 1, 1], "fixed_length": 9}))
    out = tmp_path / "prep.jsonl"
    assert run_cli("preprocess", "--input", raw_file, "--output", out,
                   "--dataset", descriptor) == 0
    assert load_dataset(out).fixed_length == 9
