import csv
import json

import numpy as np
import pytest

from apclust import formats
from apclust.cli import main
from apclust.codebook import Centroid, CentroidSet
from apclust.costmodel import CostModelParams, ffn_neuron_count


@pytest.fixture(autouse=True)
def no_thread_env(monkeypatch):
    monkeypatch.delenv("APC_THREADS", raising=False)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    rc = main(["generate", "--out", str(d / "s"), "--n-prototypes", "4", "--dim", "48",
               "--n-rows", "240", "--proto-density", "0.5", "--flip-noise", "0.02", "--seed", "3"])
    assert rc == 0
    return d / "s"


def run_json(capsys, argv):
    rc = main(argv)
    out = capsys.readouterr().out
    return rc, (json.loads(out) if rc == 0 and out.strip() else None)


def test_generate_writes_three_files_deterministically(dataset, tmp_path):
    files = [dataset.with_name("s.apcf"), dataset.with_name("s.planted.apcc"),
             dataset.with_name("s.manifest.json")]
    assert all(f.exists() for f in files)
    assert main(["generate", "--out", str(tmp_path / "s"), "--n-prototypes", "4", "--dim", "48",
                 "--n-rows", "240", "--proto-density", "0.5", "--flip-noise", "0.02", "--seed", "3"]) == 0
    for f in files:
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()
    manifest = formats.DatasetManifest.read(files[2])
    assert (manifest.dim, manifest.n_rows) == (48, 240)


def test_generate_rejects_bad_noise(tmp_path):
    assert main(["generate", "--out", str(tmp_path / "x"), "--flip-noise", "0.6"]) == 2


def test_cluster_single_cluster(dataset, tmp_path, capsys):
    rc, report = run_json(capsys, ["cluster", "--input", str(dataset.with_name("s.apcf")), "--k", "1",
                                   "--out-codebook", str(tmp_path / "c.apcc")])
    assert rc == 0
    assert report["cluster_sizes"] == [240]
    assert formats.read_codebook(tmp_path / "c.apcc").k == 1


@pytest.mark.parametrize("algorithm", ["awc", "bmf", "brbk"])
def test_cluster_is_repeatable(dataset, tmp_path, algorithm):
    outs = []
    for i in range(2):
        cb, rep = tmp_path / f"c{i}.apcc", tmp_path / f"r{i}.json"
        assert main(["cluster", "--input", str(dataset.with_name("s.apcf")), "--k", "4",
                     "--algorithm", algorithm, "--out-codebook", str(cb), "--out-report", str(rep)]) == 0
        outs.append((cb.read_bytes(), rep.read_bytes()))
    assert outs[0] == outs[1]


def test_cluster_trace(dataset, tmp_path):
    trace = tmp_path / "t.csv"
    assert main(["cluster", "--input", str(dataset.with_name("s.apcf")), "--k", "4",
                 "--out-codebook", str(tmp_path / "c.apcc"), "--out-report", str(tmp_path / "r.json"),
                 "--trace", str(trace)]) == 0
    rows = list(csv.DictReader(trace.open()))
    assert rows[0]["reassigned"] == "240"
    assert [int(r["iter"]) for r in rows] == list(range(1, len(rows) + 1))


def test_cluster_usage_and_io_errors(dataset, tmp_path):
    assert main(["cluster", "--input", str(dataset.with_name("s.apcf")), "--k", "241",
                 "--out-codebook", str(tmp_path / "c.apcc")]) == 2
    assert main(["cluster", "--input", str(tmp_path / "missing.apcf"), "--k", "2",
                 "--out-codebook", str(tmp_path / "c.apcc")]) == 1
    (tmp_path / "bad.apcf").write_bytes(b"APCF\x01")
    assert main(["cluster", "--input", str(tmp_path / "bad.apcf"), "--k", "2",
                 "--out-codebook", str(tmp_path / "c.apcc")]) == 1
    assert main(["cluster", "--k", "2"]) == 2


def test_eval_reproduces_training_precision_on_planted_data(dataset, tmp_path, capsys):
    data = str(dataset.with_name("s.apcf"))
    rc, trained = run_json(capsys, ["cluster", "--input", data, "--k", "4", "--density", "0.5",
                                    "--out-codebook", str(tmp_path / "c.apcc")])
    assert rc == 0
    rc, evaluated = run_json(capsys, ["eval", "--input", data, "--codebook", str(tmp_path / "c.apcc")])
    assert rc == 0
    assert evaluated["precision"] == trained["precision"]


def test_eval_empty_codebook_gives_zero_precision(dataset, tmp_path, capsys):
    empty = Centroid(np.array([], dtype=np.int64), np.array([], dtype=np.float32))
    formats.write_codebook(CentroidSet(48, 0.0, [empty]), tmp_path / "z.apcc")
    rc, report = run_json(capsys, ["eval", "--input", str(dataset.with_name("s.apcf")),
                                   "--codebook", str(tmp_path / "z.apcc")])
    assert rc == 0
    assert report["precision"] == 0.0
    assert report["error_count"] == report["total_active"]


def test_eval_dimension_mismatch(dataset, tmp_path):
    formats.write_codebook(CentroidSet(50, 0.5, [Centroid.from_indices([1])]), tmp_path / "w.apcc")
    assert main(["eval", "--input", str(dataset.with_name("s.apcf")),
                 "--codebook", str(tmp_path / "w.apcc")]) == 2


def test_sweep_rows_and_overwrite(dataset, tmp_path):
    out = tmp_path / "sweep.csv"
    argv = ["sweep", "--input", str(dataset.with_name("s.apcf")), "--algorithms", "awc,bmf",
            "--k-values", "2,4", "--densities", "0.5", "--out", str(out),
            "--codebook-dir", str(tmp_path / "cb")]
    assert main(argv) == 0
    first = out.read_bytes()
    rows = list(csv.DictReader(out.open()))
    assert [(r["algorithm"], r["k"]) for r in rows] == [("awc", "2"), ("awc", "4"), ("bmf", "2"), ("bmf", "4")]
    assert all(r["error"] == "" for r in rows)
    assert len(list((tmp_path / "cb").iterdir())) == 4
    assert main(argv) == 0
    assert out.read_bytes() == first
    timing = list(csv.DictReader(open(str(out) + ".timing.csv")))
    assert len(timing) == 4 and all(float(t["wall_time_s"]) >= 0 for t in timing)


def test_compare(dataset, tmp_path):
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--input", str(dataset.with_name("s.apcf")), "--k", "4",
                 "--seeds", "0,1", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 6


def test_cost_defaults(capsys):
    rc, out = run_json(capsys, ["cost"])
    assert rc == 0
    assert out["n_ffn_3sf"] == 4.67e9
    assert out["k"] == 6144
    assert out["gain"] == pytest.approx(7.6e5, rel=0.005)


def test_cost_breakeven_and_scaling(capsys):
    n = ffn_neuron_count(CostModelParams())
    _, out = run_json(capsys, ["cost", "--clusters-per-sublayer", repr(n / 3)])
    assert out["gain"] == pytest.approx(1.0)
    _, base = run_json(capsys, ["cost"])
    _, doubled = run_json(capsys, ["cost", "--clusters-per-sublayer", "4096"])
    assert doubled["gain"] == pytest.approx(base["gain"] / 2)
    assert main(["cost", "--ffn-fraction", "1.5"]) == 2


def test_config_file_supplies_defaults(tmp_path, capsys):
    cfg = tmp_path / "cost.cfg"
    cfg.write_text("# halve the model\ntotal-params = 3.5e9\n")
    _, out = run_json(capsys, ["cost", "--config", str(cfg)])
    _, base = run_json(capsys, ["cost"])
    assert out["gain"] == pytest.approx(base["gain"] / 2)
    # explicit flags still win over the file
    _, flag = run_json(capsys, ["cost", "--config", str(cfg), "--total-params", "7e9"])
    assert flag["gain"] == base["gain"]
    cfg.write_text("bogus = 1\n")
    assert main(["cost", "--config", str(cfg)]) == 2


def test_thread_env_override(dataset, tmp_path, monkeypatch):
    outs = []
    for env in ("1", "4"):
        monkeypatch.setenv("APC_THREADS", env)
        cb = tmp_path / f"c{env}.apcc"
        assert main(["cluster", "--input", str(dataset.with_name("s.apcf")), "--k", "4",
                     "--out-codebook", str(cb), "--out-report", str(tmp_path / "r.json")]) == 0
        outs.append(cb.read_bytes())
    assert outs[0] == outs[1]
    monkeypatch.setenv("APC_THREADS", "zero")
    assert main(["cluster", "--input", str(dataset.with_name("s.apcf")), "--k", "4",
                 "--out-codebook", str(tmp_path / "c.apcc")]) == 2
