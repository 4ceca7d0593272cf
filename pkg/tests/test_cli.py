import json
import subprocess
import sys

import numpy as np
import pytest

from fiqa_opt.cli import main
from fiqa_opt.datamodel import load_quality_scores
from fiqa_opt.hashing import file_digest

from helpers import run_chain


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--identities", "15", "--images-per-identity", "12",
                 "--dimension", "16", "--out", str(root / "d")]) == 0
    return root / "d"


def test_synth_writes_files_and_manifest(synth_dir):
    assert sorted(p.name for p in synth_dir.iterdir()) == \
        ["baseline.csv", "embeddings.femb", "truth.csv"]
    manifest = json.loads(synth_dir.with_name("d.manifest.json").read_text())
    assert manifest["subcommand"] == "synth"
    assert manifest["config"]["identities"] == 15
    assert set(manifest) == {"subcommand", "config", "inputs", "outputs", "duration_seconds"}


def test_theta_zero_reproduces_input(synth_dir, tmp_path):
    out = tmp_path / "opt.csv"
    assert main(["optimize", "--embeddings", str(synth_dir / "embeddings.femb"),
                 "--scores", str(synth_dir / "baseline.csv"), "--theta", "0",
                 "--out", str(out)]) == 0
    assert out.read_bytes() == (synth_dir / "baseline.csv").read_bytes()
    sidecar = json.loads((tmp_path / "opt.csv.sidecar.json").read_text())
    assert sidecar["theta"] == 0.0 and sidecar["N"] == 180
    assert len(sidecar["L_per_repetition"]) == 10


def test_optimize_defaults_and_digests(synth_dir, tmp_path):
    out = tmp_path / "opt.csv"
    emb, scores = synth_dir / "embeddings.femb", synth_dir / "baseline.csv"
    assert main(["optimize", "--embeddings", str(emb), "--scores", str(scores),
                 "--scatter", str(tmp_path / "scatter.csv"), "--out", str(out)]) == 0
    manifest = json.loads((tmp_path / "opt.csv.manifest.json").read_text())
    assert manifest["config"] == {"clusters": 20, "theta": 0.001, "repeats": 10, "seed": 42}
    for path, digest in manifest["inputs"].items():
        assert file_digest(path) == digest
    header = (tmp_path / "scatter.csv").read_text().splitlines()[0]
    assert header == "image_id,baseline_rank,mean_opt_index"


def test_missing_scores_is_usage_error(synth_dir, capsys):
    code = main(["optimize", "--embeddings", str(synth_dir / "embeddings.femb"), "--out", "x"])
    assert code == 1
    assert "--scores" in capsys.readouterr().err


def test_validation_and_io_exit_codes(synth_dir, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("image_id,score\nnobody,0.5\n")
    assert main(["optimize", "--embeddings", str(synth_dir / "embeddings.femb"),
                 "--scores", str(bad), "--out", str(tmp_path / "o.csv")]) == 1
    assert main(["optimize", "--embeddings", str(tmp_path / "missing.femb"),
                 "--scores", str(bad), "--out", str(tmp_path / "o.csv")]) == 2


def test_stdout_output_is_clean_csv(synth_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "fiqa_opt", "optimize", "--embeddings",
         str(synth_dir / "embeddings.femb"), "--scores", str(synth_dir / "baseline.csv"),
         "--repeats", "2", "--out", "-"],
        capture_output=True, text=True, check=True)
    lines = proc.stdout.splitlines()
    assert lines[0] == "image_id,score" and len(lines) == 181
    assert "optimized" in proc.stderr


def test_truth_beats_shuffled_scores(synth_dir, tmp_path):
    truth = load_quality_scores(synth_dir / "truth.csv")
    rng = np.random.default_rng(0)
    shuffled = tmp_path / "shuffled.csv"
    values = rng.permutation(list(truth.values()))
    shuffled.write_text("image_id,score\n" + "".join(
        f"{k},{v!r}\n" for k, v in zip(truth, values.tolist())))
    aucs = {}
    for name, path in (("truth", synth_dir / "truth.csv"), ("shuffled", shuffled)):
        out = tmp_path / f"erc_{name}.csv"
        assert main(["evaluate", "--embeddings", str(synth_dir / "embeddings.femb"),
                     "--scores", str(path), "--fmr-target", "0.01", "--out", str(out)]) == 0
        aucs[name] = json.loads((tmp_path / f"erc_{name}.csv.summary.json").read_text())["auc"]
    assert aucs["truth"] < aucs["shuffled"]


def test_chain_is_deterministic(tmp_path):
    first = run_chain(tmp_path / "a")
    second = run_chain(tmp_path / "b", threads=3)
    assert first == second
    summary = json.loads(first["erc.csv.summary.json"])
    assert np.isfinite(summary["auc"])
    assert set(summary) == {"fmr_target", "threshold", "auc", "auc_x1000", "genuine_count",
                            "impostor_count", "truncated_at"}


def test_inputs_are_not_modified(synth_dir, tmp_path):
    before = {p.name: p.read_bytes() for p in synth_dir.iterdir()}
    main(["optimize", "--embeddings", str(synth_dir / "embeddings.femb"),
          "--scores", str(synth_dir / "baseline.csv"), "--repeats", "1",
          "--out", str(tmp_path / "o.csv")])
    assert {p.name: p.read_bytes() for p in synth_dir.iterdir()} == before
