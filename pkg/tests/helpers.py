"""Fixture builders shared by the test modules."""

import numpy as np

from fiqa_opt.datamodel import EmbeddingRecord, QualityTable, validate_bundle


def make_bundle(vectors, identities, scores, ids=None):
    vectors = np.asarray(vectors, dtype=np.float32)
    if ids is None:
        ids = [f"img{i:04d}" for i in range(len(vectors))]
    records = [EmbeddingRecord(i, k, v) for i, k, v in zip(ids, identities, vectors)]
    return validate_bundle(records, QualityTable(zip(ids, scores)))


def random_bundle(seed, n_min=10, n_max=500, dim=None, max_identities=None,
                  tie_scores=False):
    """Random bundle with uneven identity sizes, singletons included."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_min, n_max + 1))
    dim = dim or int(rng.integers(2, 17))
    k_max = max_identities or max(2, n // 3)
    k = int(rng.integers(2, max(3, k_max + 1)))
    identities = [f"p{j}" for j in rng.integers(0, k, size=n)]
    identities[0], identities[-1] = "p0", "p1"
    vectors = rng.standard_normal((n, dim))
    if tie_scores:
        scores = rng.integers(0, 5, size=n) / 4.0
    else:
        scores = rng.uniform(-1, 2, size=n)
    return make_bundle(vectors, identities, scores)


CHAIN_FILES = ("data/embeddings.femb", "data/truth.csv", "data/baseline.csv", "opt.csv",
               "opt.csv.sidecar.json", "model.json", "model.json.loss.csv", "pred.csv",
               "erc.csv", "erc.csv.summary.json")


def run_chain(root, seed=42, threads=1):
    """Run synth, optimize, train, predict and evaluate in ``root``; return output bytes."""
    from fiqa_opt.cli import main

    root = str(root)
    d = f"{root}/data"
    steps = [
        ["synth", "--identities", "12", "--images-per-identity", "4:10", "--dimension", "16",
         "--out", d],
        ["optimize", "--embeddings", f"{d}/embeddings.femb", "--scores", f"{d}/baseline.csv",
         "--clusters", "4", "--theta", "0.1", "--repeats", "4", "--out", f"{root}/opt.csv"],
        ["train", "--embeddings", f"{d}/embeddings.femb", "--scores", f"{root}/opt.csv",
         "--epochs", "30", "--hidden-width", "8", "--out", f"{root}/model.json"],
        ["predict", "--model", f"{root}/model.json", "--embeddings", f"{d}/embeddings.femb",
         "--out", f"{root}/pred.csv"],
        ["evaluate", "--embeddings", f"{d}/embeddings.femb", "--scores", f"{root}/pred.csv",
         "--fmr-target", "0.01", "--out", f"{root}/erc.csv"],
    ]
    for argv in steps:
        code = main(argv + ["--seed", str(seed), "--threads", str(threads)])
        if code != 0:
            raise RuntimeError(f"{argv[0]} exited with {code}")
    return {name: open(f"{root}/{name}", "rb").read() for name in CHAIN_FILES}
