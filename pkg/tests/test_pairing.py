import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiqa_opt.cluster import ClusterAssignment, cluster_all
from fiqa_opt.datamodel import DataError
from fiqa_opt.pairing import (
    cosine_similarity,
    expected_pair_count,
    sample_mated_pairs,
    write_pair_list,
)

from helpers import make_bundle, random_bundle


@pytest.mark.parametrize("a, b, expected", [
    ((3, 4), (3, 4), 1.0),
    ((1, 0), (0, 1), 0.0),
    ((1, 0), (-2, 0), -1.0),
])
def test_cosine_examples(a, b, expected):
    assert cosine_similarity(a, b) == expected


def test_cosine_errors():
    with pytest.raises(DataError):
        cosine_similarity((0, 0), (1, 0))
    with pytest.raises(DataError):
        cosine_similarity((1, 0), (1, 0, 0))


def _pinned(labels):
    labels = np.asarray(labels)
    k = labels.max() + 1
    return ClusterAssignment(labels, np.zeros((k, 2)), 0.0)


def test_singleton_contributes_nothing():
    bundle = make_bundle([[1, 0], [0, 1], [1, 1]], ["a", "b", "b"], [0.1, 0.2, 0.3])
    pairs = sample_mated_pairs(bundle, {"a": _pinned([0]), "b": _pinned([0, 1])}, seed=0)
    assert sorted(zip(pairs.anchors.tolist(), pairs.partners.tolist())) == [(1, 2), (2, 1)]


def test_five_singletons_clusters():
    rng = np.random.default_rng(0)
    bundle = make_bundle(rng.standard_normal((5, 3)), ["p"] * 5, rng.uniform(size=5))
    pairs = sample_mated_pairs(bundle, {"p": _pinned(range(5))}, seed=3)
    # every cluster has one member, so the pair set is forced: all ordered pairs
    assert len(pairs) == 5 * 4
    assert sorted(zip(pairs.anchors.tolist(), pairs.partners.tolist())) == \
        list(itertools.permutations(range(5), 2))


def test_full_clusters_give_n_times_19():
    rng = np.random.default_rng(4)
    identities = [f"p{k}" for k in range(3) for _ in range(25)]
    bundle = make_bundle(rng.standard_normal((75, 8)), identities, rng.uniform(size=75))
    assignments = cluster_all(bundle, 20, seed=1)
    pairs = sample_mated_pairs(bundle, assignments, seed=2)
    assert len(pairs) == 75 * 19


def test_missing_assignment():
    bundle = make_bundle([[1, 0], [0, 1]], ["a", "b"], [0.1, 0.2])
    with pytest.raises(DataError):
        sample_mated_pairs(bundle, {"a": _pinned([0])}, seed=0)


def test_uniform_partner_choice():
    rng = np.random.default_rng(0)
    bundle = make_bundle(rng.standard_normal((5, 3)), ["p"] * 5, rng.uniform(size=5))
    counts = np.zeros(5)
    for seed in range(2000):
        pairs = sample_mated_pairs(bundle, {"p": _pinned([0, 1, 1, 1, 1])}, seed=seed)
        counts += np.bincount(pairs.partners[pairs.anchors == 0], minlength=5)
    share = counts[1:] / counts.sum()
    assert np.all(np.abs(share - 0.25) < 0.03)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 8))
def test_pair_invariants(seed, c):
    bundle = random_bundle(seed, n_min=5, n_max=120, max_identities=8)
    assignments = cluster_all(bundle, c, seed)
    pairs = sample_mated_pairs(bundle, assignments, seed + 1)
    assert len(pairs) == expected_pair_count(assignments)
    assert len(pairs) == sum(
        len(a.labels) * (a.n_clusters - 1) for a in assignments.values() if a.n_clusters >= 2)
    ident = bundle.identity_of
    local = {}
    for identity, members in bundle.identity_index.items():
        for pos, i in enumerate(members):
            local[i] = assignments[identity].labels[pos]
    for a, p, s in zip(pairs.anchors, pairs.partners, pairs.similarities):
        assert a != p and ident[a] == ident[p] and local[a] != local[p]
        assert -1.0 <= s <= 1.0
        assert abs(s - cosine_similarity(bundle.vectors[a], bundle.vectors[p])) < 1e-12
    again = sample_mated_pairs(bundle, assignments, seed + 1)
    assert np.array_equal(again.partners, pairs.partners)
    participants = set(pairs.anchors.tolist()) | set(pairs.partners.tolist())
    assert set(pairs.per_image) == participants


def test_pair_dump(tmp_path):
    bundle = make_bundle([[1, 0], [0, 1]], ["p", "p"], [0.1, 0.2], ids=["x", "y"])
    pairs = sample_mated_pairs(bundle, {"p": _pinned([0, 1])}, seed=0)
    write_pair_list(tmp_path / "pairs.csv", bundle, pairs)
    lines = (tmp_path / "pairs.csv").read_text().splitlines()
    assert lines == ["anchor_id,partner_id,similarity", "x,y,0.0", "y,x,0.0"]
