import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fiqa_opt.datamodel import (
    DataError,
    EmbeddingRecord,
    OptimConfig,
    QualityTable,
    load_embeddings,
    load_quality_scores,
    validate_bundle,
    write_embeddings,
    write_quality_scores,
)


def _records(n=3, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return [
        EmbeddingRecord(f"img{i}", f"id{i % 2}", rng.standard_normal(dim))
        for i in range(n)
    ]


@pytest.mark.parametrize("suffix", [".femb", ".csv"])
def test_round_trip(tmp_path, suffix):
    records = _records()
    path = tmp_path / f"emb{suffix}"
    write_embeddings(path, records)
    assert load_embeddings(path) == records


def test_empty_round_trip(tmp_path):
    path = tmp_path / "empty.femb"
    write_embeddings(path, [])
    assert load_embeddings(path) == []
    magic, version, count, _ = struct.unpack_from("<4sIQI", path.read_bytes())
    assert (magic, version, count) == (b"FEMB", 1, 0)


def test_femb_layout(tmp_path):
    rec = EmbeddingRecord("a", "p", [1.0, -2.5])
    path = tmp_path / "one.femb"
    write_embeddings(path, [rec])
    expected = (
        b"FEMB" + struct.pack("<IQI", 1, 1, 2)
        + struct.pack("<H", 1) + b"a" + struct.pack("<H", 1) + b"p"
        + struct.pack("<2f", 1.0, -2.5)
    )
    assert path.read_bytes() == expected


def test_mixed_dimensions_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("image_id,identity_id,v0,v1,v2,v3\na,p,1,2,3,4\nb,p,1,2,3,4,5\n")
    with pytest.raises(DataError, match="dimension"):
        load_embeddings(path)
    with pytest.raises(DataError, match="mixed dimensions"):
        write_embeddings(tmp_path / "x.femb", [_records(dim=4)[0], _records(dim=5)[0]])


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.femb"
    path.write_bytes(b"FEMX" + bytes(16))
    with pytest.raises(DataError, match="magic"):
        load_embeddings(path)


def test_truncated_femb(tmp_path):
    path = tmp_path / "t.femb"
    write_embeddings(path, _records())
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(DataError, match="truncated"):
        load_embeddings(path)


def test_non_finite_and_duplicates(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("image_id,identity_id,v0,v1\na,p,1,nan\n")
    with pytest.raises(DataError, match="non-finite"):
        load_embeddings(path)
    path.write_text("image_id,identity_id,v0,v1\na,p,1,2\na,q,1,2\n")
    with pytest.raises(DataError, match="duplicate"):
        load_embeddings(path)


def test_quality_scores(tmp_path):
    path = tmp_path / "q.csv"
    path.write_text("image_id,score\na,0.5\nb,0.2\n")
    assert dict(load_quality_scores(path)) == {"a": 0.5, "b": 0.2}
    path.write_text("image_id,score\na,0.5\na,0.7\n")
    with pytest.raises(DataError, match="duplicate"):
        load_quality_scores(path)
    path.write_text("image_id,score\na,NaN\n")
    with pytest.raises(DataError, match="non-finite"):
        load_quality_scores(path)
    path.write_text("image_id,score\na,high\n")
    with pytest.raises(DataError, match="unparseable"):
        load_quality_scores(path)


def test_quality_round_trip_is_exact(tmp_path):
    values = np.random.default_rng(1).standard_normal(50).tolist() + [0.1, 1e-300, -0.0]
    table = QualityTable((f"i{k}", v) for k, v in enumerate(values))
    write_quality_scores(tmp_path / "q.csv", table)
    back = load_quality_scores(tmp_path / "q.csv")
    assert [back[k] for k in table] == [table[k] for k in table]


def test_validate_bundle():
    recs = [EmbeddingRecord("a", "id1", [1, 0]), EmbeddingRecord("b", "id1", [0, 1]),
            EmbeddingRecord("c", "id2", [1, 1])]
    bundle = validate_bundle(recs, QualityTable({"a": 1, "b": 2, "c": 3}))
    assert bundle.n_images == 3
    assert bundle.identity_index == {"id1": (0, 1), "id2": (2,)}
    assert bundle.n_identities == 2


def test_validate_bundle_missing_id():
    recs = [EmbeddingRecord("a", "p", [1, 0]), EmbeddingRecord("b", "p", [0, 1])]
    with pytest.raises(DataError, match="b"):
        validate_bundle(recs, QualityTable({"a": 1.0}))


def test_validate_bundle_zero_norm():
    recs = [EmbeddingRecord("a", "p", [0, 0])]
    with pytest.raises(DataError, match="zero-norm"):
        validate_bundle(recs, QualityTable({"a": 1.0}))


def test_optim_config_defaults_and_domain():
    cfg = OptimConfig()
    assert (cfg.clusters, cfg.theta, cfg.repeats) == (20, 0.001, 10)
    with pytest.raises(DataError):
        OptimConfig(theta=1.5)
    with pytest.raises(DataError):
        OptimConfig(theta=-0.1)
    with pytest.raises(DataError):
        OptimConfig(clusters=1)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=1, max_size=30),
    st.integers(2, 6),
)
def test_bundle_partitions_indices(layout, dim):
    recs = [EmbeddingRecord(f"i{n}", f"p{k}", np.arange(dim) + n + 1.0)
            for n, (k, _) in enumerate(layout)]
    qualities = QualityTable((r.image_id, float(n)) for n, r in enumerate(recs))
    bundle = validate_bundle(recs, qualities)
    flat = sorted(i for members in bundle.identity_index.values() for i in members)
    assert flat == list(range(len(recs)))
    assert sum(len(m) for m in bundle.identity_index.values()) == bundle.n_images
    with pytest.raises(DataError):
        validate_bundle(recs[1:], qualities)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(width=32, allow_nan=False, allow_infinity=False),
                         min_size=3, max_size=3), min_size=0, max_size=8))
def test_femb_round_trip_bit_exact(tmp_path_factory, vectors):
    recs = [EmbeddingRecord(f"i{n}", "p", v) for n, v in enumerate(vectors)]
    path = tmp_path_factory.mktemp("femb") / "x.femb"
    write_embeddings(path, recs)
    assert load_embeddings(path) == recs
