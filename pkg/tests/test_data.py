import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jova.data import (
    DataError,
    InteractionMatrix,
    RawRating,
    Schema,
    binarize,
    filter_min_interactions,
    ingest,
    sparsity,
    split,
    stats,
)


def test_ingest_csv(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text("1,10,5\n1,11,3\n2,10,4\n")
    out = ingest(f)
    assert out.ratings == [RawRating("1", "10", 5.0), RawRating("1", "11", 3.0), RawRating("2", "10", 4.0)]
    assert out.malformed_lines == []


def test_ingest_counts_malformed(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text("1,10,5\n1,11,abc\n" + "2,10,4\n" * 200)
    out = ingest(f)
    assert out.malformed_lines == [2] and len(out.ratings) == 201


def test_ingest_too_many_malformed(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text("1,10,5\n1,11,abc\n2,10,4\n")
    with pytest.raises(DataError, match="line.*2"):
        ingest(f)


def test_ingest_movielens_line(tmp_path):
    f = tmp_path / "ratings.dat"
    f.write_text("1::1193::5::978300760\n")
    (r,) = ingest(f, Schema(format="movielens-dat")).ratings
    assert r == RawRating("1", "1193", 5.0)


def test_ingest_header_names_and_implicit(tmp_path):
    f = tmp_path / "pins.tsv"
    f.write_text("ts\tuser\titem\n1\ta\tx\n2\tb\ty\n")
    out = ingest(f, Schema(format="tsv", header=True, user_col="user", item_col="item", rating_col=None))
    assert out.ratings == [RawRating("a", "x", 1.0), RawRating("b", "y", 1.0)]


def test_ingest_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        ingest(tmp_path / "nope.csv")


def test_binarize_threshold_inclusive():
    rs = [RawRating("u", "a", 4.0), RawRating("u", "b", 3.9), RawRating("u", "a", 5.0)]
    assert binarize(rs, 4) == [("u", "a")]
    implicit = [RawRating("u", "a", 1.0), RawRating("v", "b", 1.0)]
    assert binarize(implicit, 1) == [("u", "a"), ("v", "b")]


def _pairs(user, n):
    return [(user, f"i{k}") for k in range(n)]


def test_filter_boundaries_and_idempotence():
    pairs = _pairs("a", 19) + _pairs("b", 20)
    kept = filter_min_interactions(pairs, 20)
    assert {u for u, _ in kept} == {"b"}
    assert filter_min_interactions(kept, 20) == kept
    with pytest.raises(DataError):
        filter_min_interactions(_pairs("a", 3), 20)


def test_split_exact_proportions():
    m = split(_pairs("u", 100), (0.8, 0.1, 0.1), np.random.default_rng(0))
    assert (m.counts("train"), m.counts("valid"), m.counts("test")) == (80, 10, 10)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.integers(0, 1000))
def test_split_is_a_partition(n, seed):
    pairs = [(f"u{k % 7}", f"i{k}") for k in range(n)]
    m = split(pairs, (0.8, 0.1, 0.1), np.random.default_rng(seed))
    assert m.n_interactions == n
    assert abs(m.counts("train") - 0.8 * n) <= 1 and abs(m.counts("valid") - 0.1 * n) <= 1
    got = sorted(zip((m.user_ids[u] for u in m.users), (m.item_ids[i] for i in m.items)))
    assert got == sorted(pairs)


def test_split_deterministic_and_validated():
    pairs = _pairs("u", 50)
    a = split(pairs, (0.8, 0.1, 0.1), np.random.default_rng(9))
    b = split(pairs, (0.8, 0.1, 0.1), np.random.default_rng(9))
    assert a.split.tobytes() == b.split.tobytes()
    with pytest.raises(ValueError):
        split(pairs, (0.5, 0.1, 0.1), np.random.default_rng(9))


def test_reindex_round_trip():
    pairs = [("x", "p"), ("y", "q"), ("x", "q")]
    m = split(pairs, (0.8, 0.1, 0.1), np.random.default_rng(0))
    for uid in ("x", "y"):
        assert m.user_ids[m.user_index[uid]] == uid
    for iid in ("p", "q"):
        assert m.item_ids[m.item_index[iid]] == iid


def test_pipeline_preserves_positive_count():
    rng = np.random.default_rng(0)
    ratings = [RawRating(f"u{u}", f"i{i}", float(rng.integers(1, 6))) for u in range(30) for i in range(40)]
    pos = filter_min_interactions(binarize(ratings, 4), 5)
    m = split(pos, (0.8, 0.1, 0.1), rng)
    assert m.counts("train") + m.counts("valid") + m.counts("test") == len(pos)
    assert min(np.bincount(m.users)) >= 5


@pytest.mark.parametrize("users, items, inter, expected", [
    (6027, 3062, 574026, 0.9689),
    (12705, 9245, 318314, 0.9973),
    (55187, 9911, 1500806, 0.9973),
    (1, 1, 1, 0.0),
])
def test_summary_table_sparsity(users, items, inter, expected):
    assert round(sparsity(users, items, inter), 4) == expected


def test_stats_single_cell():
    m = InteractionMatrix(["u"], ["i"], [0], [0], [0])
    s = stats(m)
    assert (s["users"], s["items"], s["interactions"], s["sparsity"]) == (1, 1, 1, 0.0)


def test_dataset_file_round_trip(tmp_path):
    m = split(_pairs("u", 30) + _pairs("v", 25), (0.8, 0.1, 0.1), np.random.default_rng(1))
    m.save(tmp_path / "a.npz")
    m.save(tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    back = InteractionMatrix.load(tmp_path / "a.npz")
    assert back.user_ids == m.user_ids and back.item_ids == m.item_ids
    assert back.split.tobytes() == m.split.tobytes()
    assert (back.train != m.train).nnz == 0
