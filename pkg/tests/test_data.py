import numpy as np
import pytest

from ktrr.data import (
    Dataset2D,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_k2d1,
    read_dataset,
    save_dataset_csv,
    save_k2d1,
    unvectorize,
    vectorize,
)
from ktrr.errors import EmptyDataset, InvalidSpec, MissingFile, ParseError, ShapeMismatch


def write_manifest(tmp_path, matrices, labels=None, extra=""):
    lines = [extra] if extra else []
    for i, M in enumerate(matrices):
        name = f"s{i}.csv"
        np.savetxt(tmp_path / name, np.atleast_2d(M), delimiter=",")
        lines.append(name if labels is None else f"{name},{labels[i]}")
    path = tmp_path / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_load_two_labeled_samples(tmp_path):
    path = write_manifest(tmp_path, [np.eye(2), np.ones((2, 2))], labels=[0, 1])
    data = load_dataset(path)
    assert data.n == 2 and data.shape == (2, 2)
    assert data.labels.tolist() == [0, 1]
    np.testing.assert_array_equal(data.samples[1], np.ones((2, 2)))


def test_comments_and_unlabeled(tmp_path):
    path = write_manifest(tmp_path, [np.eye(2), np.eye(2)], extra="# a comment")
    assert load_dataset(path).labels is None


def test_partial_labels_dropped(tmp_path):
    np.savetxt(tmp_path / "a.csv", np.eye(2), delimiter=",")
    np.savetxt(tmp_path / "b.csv", np.eye(2), delimiter=",")
    (tmp_path / "m.txt").write_text("a.csv,1\nb.csv\n")
    assert load_dataset(tmp_path / "m.txt").labels is None


def test_shape_mismatch_reports_path(tmp_path):
    path = write_manifest(tmp_path, [np.eye(2), np.ones((2, 3))], labels=[0, 1])
    with pytest.raises(ShapeMismatch, match="s1.csv"):
        load_dataset(path)


def test_single_sample_is_empty(tmp_path):
    path = write_manifest(tmp_path, [np.eye(2)])
    with pytest.raises(EmptyDataset):
        load_dataset(path)


def test_missing_and_parse_errors(tmp_path):
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "nope.txt")
    (tmp_path / "m.txt").write_text("gone.csv,0\nalso.csv,1\n")
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "m.txt")
    np.savetxt(tmp_path / "a.csv", np.eye(2), delimiter=",")
    (tmp_path / "m2.txt").write_text("a.csv,x\na.csv,0\n")
    with pytest.raises(ParseError):
        load_dataset(tmp_path / "m2.txt")


def test_labels_remapped_contiguous():
    data = Dataset2D(np.zeros((4, 2, 2)), [5, 9, 5, 2])
    assert data.labels.tolist() == [1, 2, 1, 0]


def test_max_abs_scaling(tmp_path):
    path = write_manifest(tmp_path, [2 * np.eye(2), -4 * np.ones((2, 2))], labels=[0, 1])
    data = load_dataset(path, scale=True)
    assert np.abs(data.samples).max(axis=(1, 2)).tolist() == [1.0, 1.0]


def test_vectorize_column_major():
    assert vectorize([[1, 2], [3, 4]]).tolist() == [1, 3, 2, 4]
    assert not vectorize(np.zeros((3, 2))).any()


def test_vectorize_round_trip(rng):
    X = rng.standard_normal((4, 3))
    np.testing.assert_array_equal(unvectorize(vectorize(X), 4, 3), X)


def test_dataset_vectors_match_vectorize(random_data):
    V = random_data.vectors()
    for i in range(random_data.n):
        np.testing.assert_array_equal(V[:, i], vectorize(random_data.samples[i]))


def test_k2d1_round_trip_bit_exact(tmp_path, small_data):
    save_k2d1(small_data, tmp_path / "d.k2d1")
    back = load_k2d1(tmp_path / "d.k2d1")
    assert back.samples.tobytes() == small_data.samples.tobytes()
    np.testing.assert_array_equal(back.labels, small_data.labels)


def test_k2d1_layout(tmp_path):
    data = Dataset2D(np.arange(12, dtype=float).reshape(2, 2, 3), [0, 1])
    save_k2d1(data, tmp_path / "d.k2d1")
    raw = (tmp_path / "d.k2d1").read_bytes()
    assert raw[:4] == b"K2D1"
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [2, 2, 3]
    assert raw[16] == 1
    assert np.frombuffer(raw[17:25], "<i4").tolist() == [0, 1]
    assert np.frombuffer(raw[25:], "<f8").tolist() == list(range(12))


def test_k2d1_corrupt(tmp_path, small_data):
    save_k2d1(small_data, tmp_path / "d.k2d1")
    raw = (tmp_path / "d.k2d1").read_bytes()
    (tmp_path / "t.k2d1").write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        load_k2d1(tmp_path / "t.k2d1")


def test_csv_round_trip(tmp_path, small_data):
    manifest = save_dataset_csv(small_data, tmp_path / "csv")
    back = read_dataset(manifest)
    np.testing.assert_array_equal(back.samples, small_data.samples)
    np.testing.assert_array_equal(back.labels, small_data.labels)


def test_synthetic_rank_one():
    data = generate_synthetic(SyntheticSpec(2, 3, 4, 4, 1, 0.0, seed=0))
    assert data.n == 6
    for X in data.samples:
        assert np.linalg.matrix_rank(X) <= 1


def test_synthetic_deterministic():
    spec = SyntheticSpec(3, 5, 6, 5, 2, 0.1, seed=11)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert a.samples.tobytes() == b.samples.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_synthetic_exact_rank(d):
    data = generate_synthetic(SyntheticSpec(3, 4, 8, 6, d, 0.0, seed=d))
    for X in data.samples:
        s = np.linalg.svd(X, compute_uv=False)
        assert int(np.sum(s > 1e-10 * s[0])) == d


def test_synthetic_cluster_column_space():
    d = 2
    data = generate_synthetic(SyntheticSpec(3, 5, 9, 6, d, 0.0, seed=5))
    for c in range(3):
        stacked = np.hstack(data.samples[data.labels == c])
        s = np.linalg.svd(stacked, compute_uv=False)
        assert int(np.sum(s > 1e-10 * s[0])) <= d


@pytest.mark.parametrize("kwargs", [
    dict(clusters=1), dict(subspace_rank=0), dict(noise_sigma=-1.0), dict(subspace_rank=4),
])
def test_synthetic_invalid(kwargs):
    base = dict(clusters=2, samples_per_cluster=3, a=4, b=4, subspace_rank=1, noise_sigma=0.0, seed=0)
    with pytest.raises(InvalidSpec):
        generate_synthetic(SyntheticSpec(**{**base, **kwargs}))


def test_dataset_rejects_nan():
    X = np.zeros((2, 2, 2))
    X[0, 0, 0] = np.nan
    with pytest.raises(InvalidSpec):
        Dataset2D(X)
