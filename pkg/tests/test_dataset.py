import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from distilmvc.dataset import (
    BatchPlan,
    MultiViewDataset,
    SyntheticSpec,
    batch_iter,
    load_dataset,
    normalize_minmax,
    save_dataset,
    synth_generate,
)
from distilmvc.errors import ConfigError, LoadError, ParseError, RangeError, ShapeError, ValidationError
from distilmvc.metrics import clustering_accuracy
from distilmvc.pseudolabel import kmeans


def _write(root, views, labels=None, k=2):
    root.mkdir(exist_ok=True)
    meta = {
        "name": "t",
        "num_views": len(views),
        "num_samples": len(views[0]),
        "num_clusters": k,
        "view_dims": [len(v[0]) for v in views],
        "has_labels": labels is not None,
    }
    (root / "meta.json").write_text(json.dumps(meta))
    for i, v in enumerate(views):
        (root / f"view_{i}.csv").write_text("\n".join(",".join(map(str, r)) for r in v) + "\n")
    if labels is not None:
        (root / "labels.csv").write_text("\n".join(map(str, labels)) + "\n")


class TestLoad:
    def test_two_views_roundtrip(self, tmp_path):
        a = [[1, 2, 3], [4, 5, 6], [7, 8, 9], [0, 1, 2]]
        b = [[1, 2], [3, 4], [5, 6], [7, 8]]
        _write(tmp_path / "d", [a, b], labels=[0, 0, 1, 1])
        ds = load_dataset(tmp_path / "d")
        assert ds.num_views == 2 and ds.num_samples == 4 and ds.k == 2
        np.testing.assert_array_equal(ds.views[0], a)
        np.testing.assert_array_equal(ds.views[1], b)
        np.testing.assert_array_equal(ds.labels, [0, 0, 1, 1])

    def test_missing_view_names_file(self, tmp_path):
        _write(tmp_path / "d", [[[1, 2]] * 4, [[1]] * 4])
        (tmp_path / "d" / "view_1.csv").unlink()
        with pytest.raises(LoadError, match="view_1.csv"):
            load_dataset(tmp_path / "d")

    def test_row_mismatch(self, tmp_path):
        _write(tmp_path / "d", [[[1, 2]] * 4, [[1]] * 5])
        with pytest.raises(ShapeError):
            load_dataset(tmp_path / "d")

    def test_non_numeric_cell_reports_position(self, tmp_path):
        _write(tmp_path / "d", [[[1, 2], [3, "x"], [1, 1], [2, 2]], [[1]] * 4])
        with pytest.raises(ParseError, match="row 1, column 1"):
            load_dataset(tmp_path / "d")

    def test_label_out_of_range(self, tmp_path):
        _write(tmp_path / "d", [[[1.0]] * 4, [[2.0]] * 4], labels=[0, 1, 2, 0], k=2)
        with pytest.raises(RangeError):
            load_dataset(tmp_path / "d")

    def test_save_load_exact(self, tmp_path, rng):
        ds = MultiViewDataset([rng.standard_normal((7, 3)), rng.random((7, 5)) * 1e-7], k=3, labels=[0, 1, 2, 0, 1, 2, 0])
        back = load_dataset(save_dataset(ds, tmp_path / "d"))
        for a, b in zip(ds.views, back.views):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(ds.labels, back.labels)

    def test_single_view_rejected(self):
        with pytest.raises(ValidationError):
            MultiViewDataset([np.zeros((3, 2))], k=2)

    def test_nan_rejected(self):
        bad = np.zeros((3, 2))
        bad[1, 1] = np.nan
        with pytest.raises(ValidationError):
            MultiViewDataset([bad, np.zeros((3, 2))], k=2)


class TestNormalize:
    def _one(self, col):
        ds = MultiViewDataset([np.array(col, float)[:, None], np.zeros((len(col), 1))], k=2)
        return normalize_minmax(ds).views[0][:, 0]

    def test_linear_column(self):
        np.testing.assert_allclose(self._one([2, 4, 6]), [0, 0.5, 1])

    def test_constant_column(self):
        np.testing.assert_array_equal(self._one([5, 5, 5]), [0, 0, 0])

    def test_unit_column_unchanged(self):
        np.testing.assert_array_equal(self._one([0, 0.25, 1]), [0, 0.25, 1])

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 4)), elements=st.floats(-1e6, 1e6)))
    def test_idempotent_and_bounded(self, x):
        ds = MultiViewDataset([x, x[:, :1]], k=2)
        once = normalize_minmax(ds)
        twice = normalize_minmax(once)
        for a, b in zip(once.views, twice.views):
            assert a.min() >= 0 and a.max() <= 1
            np.testing.assert_allclose(a, b, atol=1e-12)


class TestSynth:
    spec = SyntheticSpec(n_per_cluster=100, k=3, view_dims=(10, 12), cluster_separation=6, noise_scale=0.1, seed=0)

    def test_deterministic(self):
        a, b = synth_generate(self.spec), synth_generate(self.spec)
        for x, y in zip(a.views, b.views):
            assert np.array_equal(x, y)
        assert np.array_equal(a.labels, b.labels)

    def test_balanced_labels(self):
        assert np.bincount(synth_generate(self.spec).labels).tolist() == [100, 100, 100]

    def test_raw_kmeans_separable(self):
        ds = synth_generate(self.spec)
        res = kmeans(np.concatenate(ds.views, axis=1), 3, seed=0)
        assert clustering_accuracy(res.assignments, ds.labels, 3) >= 0.99

    def test_invalid_spec(self):
        with pytest.raises(ValidationError):
            synth_generate(SyntheticSpec(k=1))
        with pytest.raises(ValidationError):
            synth_generate(SyntheticSpec(cluster_separation=0))

    @settings(max_examples=15, deadline=None)
    @given(st.integers(2, 6), st.integers(2, 10), st.integers(0, 2**32))
    def test_histogram_uniform(self, k, n, seed):
        ds = synth_generate(SyntheticSpec(n_per_cluster=n, k=k, view_dims=(3, 2), seed=seed))
        assert np.bincount(ds.labels, minlength=k).tolist() == [n] * k


class TestBatches:
    def test_partition(self):
        batches = batch_iter(4, BatchPlan(2, 7), epoch=0)
        assert len(batches) == 2
        assert sorted(np.concatenate(batches).tolist()) == [0, 1, 2, 3]

    def test_deterministic(self):
        a = batch_iter(50, BatchPlan(8, 3), epoch=4)
        b = batch_iter(50, BatchPlan(8, 3), epoch=4)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_epoch_changes_order(self):
        a = np.concatenate(batch_iter(50, BatchPlan(8, 3), epoch=1))
        b = np.concatenate(batch_iter(50, BatchPlan(8, 3), epoch=2))
        assert not np.array_equal(a, b)

    def test_drop_last(self):
        batches = batch_iter(5, BatchPlan(2, 0, drop_last=True), epoch=0)
        assert len(batches) == 2 and sum(map(len, batches)) == 4

    def test_small_batch_rejected(self):
        with pytest.raises(ConfigError):
            batch_iter(5, BatchPlan(1, 0), epoch=0)

    @given(st.integers(2, 300), st.integers(2, 64), st.integers(0, 2**63), st.integers(0, 1000))
    def test_visits_each_index_once(self, n, bs, seed, epoch):
        batches = batch_iter(n, BatchPlan(bs, seed), epoch)
        flat = np.concatenate(batches)
        assert sorted(flat.tolist()) == list(range(n))
        assert all(len(b) >= 2 for b in batches)
