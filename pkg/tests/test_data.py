import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quatfm.data import (
    Batch,
    DataError,
    Dataset,
    PlantedFM,
    SparseInstance,
    batches,
    generate_synthetic,
    load_libsvm,
    parse_libsvm,
    save_libsvm,
    serialize_libsvm,
    sigmoid,
    split_dataset,
)


def brute_fm_score(teacher: PlantedFM, inst: SparseInstance) -> float:
    """Explicit double loop over feature pairs."""
    total = teacher.w0
    for i, x in zip(inst.indices, inst.values):
        total += teacher.w[i] * x
    for a in range(inst.nnz):
        for b in range(a + 1, inst.nnz):
            i, j = inst.indices[a], inst.indices[b]
            total += float(np.dot(teacher.V[i], teacher.V[j])) * inst.values[a] * inst.values[b]
    return total


def make_ds(count, n=20, seed=0):
    rng = np.random.default_rng(seed)
    insts = []
    for _ in range(count):
        idx = np.sort(rng.choice(n, size=3, replace=False))
        insts.append(SparseInstance(tuple(idx), (1.0, 1.0, 1.0), int(rng.integers(2))))
    return Dataset(tuple(insts), n)


class TestSparseInstance:
    def test_rejects_unsorted(self):
        with pytest.raises(DataError):
            SparseInstance((3, 1), (1.0, 1.0), 1)

    def test_rejects_duplicates(self):
        with pytest.raises(DataError):
            SparseInstance((1, 1), (1.0, 1.0), 1)

    def test_rejects_label(self):
        with pytest.raises(DataError):
            SparseInstance((1,), (1.0,), 2)

    def test_rejects_nonfinite(self):
        with pytest.raises(DataError):
            SparseInstance((1,), (float("nan"),), 0)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            SparseInstance((1, 2), (1.0,), 0)

    def test_dataset_index_bound(self):
        with pytest.raises(DataError):
            Dataset((SparseInstance((5,), (1.0,), 0),), n=5)


class TestParse:
    def test_basic(self):
        ds = parse_libsvm("1 3:1.0 7:0.5\n")
        inst = ds[0]
        assert inst.label == 1 and inst.indices == (3, 7) and inst.values == (1.0, 0.5)
        assert ds.n == 8

    def test_single(self):
        ds = parse_libsvm("0 0:1")
        assert ds[0] == SparseInstance((0,), (1.0,), 0)

    def test_non_binary_label(self):
        with pytest.raises(DataError, match="line 1"):
            parse_libsvm("2 1:1")

    def test_duplicate_index(self):
        with pytest.raises(DataError, match="duplicate"):
            parse_libsvm("1 2:1 2:3")

    def test_malformed_reports_line(self):
        with pytest.raises(DataError, match="line 2"):
            parse_libsvm("1 1:1\n0 oops\n")

    def test_unsorted_input_is_sorted(self):
        assert parse_libsvm("1 7:1 3:2")[0].indices == (3, 7)

    def test_header_declares_n(self):
        ds = parse_libsvm("#n=50\n1 3:1\n")
        assert ds.n == 50

    def test_header_too_small(self):
        with pytest.raises(DataError):
            parse_libsvm("#n=2\n1 3:1\n")

    def test_explicit_n_overrides(self):
        assert parse_libsvm("#n=50\n1 3:1\n", n=10).n == 10

    def test_stream(self):
        assert len(parse_libsvm(io.StringIO("1 0:1\n0 1:1\n"))) == 2

    def test_empty_feature_list(self):
        ds = parse_libsvm("#n=3\n1\n")
        assert ds[0].nnz == 0

    def test_round_trip(self, tmp_path):
        text = "#n=12\n1 3:1.0 7:0.5\n0 0:1.0\n1 2:-1.25 11:3.0\n"
        assert serialize_libsvm(parse_libsvm(text)) == text
        path = tmp_path / "d.libsvm"
        save_libsvm(parse_libsvm(text), path)
        assert serialize_libsvm(load_libsvm(path)) == text

    @settings(max_examples=30)
    @given(
        st.lists(
            st.tuples(
                st.integers(0, 1),
                st.dictionaries(st.integers(0, 40), st.floats(-5, 5, allow_nan=False), max_size=6),
            ),
            min_size=1,
            max_size=10,
        )
    )
    def test_round_trip_property(self, rows):
        insts = [SparseInstance(tuple(sorted(f)), tuple(f[k] for k in sorted(f)), y) for y, f in rows]
        text = serialize_libsvm(Dataset(tuple(insts), 41))
        assert serialize_libsvm(parse_libsvm(text)) == text


class TestSplit:
    def test_ratio_sizes(self):
        parts = split_dataset(make_ds(10), (0.8, 0.1, 0.1), seed=1)
        assert [len(p) for p in parts] == [8, 1, 1]

    def test_deterministic(self):
        ds = make_ds(50)
        a = split_dataset(ds, seed=3)
        b = split_dataset(ds, seed=3)
        assert all(x.instances == y.instances for x, y in zip(a, b))

    def test_bad_ratios(self):
        with pytest.raises(DataError):
            split_dataset(make_ds(10), (0.5, 0.5, 0.5))

    def test_empty(self):
        with pytest.raises(DataError):
            split_dataset(Dataset((), 5))

    @pytest.mark.parametrize("count", [3, 17, 100, 62500])
    def test_partition(self, count):
        ds = make_ds(count) if count < 1000 else generate_synthetic(3, 5, count, seed=0)[0]
        parts = split_dataset(ds, (0.8, 0.1, 0.1), seed=5)
        assert sum(len(p) for p in parts) == count
        for part, ratio in zip(parts, (0.8, 0.1, 0.1)):
            assert abs(len(part) - ratio * count) <= 1
        # disjoint and exhaustive as a multiset of positions
        ids = Counter(id(i) for p in parts for i in p.instances)
        assert ids == Counter(id(i) for i in ds.instances)


class TestBatches:
    def test_sizes(self):
        ds = make_ds(1000)
        assert [len(b) for b in batches(ds, 512, 0)] == [512, 488]

    def test_singletons(self):
        assert sum(1 for _ in batches(make_ds(1000), 1, 0)) == 1000

    def test_epochs_cover_each_instance(self):
        ds = make_ds(300)
        orders = []
        for seed in (1, 2):
            rows = np.concatenate([np.hstack([b.indices, b.labels[:, None]]) for b in batches(ds, 64, seed)])
            orders.append(rows)
        assert not np.array_equal(orders[0], orders[1])
        canon = lambda a: sorted(map(tuple, a.tolist()))  # noqa: E731
        assert canon(orders[0]) == canon(orders[1])
        idx, _, lab = ds.arrays()
        assert canon(orders[0]) == canon(np.hstack([idx, lab[:, None]]))

    def test_deterministic(self):
        ds = make_ds(100)
        a = [b.indices for b in batches(ds, 16, 4)]
        b = [b.indices for b in batches(ds, 16, 4)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_padding_is_zero_valued(self):
        ds = Dataset((SparseInstance((1,), (2.0,), 1), SparseInstance((0, 2, 3), (1.0, 1.0, 1.0), 0)), 4)
        batch = Batch.from_instances(ds.instances)
        assert batch.indices.shape == (2, 3)
        assert batch.values[0, 1:].tolist() == [0.0, 0.0]

    def test_bad_batch_size(self):
        with pytest.raises(DataError):
            next(batches(make_ds(5), 0))


class TestSynthetic:
    def test_shape(self):
        ds, teacher = generate_synthetic(10, 100, 50000, seed=1)
        assert ds.n == 1000 and len(ds) == 50000
        assert all(inst.nnz == 10 for inst in ds.instances)
        # one active feature per field
        idx, _, _ = ds.arrays()
        assert np.array_equal(idx // 100, np.broadcast_to(np.arange(10), idx.shape))
        assert teacher.V.shape == (1000, 8)

    def test_deterministic(self):
        a, ta = generate_synthetic(4, 10, 500, seed=9)
        b, tb = generate_synthetic(4, 10, 500, seed=9)
        assert serialize_libsvm(a) == serialize_libsvm(b)
        assert ta.to_text() == tb.to_text()

    def test_teacher_matches_brute_force(self):
        ds, teacher = generate_synthetic(6, 7, 200, seed=2)
        idx, val, _ = ds.arrays()
        fast = teacher.scores(idx, val)
        for k in range(len(ds)):
            assert fast[k] == pytest.approx(brute_fm_score(teacher, ds[k]), rel=1e-12, abs=1e-12)

    def test_positive_rate(self):
        ds, teacher = generate_synthetic(10, 100, 20000, seed=3)
        idx, val, lab = ds.arrays()
        assert abs(lab.mean() - sigmoid(teacher.scores(idx, val)).mean()) < 0.05

    def test_sidecar_round_trip(self):
        _, teacher = generate_synthetic(3, 4, 10, seed=0)
        back = PlantedFM.from_text(teacher.to_text())
        assert back.w0 == teacher.w0
        np.testing.assert_array_equal(back.w, teacher.w)
        np.testing.assert_array_equal(back.V, teacher.V)

    def test_counts_validated(self):
        with pytest.raises(DataError):
            generate_synthetic(10, 100, 0, seed=0)
