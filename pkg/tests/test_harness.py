import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trafficgraph.features import FeatureSequence
from trafficgraph.graph import read_pgm
from trafficgraph.harness import (VARIANTS, SplitSpec, UnknownVariantError, VariantSpec,
                                  canonical_variant, confusion_matrix, evaluate,
                                  evaluate_predictions, group_by_intersection, intersection_of,
                                  leave_one_out, run_variants, split, split_sizes,
                                  write_confusion_csv, write_confusion_pgm, write_results_table)
from trafficgraph.neural import TemporalModel, TemporalModelConfig, TrainConfig

LABS = ("neutral", "clumping", "unclumping")


def dummy(n, inter="A", T=3, F=4, seed=0):
    rng = np.random.default_rng(seed)
    return [FeatureSequence(LABS[i % 3], f"{inter}:{i % 4 + 1}{LABS[i % 3][0]}",
                            rng.normal(size=(T, F)) + (i % 3), f"{inter}:{i}@{float(i)!r}")
            for i in range(n)]


# ---------------------------------------------------------------------------
# splits


def test_split_sizes_examples():
    assert split_sizes(10) == (7, 1, 2)
    assert split_sizes(0) == (0, 0, 0)
    assert split_sizes(1) == (0, 1, 0)


def test_grouped_split_reproduces_reported_counts():
    data = dummy(561, "A") + dummy(294, "B") + dummy(448, "C")
    tr, va, te = split(data, SplitSpec(seed=0), [intersection_of(s) for s in data])
    assert (len(tr), len(va), len(te)) == (910, 132, 261)


def test_rounding_conventions_enumerated():
    # oracle: exact rationals for each of the three intersections
    groups = (561, 294, 448)
    val = sum(math.ceil(Fraction(n, 10)) for n in groups)
    test = sum(math.floor(Fraction(n, 5) + Fraction(1, 2)) for n in groups)
    assert (1303 - val - test, val, test) == (910, 132, 261)
    assert tuple(map(sum, zip(*(split_sizes(n) for n in groups)))) == (910, 132, 261)


@given(st.integers(0, 400), st.integers(0, 2**31 - 1))
def test_split_partition(n, seed):
    items = list(range(n))
    parts = split(items, SplitSpec(seed=seed))
    flat = [x for p in parts for x in p]
    assert sorted(flat) == items
    assert tuple(map(len, parts)) == split_sizes(n)


def test_split_deterministic():
    a = split(range(50), SplitSpec(seed=4))
    assert a == split(range(50), SplitSpec(seed=4))
    assert a != split(range(50), SplitSpec(seed=5))


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.1, 0.1)
    with pytest.raises(ValueError):
        split([1, 2], SplitSpec(), groups=["a"])


# ---------------------------------------------------------------------------
# evaluation


def test_perfect_and_constant_predictors():
    y = np.array([0, 0, 1, 2, 2, 2])
    ev = evaluate_predictions(y, y)
    np.testing.assert_array_equal(ev.confusion, np.diag([2, 1, 3]))
    assert ev.total == 1.0 and list(ev.per_class) == [1, 1, 1]
    ev = evaluate_predictions(y, np.zeros(6, dtype=int))
    np.testing.assert_array_equal(ev.confusion[:, 1:], 0)
    assert list(ev.per_class) == [1, 0, 0]


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_confusion_tally(pairs):
    y, p = map(np.array, zip(*pairs))
    ev = evaluate_predictions(y, p)
    for i in range(3):
        for j in range(3):
            assert ev.confusion[i, j] == sum(1 for a, b in pairs if a == i and b == j)
        assert ev.confusion[i].sum() == sum(1 for a, _ in pairs if a == i)
    assert ev.total == np.trace(ev.confusion) / ev.confusion.sum()


def test_absent_class_is_nan():
    ev = evaluate_predictions([0, 0], [0, 1])
    assert ev.per_class[0] == 0.5 and np.isnan(ev.per_class[1])


def test_evaluate_zero_model_ties_to_neutral():
    m = TemporalModel(TemporalModelConfig("gru", (3, 2), False, None, input_dim=4))
    ev = evaluate(m, dummy(9))
    np.testing.assert_array_equal(ev.confusion, [[3, 0, 0], [3, 0, 0], [3, 0, 0]])


def test_confusion_matrix_shape():
    assert confusion_matrix([], []).shape == (3, 3)


# ---------------------------------------------------------------------------
# variants


def test_variant_names():
    assert list(VARIANTS) == ["GRU(100,50)", "GRU(50,25)", "GRU-A(100,50)", "LSTM(100,50)",
                              "LSTM-A(100,50)", "RNN(100,50)", "RNN-A(100,50)"]
    assert canonical_variant("gru-a(100, 50)") == "GRU-A(100,50)"
    with pytest.raises(UnknownVariantError):
        canonical_variant("CNN(1)")
    cfg = VariantSpec.from_name("GRU(50,25)").config
    assert cfg.layer_sizes == (50, 25) and cfg.dense_units is None and cfg.input_dim == 147
    assert VariantSpec.from_name("LSTM-A(100,50)").config.attention


def test_variant_configs_unique():
    cfgs = [VariantSpec.from_name(v).config for v in VARIANTS]
    assert len(set(cfgs)) == len(cfgs)


def _tiny_variant(name="tiny", cell="gru", att=False):
    return VariantSpec(name, TemporalModelConfig(cell, (3, 2), att, 4, input_dim=4))


def test_run_variants_rows():
    data = dummy(30)
    tc = TrainConfig(epochs=2, batch_size=8, seed=1)
    res = run_variants(data, [_tiny_variant("a"), _tiny_variant("b")], tc)
    assert [r.name for r in res] == ["a", "b"]
    np.testing.assert_array_equal(res[0].evaluation.confusion, res[1].evaluation.confusion)
    np.testing.assert_array_equal(res[0].evaluation.as_row(), res[1].evaluation.as_row())
    buf = io.StringIO()
    write_results_table(buf, res)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "temporal_network,neutral,clumping,unclumping,total"
    assert len(lines) == 3
    # row sums equal the per-class test counts
    test = split(data, SplitSpec(seed=1), [intersection_of(s) for s in data])[2]
    counts = np.bincount([s.label_index for s in test], minlength=3)
    np.testing.assert_array_equal(res[0].evaluation.confusion.sum(axis=1), counts)


def test_leave_one_out_grid():
    sets = {k: dummy(20, k, seed=3) for k in "ABC"}
    res = leave_one_out(sets, _tiny_variant(att=True), TrainConfig(epochs=1, batch_size=8))
    assert res.accuracy.shape == (3, 3) and res.confusion.shape == (3, 3, 3, 3)
    for i, src in enumerate("ABC"):
        for j, dst in enumerate("ABC"):
            test = split(sets[dst], SplitSpec(seed=0))[2]
            counts = np.bincount([s.label_index for s in test], minlength=3)
            np.testing.assert_array_equal(res.confusion[i, j].sum(axis=1), counts)


def test_leave_one_out_identical_sets_symmetric():
    base = dummy(20, "A", seed=8)
    sets = {k: [FeatureSequence(s.label, s.region_id.replace("A", k), s.steps, k + s.key)
                for s in base] for k in "XY"}
    res = leave_one_out(sets, _tiny_variant(), TrainConfig(epochs=2, batch_size=8))
    np.testing.assert_array_equal(res.accuracy, res.accuracy.T)


def test_leave_one_out_detects_leak():
    a = dummy(20, "A")
    b = dummy(20, "B")
    b[0] = a[0]
    with pytest.raises(AssertionError):
        leave_one_out({"A": a, "B": b}, _tiny_variant(), TrainConfig(epochs=1))


def test_leave_one_out_two_way_walkthrough():
    sets = {"A": dummy(10, "A", seed=1), "B": dummy(10, "B", seed=2)}
    tc = TrainConfig(epochs=1, batch_size=4, seed=0)
    res = leave_one_out(sets, _tiny_variant(), tc)
    # by hand: train on A's 7+1 split, score on B's two test items
    from trafficgraph.neural import train
    tr, va, _ = split(sets["A"], SplitSpec(seed=0))
    best, _ = train(TemporalModel.initialize(_tiny_variant().config, 0), tr, tc, va)
    test_b = split(sets["B"], SplitSpec(seed=0))[2]
    assert res.evaluations[("A", "B")].total == evaluate(best, test_b).total


def test_leave_one_out_empty():
    with pytest.raises(ValueError):
        leave_one_out({"A": dummy(5), "B": []}, _tiny_variant())


def test_grouping_and_reports():
    data = dummy(4, "A") + dummy(3, "B")
    g = group_by_intersection(data)
    assert {k: len(v) for k, v in g.items()} == {"A": 4, "B": 3}
    cm = np.array([[2, 1, 0], [0, 3, 0], [1, 0, 1]])
    buf = io.StringIO()
    write_confusion_csv(buf, cm, "x")
    assert buf.getvalue().splitlines()[1:] == ["true\\pred,N,C,U", "N,2,1,0", "C,0,3,0", "U,1,0,1"]
    buf = io.StringIO()
    write_confusion_pgm(buf, cm)
    buf.seek(0)
    img = read_pgm(buf)
    assert img.shape == (48, 48)
    assert img[20, 20] == 1.0


def test_all_variants_in_order():
    res = run_variants(dummy(20), list(VARIANTS), TrainConfig(epochs=0))
    assert [r.name for r in res] == list(VARIANTS)
