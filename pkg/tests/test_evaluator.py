import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mspl.errors import EmptyList, NoPositives, NoQueries
from mspl.evaluator import (
    EvalReport,
    SeedAggregate,
    aggregate_seeds,
    auprc,
    balanced_accuracy,
    evaluate,
    macro_f1,
    predict,
    scores_from_distances,
)
from oracles import average_precision_exhaustive, confusion_counts


def onehot(y, C):
    return np.eye(C)[np.asarray(y)]


def test_predict():
    assert predict([[0.9, 0.2, 0.1]]).tolist() == [[1, 0, 0]]
    assert predict([[0.6, 0.6, 0.1]]).tolist() == [[1, 0, 0]]
    assert predict([[0.7, 0.6, 0.4]], "multilabel").tolist() == [[1, 1, 0]]


def test_predict_invariant_to_monotone_transform(rng):
    D = rng.standard_normal((50, 4))
    a = predict(scores_from_distances(D))
    b = onehot(D.argmin(1), 4)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(predict(np.exp(3 * -D)), b)


def test_balanced_accuracy_examples():
    truth = onehot([0] * 10 + [1] * 10, 2)
    assert balanced_accuracy(truth, truth) == 1.0
    # class 0: TP=9, FN=1; class 1: TN=8 correct, 2 misclassified
    pred = onehot([0] * 9 + [1] + [1] * 8 + [0] * 2, 2)
    assert balanced_accuracy(pred, truth) == pytest.approx(0.85, abs=1e-15)
    const = onehot([0] * 30, 3)
    truth3 = onehot([0, 1, 2] * 10, 3)
    assert balanced_accuracy(const, truth3) == pytest.approx(1 / 3)


def test_balanced_accuracy_excludes_absent_classes():
    truth = onehot([0, 0, 1], 3)
    pred = onehot([0, 1, 1], 3)
    assert balanced_accuracy(pred, truth) == pytest.approx((0.5 + 1.0) / 2)


def test_no_queries():
    with pytest.raises(NoQueries):
        balanced_accuracy(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(NoQueries):
        macro_f1(np.zeros((0, 2)), np.zeros((0, 2)))


def test_macro_f1_edges():
    truth = onehot([0, 0, 1, 1], 3)  # class 2 never true
    assert macro_f1(truth, truth) == 1.0  # class 2 never predicted either -> excluded
    pred = onehot([0, 0, 0, 0], 3)  # class 1 present, never predicted -> F1 0
    p, r = 0.5, 1.0
    assert macro_f1(pred, truth) == pytest.approx((2 * p * r / (p + r) + 0.0) / 2)


def test_macro_f1_three_class_oracle(rng):
    for _ in range(20):
        y = rng.integers(0, 3, 40)
        p = rng.integers(0, 3, 40)
        f1s = []
        for k in range(3):
            tp, fp, fn = confusion_counts(p.tolist(), y.tolist(), k)
            if tp + fp + fn == 0:
                continue
            prec = tp / (tp + fp) if tp + fp else 0.0
            rec = tp / (tp + fn) if tp + fn else 0.0
            f1s.append(0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec))
        assert macro_f1(onehot(p, 3), onehot(y, 3)) == pytest.approx(np.mean(f1s), abs=1e-12)


def test_auprc_examples():
    assert auprc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    expected = average_precision_exhaustive([0.1, 0.8, 0.9], [1, 1, 0])
    assert float(expected) == pytest.approx(7 / 12)
    assert auprc([0.1, 0.8, 0.9], [1, 1, 0]) == float(expected)
    # one threshold: precision equals prevalence
    assert auprc([0.5] * 8, [1, 0, 1, 0, 0, 0, 1, 0]) == pytest.approx(3 / 8, abs=1e-15)


def test_auprc_no_positives():
    with pytest.raises(NoPositives):
        auprc([0.3, 0.2], [0, 0])


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10_000), st.integers(2, 12))
def test_auprc_equals_exhaustive(n, seed, levels):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, levels, n) / levels  # coarse grid forces ties
    truth = rng.uniform(size=n) < 0.4
    if not truth.any():
        truth[0] = True
    exact = average_precision_exhaustive(scores.tolist(), truth.tolist())
    assert auprc(scores, truth) == float(exact)


def test_uniform_random_predictor_balanced_accuracy():
    rng = np.random.default_rng(0)
    C, n = 4, 10_000
    y = np.tile(np.arange(C), n // C)
    pred = rng.integers(0, C, n)
    assert abs(balanced_accuracy(onehot(pred, C), onehot(y, C)) - 1 / C) < 0.05


def test_evaluate_report_ranges_and_round_trip(tmp_path, rng):
    truth = onehot(rng.integers(0, 3, 30), 3)
    scores = rng.uniform(size=(30, 3))
    rep = evaluate(scores, truth, params="ema")
    for v in (rep.balanced_accuracy, rep.macro_f1, rep.auprc):
        assert 0 <= v <= 1
    rep.save(tmp_path / "r.json")
    assert EvalReport.load(tmp_path / "r.json") == rep


def test_evaluate_flags_classes_without_positives():
    truth = onehot([0, 0, 1, 1], 3)
    rep = evaluate(np.full((4, 3), 0.5), truth)
    assert rep.auprc_excluded == [2]
    assert rep.per_class_auprc[2] is None


def test_aggregate():
    def r(v):
        return EvalReport(v, v, v, 10)

    agg = aggregate_seeds([r(0.8)])
    assert agg.std["macro_f1"] == 0
    agg = aggregate_seeds([r(0.8), r(0.9)])
    assert agg.mean["auprc"] == pytest.approx(0.85)
    assert agg.std["auprc"] == pytest.approx(0.05)
    agg = aggregate_seeds([r(0.7)] * 40)
    assert agg.std["balanced_accuracy"] == 0 and agg.mean["balanced_accuracy"] == 0.7
    assert agg.n_seeds == 40
    with pytest.raises(EmptyList):
        aggregate_seeds([])


def test_aggregate_csv_round_trip(tmp_path):
    agg = aggregate_seeds([EvalReport(0.1 * i, 0.3, 0.2 + 0.01 * i, 5) for i in range(1, 4)])
    agg.save_csv(tmp_path / "a.csv")
    assert SeedAggregate.load_csv(tmp_path / "a.csv") == agg
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "metric,mean,std,n_seeds"
