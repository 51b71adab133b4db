import numpy as np
import pytest
from sklearn.metrics import cohen_kappa_score

from gwcl.errors import MetricUndefinedError
from gwcl.services.metrics import (
    MetricReport,
    aa,
    aggregate,
    confusion,
    evaluate,
    kappa,
    oa,
    per_class_recall,
    read_report,
    write_kv,
)


def _report(value, c=2):
    return MetricReport(oa=value, aa=value, kappa=value, per_class_recall=np.full(c, value))


def test_confusion_counts_rows_true_columns_predicted():
    cm = confusion(np.array([1, 2, 2, 1]), np.array([1, 2, 1, 1]), 2)
    np.testing.assert_array_equal(cm, [[2, 1], [0, 1]])


def test_confusion_shapes():
    truths = np.array([1, 2, 3, 3, 2])
    np.testing.assert_array_equal(confusion(truths, truths, 3), np.diag([1, 2, 2]))
    cm = confusion(np.ones(5, dtype=int), truths, 3)
    assert np.count_nonzero(cm.sum(axis=0)) == 1 and cm[:, 0].sum() == 5


def test_confusion_rejects_bad_codes():
    with pytest.raises(MetricUndefinedError):
        confusion(np.array([0, 1]), np.array([1, 1]), 2)
    with pytest.raises(MetricUndefinedError):
        confusion(np.array([1, 3]), np.array([1, 1]), 2)
    with pytest.raises(MetricUndefinedError):
        confusion(np.array([1]), np.array([1, 1]), 2)


def test_hand_computed_matrix():
    cm = np.array([[2, 1], [0, 1]])
    assert oa(cm) == 0.75
    assert aa(cm) == pytest.approx((2 / 3 + 1) / 2)
    assert kappa(cm) == pytest.approx(0.5)


def test_perfect_agreement():
    cm = np.diag([5, 3, 7])
    assert oa(cm) == aa(cm) == kappa(cm) == 1.0


def test_kappa_matches_sklearn():
    rng = np.random.default_rng(0)
    truths = rng.integers(1, 5, 300)
    preds = np.where(rng.random(300) < 0.7, truths, rng.integers(1, 5, 300))
    assert kappa(confusion(preds, truths, 4)) == pytest.approx(cohen_kappa_score(truths, preds), abs=1e-12)


def test_chance_predictions_give_kappa_near_zero():
    rng = np.random.default_rng(1)
    truths = rng.integers(1, 4, 100_000)
    preds = rng.integers(1, 4, 100_000)
    assert abs(kappa(confusion(preds, truths, 3))) < 0.05


def test_undefined_metrics():
    with pytest.raises(MetricUndefinedError, match="classes \\[2\\]"):
        per_class_recall(np.array([[3, 0], [0, 0]]))
    with pytest.raises(MetricUndefinedError):
        kappa(np.array([[4, 0], [0, 0]]))
    with pytest.raises(MetricUndefinedError):
        oa(np.zeros((2, 2), dtype=int))


def test_label_permutation_leaves_metrics_unchanged():
    rng = np.random.default_rng(2)
    truths = rng.integers(1, 5, 200)
    preds = np.where(rng.random(200) < 0.6, truths, rng.integers(1, 5, 200))
    relabel = np.array([0, 3, 1, 4, 2])
    a = evaluate(preds, truths, 4)
    b = evaluate(relabel[preds], relabel[truths], 4)
    assert a.oa == b.oa
    assert a.aa == pytest.approx(b.aa)
    assert a.kappa == pytest.approx(b.kappa)


def test_aggregate_mean_and_sample_deviation():
    summary = aggregate([_report(0.98), _report(0.96)])
    assert summary.oa == pytest.approx(0.97)
    assert summary.oa_std == pytest.approx(0.01414, abs=1e-5)
    assert summary.runs == 2

    single = aggregate([_report(0.9)])
    assert single.oa == 0.9 and single.oa_std == 0.0

    same = aggregate([_report(0.8)] * 10)
    assert same.oa == same.aa == same.kappa == 0.8
    assert same.oa_std == same.aa_std == same.kappa_std == 0.0
    assert np.all(same.per_class_std == 0.0)


def test_aggregate_needs_matching_reports():
    with pytest.raises(MetricUndefinedError):
        aggregate([])
    with pytest.raises(MetricUndefinedError):
        aggregate([_report(0.9, c=2), _report(0.9, c=3)])


def test_report_files(tmp_path):
    report = evaluate(np.array([1, 2, 2, 1]), np.array([1, 2, 1, 1]), 2)
    write_kv(tmp_path / "metrics.kv", report.to_kv())
    lines = (tmp_path / "metrics.kv").read_text(encoding="utf-8").splitlines()
    assert "oa=0.750000" in lines and "kappa=0.500000" in lines
    again = read_report(tmp_path / "metrics.kv")
    assert again.oa == 0.75
    np.testing.assert_allclose(again.per_class_recall, report.per_class_recall, atol=1e-6)

    text = report.to_text(["Corn", "Woods"])
    assert "Corn" in text and "OA" in text
    assert "75.00" in text
