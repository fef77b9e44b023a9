import numpy as np
import pytest

from sluiceflow.evalkit import (
    aggregate_curves,
    eval_by_group,
    metric_at,
    metric_at_restarts,
    pairwise_auc,
    pr_curve,
    read_curve_csv,
    roc_curve,
    welch_t,
    write_curve_csv,
)


class TestRoc:
    def test_perfect_separation(self):
        scores = np.array([0.9, 0.8, 0.2, 0.1])
        labels = np.array([1, 1, 0, 0])
        assert roc_curve(scores, labels).auc == 1.0

    def test_all_equal_scores(self):
        scores = np.full(10, 0.5)
        labels = np.array([1, 0] * 5)
        assert roc_curve(scores, labels).auc == pytest.approx(0.5, abs=1e-15)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            scores = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], size=100)  # force ties
            labels = rng.integers(0, 2, 100)
            if labels.min() == labels.max():
                continue
            assert abs(roc_curve(scores, labels).auc - pairwise_auc(scores, labels)) < 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            roc_curve(np.array([0.1, 0.2]), np.array([1, 1]))

    def test_points_monotone(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(size=50)
        labels = rng.integers(0, 2, 50)
        pts = roc_curve(scores, labels).points
        assert (np.diff(pts[:, 1]) >= 0).all()
        assert (np.diff(pts[:, 2]) >= 0).all()


def brute_force_pr(scores, labels):
    """Exhaustive threshold oracle: precision/recall at every distinct score."""
    out = {}
    for thr in sorted(set(scores), reverse=True):
        pred = scores >= thr
        tp = int((pred & (labels == 1)).sum())
        fp = int((pred & (labels == 0)).sum())
        out[thr] = (tp / max(labels.sum(), 1), tp / max(tp + fp, 1))
    return out


class TestPr:
    def test_perfect_separation(self):
        scores = np.array([0.9, 0.8, 0.2, 0.1])
        labels = np.array([1, 1, 0, 0])
        curve = pr_curve(scores, labels)
        at_full_recall = curve.points[curve.points[:, 1] == 1.0]
        assert at_full_recall[0, 2] == 1.0

    def test_one_positive_ranked_last(self):
        scores = np.linspace(1.0, 0.01, 100)
        labels = np.zeros(100, dtype=int)
        labels[99] = 1
        curve = pr_curve(scores, labels)
        at_full_recall = curve.points[curve.points[:, 1] == 1.0]
        assert at_full_recall[0, 2] == pytest.approx(1 / 100)

    def test_matches_exhaustive_threshold_oracle(self):
        rng = np.random.default_rng(1)
        scores = rng.choice(np.linspace(0, 1, 17), size=100)
        labels = rng.integers(0, 2, 100)
        labels[0] = 1
        oracle = brute_force_pr(scores, labels)
        curve = pr_curve(scores, labels)
        assert len(curve.points) == len(oracle)
        for thr, recall, precision in curve.points:
            exp_recall, exp_precision = oracle[thr]
            assert recall == exp_recall
            assert precision == exp_precision

    def test_no_positives_rejected(self):
        with pytest.raises(ValueError):
            pr_curve(np.array([0.5, 0.2]), np.array([0, 0]))

    def test_precision_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        scores = rng.uniform(size=60)
        labels = rng.integers(0, 2, 60)
        labels[:2] = [0, 1]
        a = pr_curve(scores, labels)
        b = pr_curve(np.exp(3 * scores), labels)
        np.testing.assert_allclose(a.points[:, 1:], b.points[:, 1:], atol=1e-15)


class TestMetricAt:
    def curve(self, pts):
        import sluiceflow.evalkit as ek

        return ek.CurveReport(kind="roc", points=np.array(pts), auc=0.0)

    def test_exact_point(self):
        c = self.curve([[0.9, 0.0, 0.0], [0.5, 0.4, 0.8], [0.1, 1.0, 1.0]])
        assert metric_at(c, 0.4) == 0.8

    def test_linear_interpolation(self):
        c = self.curve([[0.9, 0.3, 0.6], [0.1, 0.5, 1.0]])
        assert metric_at(c, 0.4) == pytest.approx(0.8)

    def test_outside_range_rejected(self):
        c = self.curve([[0.9, 0.2, 0.5], [0.1, 0.8, 1.0]])
        with pytest.raises(ValueError):
            metric_at(c, 0.9)

    def test_single_restart_zero_stderr(self):
        c = self.curve([[0.9, 0.0, 0.0], [0.1, 1.0, 1.0]])
        values, mean, stderr = metric_at_restarts([c], 0.5)
        assert stderr == 0.0
        assert values == [mean]

    def test_stderr_is_std_over_sqrt_n(self):
        curves = [
            self.curve([[0.9, 0.0, 0.0], [0.1, 1.0, y]]) for y in (0.6, 0.8, 1.0)
        ]
        values, mean, stderr = metric_at_restarts(curves, 1.0)
        assert mean == pytest.approx(0.8)
        assert stderr == pytest.approx(np.std(values, ddof=1) / np.sqrt(3))


class TestWelch:
    def test_identical_samples(self):
        t, df, p = welch_t([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert t == 0.0
        assert p == pytest.approx(1.0)

    def test_textbook_example(self):
        t, df, p = welch_t([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert t == pytest.approx(-1.0)
        assert df == pytest.approx(8.0)
        assert p == pytest.approx(0.3466, abs=1e-3)

    def test_symmetry(self):
        a, b = [1.0, 2.5, 3.0, 4.0], [2.0, 2.0, 5.0, 6.0]
        t1, df1, p1 = welch_t(a, b)
        t2, df2, p2 = welch_t(b, a)
        assert t1 == -t2
        assert df1 == df2
        assert p1 == p2

    def test_degenerate_conventions(self):
        assert welch_t([1.0, 1.0], [1.0, 1.0])[2] == 1.0
        assert welch_t([1.0, 1.0], [2.0, 2.0])[2] == 0.0

    def test_small_samples_rejected(self):
        with pytest.raises(ValueError):
            welch_t([1.0], [1.0, 2.0])


class TestGroups:
    def test_single_group_equals_plain_roc(self):
        rng = np.random.default_rng(4)
        scores = rng.uniform(size=40)
        labels = rng.integers(0, 2, 40)
        labels[:2] = [0, 1]
        tags = np.where(labels == 1, "famA", "")
        grouped = eval_by_group(scores, labels, tags, "famA")
        assert grouped.auc == roc_curve(scores, labels).auc

    def test_top_ranked_single_positive_group(self):
        scores = np.array([0.99, 0.5, 0.4, 0.3, 0.8])
        labels = np.array([1, 0, 0, 0, 1])
        tags = np.array(["famA", "", "", "", "famB"], dtype=object)
        assert eval_by_group(scores, labels, tags, "famA").auc == 1.0

    def test_groups_partition_positives(self):
        labels = np.array([1, 1, 1, 0, 0])
        tags = np.array(["famA", "famB", "famA", "", ""], dtype=object)
        n_a = ((labels == 1) & (tags == "famA")).sum()
        n_b = ((labels == 1) & (tags == "famB")).sum()
        assert n_a + n_b == labels.sum()

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            eval_by_group(
                np.array([0.5, 0.2]), np.array([1, 0]),
                np.array(["famA", ""], dtype=object), "famZ",
            )


class TestAggregateAndCsv:
    def test_aggregate_bands(self):
        rng = np.random.default_rng(5)
        curves = []
        for seed in range(4):
            scores = rng.uniform(size=30)
            labels = rng.integers(0, 2, 30)
            labels[:2] = [0, 1]
            curves.append(roc_curve(scores, labels))
        agg = aggregate_curves(curves)
        assert agg.mean is not None and agg.stderr is not None
        assert (agg.stderr >= 0).all()
        assert len(agg.restart_values) == 4

    def test_csv_roundtrip(self, tmp_path):
        scores = np.array([0.9, 0.7, 0.4, 0.2])
        labels = np.array([1, 0, 1, 0])
        curve = roc_curve(scores, labels)
        path = tmp_path / "roc.csv"
        write_curve_csv(path, curve)
        loaded = read_curve_csv(path)
        assert loaded.auc == pytest.approx(curve.auc, abs=1e-9)
