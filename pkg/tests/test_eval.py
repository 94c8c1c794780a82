import numpy as np
import pytest

from nupolar.descriptor import DescriptorConfig, FeatureTable
from nupolar.evaluation import (
    MetricError,
    StratificationError,
    _auc_pair,
    accuracy,
    auc,
    confusion,
    cross_validate,
    noise_sweep,
    report_to_json,
    roc_curve,
    stratified_fold_indices,
    tpr_fpr,
)
from nupolar.forest import ForestConfig


def mann_whitney_auc(scores, labels):
    """O(n^2) pair-counting oracle: P(s_pos > s_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=float)
    l = np.asarray(labels)
    pos = s[l == 1]
    neg = s[l == 0]
    wins = sum(1.0 for p in pos for q in neg if p > q)
    ties = sum(1.0 for p in pos for q in neg if p == q)
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestConfusion:
    def test_all_positive_correct(self):
        tp, fp, tn, fn = confusion(np.ones(7), np.ones(7), 0.5)
        assert (tp, fp, tn, fn) == (7, 0, 0, 0)

    def test_threshold_above_everything(self):
        tp, fp, tn, fn = confusion([0.2, 0.9], [1, 0], 1.5)
        assert tp == 0 and fp == 0 and tn == 1 and fn == 1

    def test_hand_enumerated_six_pairs(self):
        scores = [0.9, 0.8, 0.6, 0.4, 0.3, 0.1]
        labels = [1, 0, 1, 1, 0, 0]
        # at 0.5: predictions (+,+,+,-,-,-): TP = {0.9, 0.6}, FP = {0.8},
        # FN = {0.4}, TN = {0.3, 0.1}
        assert confusion(scores, labels, 0.5) == (2, 1, 2, 1)

    def test_threshold_inclusive(self):
        assert confusion([0.5], [1], 0.5) == (1, 0, 0, 0)

    def test_partition(self):
        rng = np.random.default_rng(0)
        s = rng.random(50)
        l = rng.integers(0, 2, 50)
        tp, fp, tn, fn = confusion(s, l, 0.3)
        assert tp + fp + tn + fn == 50


class TestTprFpr:
    def test_perfect_classifier(self):
        assert tpr_fpr((5, 0, 5, 0)) == (1.0, 0.0)

    def test_paper_equation_values(self):
        # TP=3, FN=1, FP=2, TN=2 -> TPR = 3/4, FPR = 2/4
        assert tpr_fpr((3, 2, 2, 1)) == (0.75, 0.5)

    def test_degenerate_class_errors(self):
        with pytest.raises(MetricError):
            tpr_fpr((3, 0, 0, 1))   # no negatives
        with pytest.raises(MetricError):
            tpr_fpr((0, 2, 2, 0))   # no positives


class TestRocCurve:
    def test_perfect_separation_passes_through_corner(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [1, 1, 0, 0]
        c = roc_curve(scores, labels)
        assert c.fpr[0] == 0.0 and c.tpr[0] == 0.0
        assert c.fpr[-1] == 1.0 and c.tpr[-1] == 1.0
        assert any(f == 0.0 and t == 1.0 for f, t in zip(c.fpr, c.tpr))

    def test_all_tied_scores_two_points(self):
        c = roc_curve([0.5] * 6, [1, 0, 1, 0, 1, 0])
        assert c.fpr.tolist() == [0.0, 1.0]
        assert c.tpr.tolist() == [0.0, 1.0]

    def test_monotone_and_matches_per_threshold_confusion(self):
        rng = np.random.default_rng(1)
        scores = np.round(rng.random(10), 1)   # force some ties
        labels = np.array([1, 0, 1, 0, 1, 0, 1, 0, 1, 0])
        c = roc_curve(scores, labels)
        assert (np.diff(c.fpr) >= 0).all() and (np.diff(c.tpr) >= 0).all()
        # oracle: confusion at each threshold
        for f, t, thr in zip(c.fpr[1:], c.tpr[1:], c.thresholds[1:]):
            tp, fp, tn, fn = confusion(scores, labels, thr)
            assert t == tp / (tp + fn)
            assert f == fp / (fp + tn)

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            roc_curve([0.1, 0.9], [1, 1])


class TestAuc:
    def test_perfect(self):
        assert auc([0.9, 0.8, 0.2], [1, 1, 0]) == 1.0

    def test_all_tied_is_half(self):
        assert auc([0.5] * 10, [1, 0] * 5) == 0.5

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(50):
            n = int(rng.integers(4, 60))
            scores = np.round(rng.random(n), 2)   # inject ties
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert abs(auc(scores, labels) - mann_whitney_auc(scores, labels)) < 1e-12

    def test_invariant_under_increasing_transform(self):
        rng = np.random.default_rng(3)
        scores = rng.random(40)
        labels = rng.integers(0, 2, 40)
        labels[:2] = [0, 1]
        a1 = auc(scores, labels)
        a2 = auc(np.exp(3 * scores) + 5, labels)
        assert a1 == a2   # identical count sequence -> identical float

    def test_label_flip_complements_exactly(self):
        rng = np.random.default_rng(4)
        scores = np.round(rng.random(30), 1)
        labels = rng.integers(0, 2, 30)
        labels[:2] = [0, 1]
        num, den = _auc_pair(scores, labels)
        num_f, den_f = _auc_pair(scores, 1 - labels)
        # the exact rational identity AUC' = 1 - AUC
        assert den_f == den and num_f == den - num
        assert abs(auc(scores, 1 - labels) - (1.0 - auc(scores, labels))) < 1e-15

    def test_single_class_rejected(self):
        with pytest.raises(MetricError):
            auc([0.1, 0.2], [0, 0])


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([0.9, 0.1], [1, 0]) == 1.0

    def test_default_threshold_is_half(self):
        s = [0.7, 0.5, 0.2]
        l = [1, 1, 0]
        assert accuracy(s, l) == accuracy(s, l, 0.5) == 1.0

    def test_random_labels_near_half(self):
        rng = np.random.default_rng(5)
        n = 7090
        scores = rng.random(n)
        labels = rng.integers(0, 2, n)
        assert abs(accuracy(scores, labels) - 0.5) < 0.05

    def test_empty_rejected(self):
        with pytest.raises(MetricError):
            accuracy([], [])


class TestStratifiedFolds:
    def test_class_proportions_within_one(self):
        rng = np.random.default_rng(6)
        labels = (rng.random(103) < 0.37).astype(int)
        folds = stratified_fold_indices(labels, 5, np.random.default_rng(1))
        assert sum(len(f) for f in folds) == 103
        assert len(np.unique(np.concatenate(folds))) == 103
        for c in (0, 1):
            counts = [int(np.sum(labels[f] == c)) for f in folds]
            assert max(counts) - min(counts) <= 1

    def test_single_class_fold_error(self):
        labels = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
        with pytest.raises(StratificationError):
            stratified_fold_indices(labels, 5, np.random.default_rng(0))

    def test_fold_count_validation(self):
        with pytest.raises(ValueError):
            stratified_fold_indices(np.array([0, 1]), 1, np.random.default_rng(0))


def _fake_table(n=80, d=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] > 0).astype(np.int8)
    energies = rng.uniform(0.2, 1.0, n)
    return FeatureTable(
        ids=[f"e{i}" for i in range(n)], labels=y, energies=energies,
        X=np.ascontiguousarray(X), config=DescriptorConfig(),
    )


class TestCrossValidate:
    def test_label_oracle_scores_auc_one(self):
        table = _fake_table()
        y = table.labels

        def oracle(X_train, y_train, X_test, tag):
            # cheats by reading the held-out labels through closure indices
            test_mask = np.isin(table.X[:, 0], X_test[:, 0])
            return y[test_mask].astype(float)

        rep = cross_validate(features=table, forest_cfg=ForestConfig(n_trees=1),
                             folds=4, repeats=3, seed=0, fit_predict=oracle)
        assert rep.per_rep_auc == [1.0, 1.0, 1.0]
        assert rep.auc_mean == 1.0 and rep.auc_std == 0.0

    def test_constant_scores_auc_half(self):
        table = _fake_table()

        def constant(X_train, y_train, X_test, tag):
            return np.full(X_test.shape[0], 0.5)

        rep = cross_validate(features=table, forest_cfg=ForestConfig(n_trees=1),
                             folds=4, repeats=2, seed=0, fit_predict=constant)
        assert rep.per_rep_auc == [0.5, 0.5]

    def test_deterministic_across_threads(self):
        table = _fake_table(seed=3)
        cfg = ForestConfig(n_trees=8, seed=0)
        a = cross_validate(features=table, forest_cfg=cfg, folds=3, repeats=2,
                           seed=5, threads=1)
        b = cross_validate(features=table, forest_cfg=cfg, folds=3, repeats=2,
                           seed=5, threads=4)
        assert report_to_json(a) == report_to_json(b)

    def test_single_repeat_has_no_std(self):
        table = _fake_table()
        rep = cross_validate(features=table, forest_cfg=ForestConfig(n_trees=4),
                             folds=3, repeats=1, seed=0)
        assert rep.auc_std is None and rep.acc_std is None
        assert "n/a" in rep.summary_line()

    def test_energy_slice_covering_everything_equals_global(self):
        table = _fake_table(seed=8)
        rep = cross_validate(features=table, forest_cfg=ForestConfig(n_trees=6, seed=1),
                             folds=4, repeats=2, seed=2, energy_bins=[0.2, 1.0])
        assert len(rep.energy_slices) == 1
        s = rep.energy_slices[0]
        assert s.per_rep_auc == rep.per_rep_auc
        assert s.auc_mean == rep.auc_mean

    def test_empty_slice_absent_not_error(self):
        table = _fake_table(seed=9)
        rep = cross_validate(features=table, forest_cfg=ForestConfig(n_trees=4, seed=1),
                             folds=4, repeats=1, seed=2,
                             energy_bins=[0.2, 1.0, 2.0, 3.0])
        assert rep.energy_slices[1].auc_mean is None
        assert rep.energy_slices[1].note == "empty bin"

    def test_per_fold_aggregation_flag(self):
        table = _fake_table(seed=10)
        cfg = ForestConfig(n_trees=6, seed=1)
        pooled = cross_validate(features=table, forest_cfg=cfg, folds=4,
                                repeats=2, seed=3)
        per_fold = cross_validate(features=table, forest_cfg=cfg, folds=4,
                                  repeats=2, seed=3, per_fold=True)
        assert pooled.aggregation == "pooled"
        assert per_fold.aggregation == "per_fold"
        # same out-of-fold scores, different aggregation unit
        assert pooled.per_rep_auc != per_fold.per_rep_auc

    def test_single_class_dataset_rejected(self):
        table = _fake_table()
        table.labels = np.ones_like(table.labels)
        with pytest.raises(MetricError):
            cross_validate(features=table, forest_cfg=ForestConfig(n_trees=2),
                           folds=3, repeats=1, seed=0)

    def test_report_json_deterministic(self):
        table = _fake_table(seed=11)
        cfg = ForestConfig(n_trees=5, seed=2)
        a = cross_validate(features=table, forest_cfg=cfg, folds=3, repeats=2, seed=7)
        b = cross_validate(features=table, forest_cfg=cfg, folds=3, repeats=2, seed=7)
        assert report_to_json(a) == report_to_json(b)


class TestNoiseSweep:
    def test_level_zero_matches_clean_run(self, quick_dataset):
        events = quick_dataset.events[:120]
        dcfg = DescriptorConfig(n_bins=18, radius=10.0, include_stats=True)
        fcfg = ForestConfig(n_trees=10, seed=0)
        results = noise_sweep(events, [0], dcfg, fcfg, folds=3, repeats=2, seed=4)
        clean = cross_validate(events, dcfg, fcfg, folds=3, repeats=2, seed=4)
        assert results[0][0] == 0
        assert report_to_json(results[0][1]) == report_to_json(clean)

    def test_reports_in_level_order(self, quick_dataset):
        events = quick_dataset.events[:120]
        dcfg = DescriptorConfig(n_bins=18, radius=10.0, include_stats=False)
        fcfg = ForestConfig(n_trees=8, seed=0)
        results = noise_sweep(events, [2, 0], dcfg, fcfg, folds=3, repeats=1, seed=4)
        assert [k for k, _ in results] == [2, 0]
