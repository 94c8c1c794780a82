"""Classification metrics and the repeated cross-validation protocol.

Thresholding predicts positive when score >= threshold.  The ROC curve
sweeps thresholds over the distinct scores in descending order (plus a
+inf sentinel), so tied scores collapse into a single point and the curve
runs from (0,0) to (1,1).  AUC is the trapezoidal area under that curve;
because true/false positive counts are integers, the area is computed as
an exact integer numerator over 2*n_pos*n_neg and only then divided, which
makes AUC equal to the Mann-Whitney pair statistic (ties counted half) up
to one float division.

Cross-validation: per repetition, a stratified random partition into k
folds (class proportions per fold within one event of exact); each fold is
scored by a forest trained on the complement; the repetition's AUC and
accuracy are computed on its pooled out-of-fold scores, and the report
carries mean +/- sample std (ddof=1) over repetitions.  Descriptor
extraction is unsupervised and per-event, so it runs once outside the fold
loop -- there is no train/test leakage to avoid.  Per-fold aggregation
(metric per fold, then averaged) is available behind ``per_fold=True``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import json

import numpy as np

from . import _seeds
from .descriptor import DescriptorConfig, FeatureTable, extract_table
from .events import Event
from .forest import ForestConfig, train_forest
from .synthgen import perturb_dataset

DEFAULT_ENERGY_EDGES = (0.2, 0.4, 0.6, 0.8, 1.0)


class MetricError(Exception):
    """Raised for metric computations that are undefined on the input."""


class StratificationError(Exception):
    """Raised when a stratified partition cannot be built."""


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray   # thresholds[0] = +inf sentinel


def _scores_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    l = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != l.shape:
        raise ValueError("scores and labels must have equal length")
    return s, l


def confusion(scores, labels, threshold: float):
    """(TP, FP, TN, FN) at the given threshold; positive iff score >= t."""
    s, l = _scores_labels(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (l == 1)))
    fp = int(np.sum(pred & (l == 0)))
    tn = int(np.sum(~pred & (l == 0)))
    fn = int(np.sum(~pred & (l == 1)))
    return tp, fp, tn, fn


def tpr_fpr(counts):
    """(TPR, FPR) from (TP, FP, TN, FN); undefined when a class is empty."""
    tp, fp, tn, fn = counts
    if tp + fn == 0 or fp + tn == 0:
        raise MetricError("TPR/FPR undefined: one class has no samples")
    return tp / (tp + fn), fp / (fp + tn)


def _roc_counts(scores, labels):
    """Cumulative (tps, fps) at each distinct descending score + sentinel."""
    s, l = _scores_labels(scores, labels)
    n_pos = int(np.sum(l == 1))
    n_neg = l.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC/AUC need at least one sample of each class")
    order = np.argsort(-s, kind="stable")
    ss = s[order]
    ls = l[order]
    # last index of each run of tied scores
    boundary = np.flatnonzero(np.diff(ss) != 0)
    last = np.concatenate([boundary, [ss.size - 1]])
    tps = np.concatenate([[0], np.cumsum(ls)[last]])
    fps = np.concatenate([[0], (last + 1) - np.cumsum(ls)[last]])
    thresholds = np.concatenate([[np.inf], ss[last]])
    return tps.astype(np.int64), fps.astype(np.int64), thresholds, n_pos, n_neg


def roc_curve(scores, labels) -> RocCurve:
    tps, fps, thresholds, n_pos, n_neg = _roc_counts(scores, labels)
    return RocCurve(fpr=fps / n_neg, tpr=tps / n_pos, thresholds=thresholds)


def _auc_pair(scores, labels):
    """AUC as an exact integer fraction (numerator, denominator).

    Trapezoid sum over the ROC count points: 2*area*n_pos*n_neg =
    sum (fps_{i+1}-fps_i) * (tps_i + tps_{i+1}), all integers.
    """
    tps, fps, _, n_pos, n_neg = _roc_counts(scores, labels)
    num = int(np.sum(np.diff(fps) * (tps[:-1] + tps[1:])))
    return num, 2 * n_pos * n_neg


def auc(scores, labels) -> float:
    """Trapezoidal area under the ROC curve (= Mann-Whitney statistic)."""
    num, den = _auc_pair(scores, labels)
    return num / den


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    s, l = _scores_labels(scores, labels)
    if s.size == 0:
        raise MetricError("accuracy undefined on an empty set")
    tp, fp, tn, fn = confusion(s, l, threshold)
    return (tp + tn) / s.size


def stratified_fold_indices(labels, folds: int, rng: np.random.Generator):
    """Random class-stratified partition; per-class fold counts differ <= 1."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    l = np.asarray(labels).ravel()
    per_fold: list[list[np.ndarray]] = [[] for _ in range(folds)]
    for c in (0, 1):
        idx = np.flatnonzero(l == c)
        if idx.size < folds:
            raise StratificationError(
                f"class {c} has {idx.size} events, fewer than {folds} folds: "
                "some fold would be single-class"
            )
        idx = idx[rng.permutation(idx.size)]
        base, rem = divmod(idx.size, folds)
        pos = 0
        for f in range(folds):
            size = base + (1 if f < rem else 0)
            per_fold[f].append(idx[pos:pos + size])
            pos += size
    return [np.sort(np.concatenate(parts)) for parts in per_fold]


@dataclass
class EnergySlice:
    lo: float
    hi: float
    n_events: int
    per_rep_auc: list
    auc_mean: Optional[float]
    auc_std: Optional[float]
    per_rep_acc: list
    acc_mean: Optional[float]
    acc_std: Optional[float]
    note: str = ""


@dataclass
class CvReport:
    descriptor: Optional[dict]
    forest: dict
    folds: int
    repeats: int
    seed: int
    aggregation: str                 # "pooled" or "per_fold"
    per_rep_auc: list
    per_rep_acc: list
    auc_mean: float
    auc_std: Optional[float]         # None when repeats < 2
    acc_mean: float
    acc_std: Optional[float]
    roc: RocCurve                    # pooled over all repetitions
    energy_slices: list
    n_events: int
    n_positive: int
    # in-memory extras for downstream slicing/plots; not serialized
    oof: Optional[np.ndarray] = None        # (repeats, n) out-of-fold scores
    labels_used: Optional[np.ndarray] = None
    energies_used: Optional[np.ndarray] = None

    def summary_line(self) -> str:
        def pm(mean, std):
            return f"{mean:.4f}±{std:.4f}" if std is not None else f"{mean:.4f}±n/a"

        return f"AUC {pm(self.auc_mean, self.auc_std)}, ACC {pm(self.acc_mean, self.acc_std)}"


def _mean_std(values):
    vals = np.asarray(values, dtype=np.float64)
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if vals.size >= 2 else None
    return mean, std


def _energy_slices(oof, y, energies, edges):
    """Per-bin metrics over pooled out-of-fold scores, one AUC per repetition.

    Bins are [lo, hi) except the last, which is closed.  Empty or
    single-class bins are reported as absent (metrics None) with a note.
    """
    repeats = oof.shape[0]
    slices = []
    for i in range(len(edges) - 1):
        lo, hi = float(edges[i]), float(edges[i + 1])
        if i == len(edges) - 2:
            mask = (energies >= lo) & (energies <= hi)
        else:
            mask = (energies >= lo) & (energies < hi)
        n_in = int(mask.sum())
        if n_in == 0:
            slices.append(EnergySlice(lo, hi, 0, [], None, None, [], None, None,
                                      note="empty bin"))
            continue
        yb = y[mask]
        if yb.min() == yb.max():
            slices.append(EnergySlice(lo, hi, n_in, [], None, None, [], None, None,
                                      note="single-class bin"))
            continue
        rep_auc = [auc(oof[r][mask], yb) for r in range(repeats)]
        rep_acc = [accuracy(oof[r][mask], yb) for r in range(repeats)]
        am, asd = _mean_std(rep_auc)
        cm, csd = _mean_std(rep_acc)
        slices.append(EnergySlice(lo, hi, n_in, rep_auc, am, asd, rep_acc, cm, csd))
    return slices


def cross_validate(
    events: Optional[Sequence[Event]] = None,
    descriptor_cfg: Optional[DescriptorConfig] = None,
    forest_cfg: ForestConfig = ForestConfig(),
    folds: int = 5,
    repeats: int = 10,
    seed: int = 0,
    threads: int = 1,
    energy_bins: Optional[Sequence[float]] = None,
    per_fold: bool = False,
    features: Optional[FeatureTable] = None,
    fit_predict: Optional[Callable] = None,
    backend: Optional[str] = None,
) -> CvReport:
    """Repeated stratified k-fold CV of the descriptor+forest pipeline.

    Pass ``features`` to skip extraction (e.g. reusing one table across a
    tree-count sweep).  ``fit_predict(X_train, y_train, X_test, tag)`` can
    replace the forest entirely; used by tests to inject oracle scorers.
    """
    if features is None:
        if events is None or descriptor_cfg is None:
            raise ValueError("need either a FeatureTable or events + descriptor config")
        features = extract_table(list(events), descriptor_cfg)
    X = features.X
    y = features.labels.astype(np.uint8)
    energies = features.energies
    n = X.shape[0]
    if n == 0:
        raise MetricError("empty dataset")
    if y.min() == y.max():
        raise MetricError("cross-validation needs both classes present")

    oof = np.empty((repeats, n), dtype=np.float64)
    per_rep_auc, per_rep_acc = [], []
    for r in range(repeats):
        rng = _seeds.child_rng(seed, _seeds.CV_PARTITION, r)
        fold_sets = stratified_fold_indices(y, folds, rng)
        fold_auc, fold_acc = [], []
        for f_i, test_idx in enumerate(fold_sets):
            train_mask = np.ones(n, dtype=bool)
            train_mask[test_idx] = False
            train_idx = np.flatnonzero(train_mask)
            if fit_predict is not None:
                scores = fit_predict(X[train_idx], y[train_idx], X[test_idx], (r, f_i))
            else:
                fit_cfg = replace(
                    forest_cfg, seed=_seeds.child_seed(seed, _seeds.FIT, r, f_i)
                )
                model = train_forest(
                    X[train_idx], y[train_idx], fit_cfg, threads=threads,
                    backend=backend,
                )
                scores = model.predict_proba(X[test_idx], backend=backend)
            oof[r, test_idx] = np.asarray(scores, dtype=np.float64)
            if per_fold:
                fold_auc.append(auc(oof[r, test_idx], y[test_idx]))
                fold_acc.append(accuracy(oof[r, test_idx], y[test_idx]))
        if per_fold:
            per_rep_auc.append(float(np.mean(fold_auc)))
            per_rep_acc.append(float(np.mean(fold_acc)))
        else:
            per_rep_auc.append(auc(oof[r], y))
            per_rep_acc.append(accuracy(oof[r], y))

    auc_mean, auc_std = _mean_std(per_rep_auc)
    acc_mean, acc_std = _mean_std(per_rep_acc)
    pooled_roc = roc_curve(oof.ravel(), np.tile(y, repeats))
    slices = (
        _energy_slices(oof, y, energies, list(energy_bins))
        if energy_bins is not None
        else []
    )
    return CvReport(
        descriptor=(
            {
                "n_bins": features.config.n_bins,
                "radius": features.config.radius,
                "include_stats": features.config.include_stats,
            }
            if features.config is not None
            else None
        ),
        forest=forest_cfg.as_dict(),
        folds=folds,
        repeats=repeats,
        seed=seed,
        aggregation="per_fold" if per_fold else "pooled",
        per_rep_auc=per_rep_auc,
        per_rep_acc=per_rep_acc,
        auc_mean=auc_mean,
        auc_std=auc_std,
        acc_mean=acc_mean,
        acc_std=acc_std,
        roc=pooled_roc,
        energy_slices=slices,
        n_events=n,
        n_positive=int(y.sum()),
        oof=oof,
        labels_used=y,
        energies_used=energies,
    )


def noise_sweep(
    events: Sequence[Event],
    levels: Sequence[int],
    descriptor_cfg: DescriptorConfig,
    forest_cfg: ForestConfig,
    folds: int = 5,
    repeats: int = 10,
    seed: int = 0,
    threads: int = 1,
    shared_offset: bool = False,
    backend: Optional[str] = None,
):
    """Re-run the full CV on PIV-perturbed copies of the dataset.

    Both training and test events carry the same noise level, one perturbed
    dataset per level; level 0 is the identity, so its report matches the
    clean run.  Yields (level, CvReport) in the given order.
    """
    out = []
    for k in levels:
        perturbed = perturb_dataset(list(events), int(k), seed, shared=shared_offset)
        report = cross_validate(
            perturbed, descriptor_cfg, forest_cfg,
            folds=folds, repeats=repeats, seed=seed, threads=threads,
            backend=backend,
        )
        out.append((int(k), report))
    return out


def report_to_dict(report: CvReport) -> dict:
    obj = {
        "descriptor": report.descriptor,
        "forest": report.forest,
        "folds": report.folds,
        "repeats": report.repeats,
        "seed": report.seed,
        "aggregation": report.aggregation,
        "n_events": report.n_events,
        "n_positive": report.n_positive,
        "per_rep_auc": report.per_rep_auc,
        "per_rep_acc": report.per_rep_acc,
        "auc_mean": report.auc_mean,
        "auc_std": report.auc_std,
        "acc_mean": report.acc_mean,
        "acc_std": report.acc_std,
        "std_definition": "sample std (ddof=1) over repetition-level values",
        "roc": {
            "fpr": report.roc.fpr.tolist(),
            "tpr": report.roc.tpr.tolist(),
            "thresholds": [
                "inf" if np.isinf(t) else float(t) for t in report.roc.thresholds
            ],
        },
        "energy_slices": [
            {
                "lo": s.lo,
                "hi": s.hi,
                "n_events": s.n_events,
                "per_rep_auc": s.per_rep_auc,
                "auc_mean": s.auc_mean,
                "auc_std": s.auc_std,
                "per_rep_acc": s.per_rep_acc,
                "acc_mean": s.acc_mean,
                "acc_std": s.acc_std,
                "note": s.note,
            }
            for s in report.energy_slices
        ],
    }
    return obj


def report_to_json(report: CvReport) -> str:
    """Deterministic JSON (sorted keys, full-precision floats)."""
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2)
