"""Evaluation: ROC-AUC, per-class/micro F1, uncertainty-driven sample
rejection, corrupted-label enrichment analysis and the bootstrapped
training-set filtering driver.

Rejection is parameterized by rate (quantile of the predicted uncertainty)
rather than a raw threshold; the implied threshold is reported alongside.
Uncertainty ties are broken by ascending sample id everywhere, which keeps
every analysis reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import Dataset
from .errors import ConfigError, MetricUndefinedError, UnsupportedAnalysisError
from .network import TrainConfig, forward, train
from .sampling import EnsembleModel, ensemble_evidence

__all__ = [
    "Prediction",
    "RejectionPoint",
    "RejectionCurve",
    "EnrichmentReport",
    "BootstrapRound",
    "BootstrapReport",
    "predictions_from",
    "roc_auc",
    "f1_scores",
    "best_f1_threshold",
    "rejection_curve",
    "enrichment_report",
    "bootstrap",
    "write_predictions_csv",
    "read_predictions_csv",
    "write_rejection_csv",
    "write_bootstrap_csv",
    "format_metrics_summary",
]

REJECTION_CSV_HEADER = "rate,threshold,auc,f1_pos,f1_neg,micro_f1,retained,enrichment"
BOOTSTRAP_CSV_HEADER = "fraction,removed,auc,f1_pos,f1_neg"


@dataclass(frozen=True)
class Prediction:
    """Per-sample model output: probability, uncertainty and ground truth."""

    id: int
    p_pos: float
    uncertainty: float
    label: int
    noise_flag: bool | None = None


def predictions_from(model, ds: Dataset) -> list[Prediction]:
    """Deterministic per-sample predictions for a model or ensemble."""
    if isinstance(model, EnsembleModel):
        evidence = ensemble_evidence(model, ds.features)
    else:
        evidence = forward(model.params, ds.features)
    alpha = evidence[:, 0] + 1.0
    beta = evidence[:, 1] + 1.0
    total = alpha + beta
    p_pos = alpha / total
    u_hat = 2.0 / total
    flags = ds.noise_flags
    return [
        Prediction(
            int(ds.ids[i]),
            float(p_pos[i]),
            float(u_hat[i]),
            int(ds.labels[i]),
            None if flags is None else bool(flags[i]),
        )
        for i in range(len(ds))
    ]


def _score_label_arrays(preds) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray([p.p_pos for p in preds], dtype=float)
    labels = np.asarray([p.label for p in preds], dtype=int)
    return scores, labels


def _auc_from_scores(scores: np.ndarray, labels: np.ndarray) -> float:
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricUndefinedError("ROC-AUC needs at least one sample of each class")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # Midranks: every member of a tie group receives the group's average rank.
    _, inverse, counts = np.unique(sorted_scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    group_rank = (starts + ends) / 2.0
    ranks = np.empty(len(scores))
    ranks[order] = group_rank[inverse]
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_auc(preds) -> float:
    """Rank-based ROC-AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores, labels = _score_label_arrays(preds)
    return _auc_from_scores(scores, labels)


def _f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def f1_scores(preds, decision_threshold: float = 0.5):
    """(f1_pos, f1_neg, micro_f1) with positive predicted iff p_pos >= threshold.

    Micro-F1 pools TP/FP/FN over both classes; for complementary binary
    predictions this equals plain accuracy.
    """
    if not len(preds):
        raise MetricUndefinedError("F1 needs at least one prediction")
    scores, labels = _score_label_arrays(preds)
    pred_pos = scores >= decision_threshold
    actual_pos = labels == 1
    tp = int(np.sum(pred_pos & actual_pos))
    fp = int(np.sum(pred_pos & ~actual_pos))
    fn = int(np.sum(~pred_pos & actual_pos))
    tn = int(np.sum(~pred_pos & ~actual_pos))
    f1_pos = _f1_from_counts(tp, fp, fn)
    f1_neg = _f1_from_counts(tn, fn, fp)
    micro = _f1_from_counts(tp + tn, fp + fn, fn + fp)
    return f1_pos, f1_neg, micro


def best_f1_threshold(preds) -> float:
    """Threshold maximizing the average of the per-class F1 scores.

    Comparison-run helper mirroring a working-point search; the default
    operating point elsewhere stays fixed at 0.5.
    """
    scores, _ = _score_label_arrays(preds)
    candidates = np.unique(scores)
    best_t, best_avg = 0.5, -1.0
    for t in candidates:
        f1_pos, f1_neg, _ = f1_scores(preds, float(t))
        avg = 0.5 * (f1_pos + f1_neg)
        if avg > best_avg:
            best_avg, best_t = avg, float(t)
    return best_t


@dataclass(frozen=True)
class RejectionPoint:
    rate: float
    threshold: float
    auc: float
    f1_pos: float
    f1_neg: float
    micro_f1: float
    retained: int
    enrichment: float


@dataclass(frozen=True)
class RejectionCurve:
    points: tuple

    def __iter__(self):
        return iter(self.points)


def _ceil_count(fraction: float, n: int) -> int:
    if fraction <= 0.0:
        return 0
    # Slack absorbs float fuzz in fraction * n for "exact" products.
    return int(math.ceil(fraction * n - 1e-9))


def _uncertainty_order(preds) -> np.ndarray:
    ids = np.asarray([p.id for p in preds])
    u = np.asarray([p.uncertainty for p in preds])
    # Descending uncertainty, ties broken by ascending id.
    return np.lexsort((ids, -u))


def rejection_curve(preds, rates) -> RejectionCurve:
    """Metrics on the retained set after rejecting the most-uncertain samples.

    For each rate r the ceil(r * n) highest-uncertainty predictions are
    rejected. Points whose retained set has fewer than two samples or a
    single class carry NaN metrics; enrichment is the corrupted-label
    fraction among rejected over the fraction among all (NaN without flags
    or without rejections).
    """
    rates = [float(r) for r in rates]
    if any(not 0.0 <= r < 1.0 for r in rates):
        raise ConfigError("rejection rates must lie in [0, 1)")
    if any(b < a for a, b in zip(rates, rates[1:])):
        raise ConfigError("rejection rates must be sorted ascending")
    if not len(preds):
        raise MetricUndefinedError("rejection curve needs predictions")
    n = len(preds)
    order = _uncertainty_order(preds)
    u = np.asarray([p.uncertainty for p in preds])
    flags = None
    if all(p.noise_flag is not None for p in preds):
        flags = np.asarray([p.noise_flag for p in preds], dtype=bool)
    overall_flag_frac = float(flags.mean()) if flags is not None else float("nan")

    points = []
    for rate in rates:
        k = _ceil_count(rate, n)
        retained_idx = order[k:]
        threshold = float(u[order[k]]) if k < n else 0.0
        retained = [preds[i] for i in retained_idx]
        auc = f1_pos = f1_neg = micro = float("nan")
        if len(retained) >= 2 and len({p.label for p in retained}) == 2:
            auc = roc_auc(retained)
            f1_pos, f1_neg, micro = f1_scores(retained)
        enrichment = float("nan")
        if flags is not None and k > 0 and overall_flag_frac > 0.0:
            rejected_flag_frac = float(flags[order[:k]].mean())
            enrichment = rejected_flag_frac / overall_flag_frac
        points.append(
            RejectionPoint(rate, threshold, auc, f1_pos, f1_neg, micro, len(retained), enrichment)
        )
    return RejectionCurve(tuple(points))


@dataclass(frozen=True)
class EnrichmentReport:
    """Uncertainty split by corruption flag plus the per-batch flagged share.

    ``batch_flagged_fraction[i]`` is the flagged fraction within the i-th
    batch of 5% of samples, walking from most to least uncertain.
    """

    mean_u_clean: float
    mean_u_flagged: float
    batch_flagged_fraction: tuple
    batch_size: int


def enrichment_report(preds) -> EnrichmentReport:
    if not len(preds) or any(p.noise_flag is None for p in preds):
        raise UnsupportedAnalysisError("enrichment analysis needs noise flags")
    flags = np.asarray([p.noise_flag for p in preds], dtype=bool)
    u = np.asarray([p.uncertainty for p in preds])
    if not flags.any():
        raise UnsupportedAnalysisError("no flagged samples")
    if flags.all():
        raise UnsupportedAnalysisError("no clean samples")
    order = _uncertainty_order(preds)
    batch = _ceil_count(0.05, len(preds))
    fractions = tuple(
        float(flags[order[start : start + batch]].mean())
        for start in range(0, len(preds), batch)
    )
    return EnrichmentReport(
        mean_u_clean=float(u[~flags].mean()),
        mean_u_flagged=float(u[flags].mean()),
        batch_flagged_fraction=fractions,
        batch_size=batch,
    )


@dataclass(frozen=True)
class BootstrapRound:
    removal_fraction: float
    removed_ids: tuple
    auc: float
    f1_pos: float
    f1_neg: float


@dataclass(frozen=True)
class BootstrapReport:
    rounds: tuple

    def __iter__(self):
        return iter(self.rounds)


def _test_metrics(model, test_ds: Dataset):
    preds = predictions_from(model, test_ds)
    try:
        auc = roc_auc(preds)
    except MetricUndefinedError:
        auc = float("nan")
    f1_pos, f1_neg, _ = f1_scores(preds)
    return auc, f1_pos, f1_neg


def bootstrap(
    train_ds: Dataset,
    test_ds: Dataset,
    cfg: TrainConfig,
    fractions,
    val_ds: Dataset | None = None,
) -> BootstrapReport:
    """Retrain after removing the most-uncertain training samples.

    A first model trained on the full data ranks every training sample by
    its eval-mode uncertainty; each round then drops the top ceil(f * N)
    of that fixed ranking (so removal sets are nested across fractions) and
    retrains from scratch with the same config and seed. The report always
    leads with the full-data baseline round.
    """
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f < 1.0 for f in fractions):
        raise ConfigError("removal fractions must lie in [0, 1)")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ConfigError("removal fractions must be strictly increasing")
    base_model = train(train_ds, val_ds, cfg)
    base_auc, base_f1p, base_f1n = _test_metrics(base_model, test_ds)
    train_preds = predictions_from(base_model, train_ds)
    order = _uncertainty_order(train_preds)
    n = len(train_ds)

    rounds = [BootstrapRound(0.0, (), base_auc, base_f1p, base_f1n)]
    for fraction in fractions:
        if fraction == 0.0:
            continue
        k = _ceil_count(fraction, n)
        if k >= n:
            raise ConfigError(f"removal fraction {fraction} leaves no training data")
        removed_ids = tuple(sorted(int(train_ds.ids[i]) for i in order[:k]))
        keep = np.sort(order[k:])
        model = train(train_ds.subset(keep), val_ds, cfg)
        auc, f1_pos, f1_neg = _test_metrics(model, test_ds)
        rounds.append(BootstrapRound(fraction, removed_ids, auc, f1_pos, f1_neg))
    return BootstrapReport(tuple(rounds))


def _fmt(x: float) -> str:
    return repr(float(x))


def write_predictions_csv(preds, path) -> None:
    path = Path(path)
    with_flags = all(p.noise_flag is not None for p in preds) and len(preds) > 0
    header = "id,p_pos,uncertainty,label" + (",noise_flag" if with_flags else "")
    rows = [header]
    for p in preds:
        cells = [str(p.id), _fmt(p.p_pos), _fmt(p.uncertainty), str(p.label)]
        if with_flags:
            cells.append(str(int(p.noise_flag)))
        rows.append(",".join(cells))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_predictions_csv(path) -> list[Prediction]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty predictions file")
    header = lines[0].split(",")
    if header[:4] != ["id", "p_pos", "uncertainty", "label"]:
        raise ConfigError(f"{path}: unexpected predictions header {header!r}")
    with_flags = len(header) == 5 and header[4] == "noise_flag"
    preds = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        try:
            preds.append(
                Prediction(
                    int(cells[0]),
                    float(cells[1]),
                    float(cells[2]),
                    int(cells[3]),
                    bool(int(cells[4])) if with_flags else None,
                )
            )
        except (ValueError, IndexError):
            raise ConfigError(f"{path}:{lineno}: malformed prediction row") from None
    return preds


def write_rejection_csv(curve: RejectionCurve, path) -> None:
    rows = [REJECTION_CSV_HEADER]
    for pt in curve:
        rows.append(
            ",".join(
                [
                    _fmt(pt.rate),
                    _fmt(pt.threshold),
                    _fmt(pt.auc),
                    _fmt(pt.f1_pos),
                    _fmt(pt.f1_neg),
                    _fmt(pt.micro_f1),
                    str(pt.retained),
                    _fmt(pt.enrichment),
                ]
            )
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_bootstrap_csv(report: BootstrapReport, path) -> None:
    rows = [BOOTSTRAP_CSV_HEADER]
    for rd in report:
        rows.append(
            ",".join(
                [
                    _fmt(rd.removal_fraction),
                    str(len(rd.removed_ids)),
                    _fmt(rd.auc),
                    _fmt(rd.f1_pos),
                    _fmt(rd.f1_neg),
                ]
            )
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def _show(x: float) -> str:
    return "undefined" if math.isnan(x) else f"{x:.6f}"


def format_metrics_summary(preds, decision_threshold: float = 0.5) -> str:
    """Line-oriented whole-set summary for standard output."""
    try:
        auc = roc_auc(preds)
    except MetricUndefinedError:
        auc = float("nan")
    f1_pos, f1_neg, micro = f1_scores(preds, decision_threshold)
    mean_u = float(np.mean([p.uncertainty for p in preds]))
    lines = [
        f"samples {len(preds)}",
        f"auc {_show(auc)}",
        f"f1_pos {_show(f1_pos)}",
        f"f1_neg {_show(f1_neg)}",
        f"micro_f1 {_show(micro)}",
        f"mean_uncertainty {_show(mean_u)}",
    ]
    return "\n".join(lines)
