"""Labeled-set evaluation: PR curve, AUPR, F1-max threshold, confusion counts.

Anomalous is the positive class throughout.  AUPR uses the average-precision
step rule over atomic tie groups (no interpolation); candidate thresholds are
the distinct observed scores with the inclusive predict rule s >= tau, so the
F1 maximum is always attained at an observed score.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import DegenerateInputError, InvalidArgumentError

LABELS = ("normal", "anomalous")


@dataclasses.dataclass(frozen=True)
class LabeledScore:
    score: float
    label: str          # "normal" | "anomalous"
    source: str = ""


@dataclasses.dataclass(frozen=True)
class Metrics:
    aupr: float
    f1_max: float
    tau_star: float
    recall_at_tau: float
    precision_at_tau: float
    positives: int
    negatives: int

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def _validate(scored) -> tuple[np.ndarray, np.ndarray]:
    scored = list(scored)
    if not scored:
        raise DegenerateInputError("no scored items to evaluate")
    for item in scored:
        if item.label not in LABELS:
            raise InvalidArgumentError(f"unknown label {item.label!r} (need normal/anomalous)")
        if not np.isfinite(item.score):
            raise InvalidArgumentError(f"non-finite score for {item.source or 'item'}")
    scores = np.array([s.score for s in scored], dtype=np.float64)
    positive = np.array([s.label == "anomalous" for s in scored], dtype=bool)
    if positive.all() or not positive.any():
        raise DegenerateInputError(
            "evaluation needs at least one anomalous and one normal item"
        )
    return scores, positive


def _tie_groups(scores: np.ndarray, positive: np.ndarray):
    """Cumulative (threshold, TP, FP) after each distinct score, descending."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos = positive[order]
    boundaries = np.flatnonzero(np.diff(s)) + 1
    ends = np.append(boundaries, s.size)
    tp_cum = np.cumsum(pos)
    fp_cum = np.cumsum(~pos)
    return [(float(s[e - 1]), int(tp_cum[e - 1]), int(fp_cum[e - 1])) for e in ends]


def pr_curve(scored) -> list[dict]:
    """PR points at every distinct score threshold, descending."""
    scores, positive = _validate(scored)
    p_total = int(positive.sum())
    points = []
    for tau, tp, fp in _tie_groups(scores, positive):
        points.append({
            "threshold": tau,
            "precision": tp / (tp + fp),
            "recall": tp / p_total,
        })
    return points


def compute_metrics(scored) -> Metrics:
    scores, positive = _validate(scored)
    p_total = int(positive.sum())
    n_total = int(scores.size - p_total)
    aupr = 0.0
    prev_recall = 0.0
    best_f1 = -1.0
    best = None
    for tau, tp, fp in _tie_groups(scores, positive):
        precision = tp / (tp + fp)
        recall = tp / p_total
        aupr += (recall - prev_recall) * precision
        prev_recall = recall
        fn = p_total - tp
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if f1 > best_f1:  # strict: ties keep the earlier (higher) threshold
            best_f1 = f1
            best = (tau, recall, precision)
    tau_star, recall_at, precision_at = best
    return Metrics(
        aupr=float(aupr),
        f1_max=float(best_f1),
        tau_star=tau_star,
        recall_at_tau=recall_at,
        precision_at_tau=precision_at,
        positives=p_total,
        negatives=n_total,
    )


def apply_threshold(scored, tau: float) -> dict:
    """Confusion counts and rates at threshold ``tau`` (predict positive iff s >= tau).

    Precision is None when nothing is predicted positive; recall is None when
    there are no positives at all.
    """
    scored = list(scored)
    tp = fp = fn = tn = 0
    for item in scored:
        if item.label not in LABELS:
            raise InvalidArgumentError(f"unknown label {item.label!r}")
        predicted = item.score >= tau
        actual = item.label == "anomalous"
        if predicted and actual:
            tp += 1
        elif predicted:
            fp += 1
        elif actual:
            fn += 1
        else:
            tn += 1
    predicted_pos = tp + fp
    positives = tp + fn
    return {
        "tau": float(tau),
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
        "recall": tp / positives if positives else None,
        "precision": tp / predicted_pos if predicted_pos else None,
    }
