"""Ground-truth dynamic label derivation and label-quality evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GT_RESIDUAL_THRESHOLD = 0.05  # meters, residual-motion gate for GT dynamic labels


@dataclass
class LabelQualityReport:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    accuracy: float
    dynamic_iou: float
    pred_dyn_ratio: float
    gt_dyn_ratio: float
    degenerate: bool = False  # some zero-denominator metric was defined as 0

    def to_json(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "accuracy": self.accuracy, "dynamic_iou": self.dynamic_iou,
            "pred_dyn_ratio": self.pred_dyn_ratio,
            "gt_dyn_ratio": self.gt_dyn_ratio,
            "degenerate": self.degenerate,
        }


def gt_dynamic_mask(gt_flow: np.ndarray, ego_flow: np.ndarray,
                    threshold: float = GT_RESIDUAL_THRESHOLD) -> np.ndarray:
    """Dynamic iff the residual between ground-truth and ego-induced flow
    strictly exceeds the threshold."""
    gt_flow = np.atleast_2d(np.asarray(gt_flow, float))
    ego_flow = np.atleast_2d(np.asarray(ego_flow, float))
    if gt_flow.shape != ego_flow.shape:
        raise ValueError("flow field length mismatch")
    return np.linalg.norm(gt_flow - ego_flow, axis=1) > threshold


def report_from_counts(tp: int, fp: int, tn: int, fn: int) -> LabelQualityReport:
    total = tp + fp + tn + fn
    degenerate = False

    def ratio(num, den):
        nonlocal degenerate
        if den == 0:
            degenerate = True
            return 0.0
        return num / den

    precision = ratio(tp, tp + fp)
    recall = ratio(tp, tp + fn)
    f1 = ratio(2 * tp, 2 * tp + fp + fn)
    accuracy = ratio(tp + tn, total)
    iou = ratio(tp, tp + fp + fn)
    if fp == 0 and fn == 0 and tp == 0:
        # all-static prediction matching an all-static ground truth
        accuracy = 1.0 if total > 0 else 0.0
    return LabelQualityReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=precision, recall=recall, f1=f1,
        accuracy=accuracy, dynamic_iou=iou,
        pred_dyn_ratio=ratio(tp + fp, total),
        gt_dyn_ratio=ratio(tp + fn, total),
        degenerate=degenerate,
    )


def evaluate_labels(pred_mask: np.ndarray, gt_mask: np.ndarray) -> LabelQualityReport:
    pred = np.asarray(pred_mask, bool).reshape(-1)
    gt = np.asarray(gt_mask, bool).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError("prediction/ground-truth length mismatch")
    tp = int(np.sum(pred & gt))
    fp = int(np.sum(pred & ~gt))
    fn = int(np.sum(~pred & gt))
    tn = int(np.sum(~pred & ~gt))
    return report_from_counts(tp, fp, tn, fn)


def evaluate_frames(pairs, average: str = "micro") -> LabelQualityReport:
    """Evaluate a sequence of (pred, gt) frame pairs.

    Micro pools confusion counts over all frames (the default, single-number
    presentation); macro averages per-frame metrics.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no frames to evaluate")
    if average == "micro":
        tp = fp = tn = fn = 0
        for pred, gt in pairs:
            r = evaluate_labels(pred, gt)
            tp += r.tp; fp += r.fp; tn += r.tn; fn += r.fn
        return report_from_counts(tp, fp, tn, fn)
    if average == "macro":
        reports = [evaluate_labels(p, g) for p, g in pairs]
        mean = lambda xs: float(np.mean(xs))
        return LabelQualityReport(
            tp=sum(r.tp for r in reports), fp=sum(r.fp for r in reports),
            tn=sum(r.tn for r in reports), fn=sum(r.fn for r in reports),
            precision=mean([r.precision for r in reports]),
            recall=mean([r.recall for r in reports]),
            f1=mean([r.f1 for r in reports]),
            accuracy=mean([r.accuracy for r in reports]),
            dynamic_iou=mean([r.dynamic_iou for r in reports]),
            pred_dyn_ratio=mean([r.pred_dyn_ratio for r in reports]),
            gt_dyn_ratio=mean([r.gt_dyn_ratio for r in reports]),
            degenerate=any(r.degenerate for r in reports),
        )
    raise ValueError("average must be 'micro' or 'macro'")


CSV_COLUMNS = ["pred_dyn_ratio", "accuracy", "precision", "recall", "f1",
               "dynamic_iou", "gt_dyn_ratio"]


def report_csv_row(report: LabelQualityReport) -> list[str]:
    d = report.to_json()
    return [f"{d[c]:.6f}" for c in CSV_COLUMNS]
