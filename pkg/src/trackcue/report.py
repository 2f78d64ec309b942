"""Run-report serialization, sweep CSV output and matplotlib figures.

Reports embed a content hash computed with timing fields stripped, so reruns
with identical inputs are byte-comparable after deleting the timings block.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import CSV_COLUMNS  # noqa: E402


def _hashable(report: dict) -> dict:
    out = {k: v for k, v in report.items() if k not in ("timings", "report_hash")}
    return out


def report_hash(report: dict) -> str:
    blob = json.dumps(_hashable(report), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_report(report: dict, path) -> str:
    report = dict(report)
    report["report_hash"] = report_hash(report)
    with open(path, "w", newline="\n") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report["report_hash"]


def load_report(path) -> dict:
    with open(path) as fh:
        report = json.load(fh)
    stored = report.get("report_hash")
    if stored is not None and stored != report_hash(report):
        raise ValueError(f"{path}: report hash mismatch")
    return report


SWEEP_CSV_COLUMNS = ["axis", "value"] + CSV_COLUMNS + ["tp", "fp", "tn", "fn"]


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_CSV_COLUMNS)
        for r in rows:
            w.writerow([r["axis"], r["value"]]
                       + [f"{r[c]:.6f}" for c in CSV_COLUMNS]
                       + [r["tp"], r["fp"], r["tn"], r["fn"]])


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            row = {"axis": rec["axis"], "value": float(rec["value"])}
            row.update({c: float(rec[c]) for c in CSV_COLUMNS})
            row.update({c: int(rec[c]) for c in ("tp", "fp", "tn", "fn")})
            rows.append(row)
    return rows


def plot_sweep(rows: list[dict], path) -> None:
    """Precision/recall/F1 curves along the sweep axis."""
    if not rows:
        raise ValueError("no sweep rows to plot")
    axis = rows[0]["axis"]
    xs = [r["value"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for metric, marker in (("precision", "o"), ("recall", "s"), ("f1", "^")):
        ax.plot(xs, [r[metric] for r in rows], marker=marker, label=metric)
    ax.set_xlabel(axis)
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    ax.set_title(f"label quality vs {axis}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_label_quality(named_reports: list[tuple[str, dict]], path) -> None:
    """Grouped precision/recall/F1 bars, one group per labeled report."""
    if not named_reports:
        raise ValueError("nothing to plot")
    names = [n for n, _ in named_reports]
    metrics = ("precision", "recall", "f1")
    x = range(len(names))
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(6, 1.4 * len(names)), 4))
    for j, metric in enumerate(metrics):
        vals = [r[metric] for _, r in named_reports]
        ax.bar([i + (j - 1) * width for i in x], vals, width, label=metric)
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    ax.set_title("label quality")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_frame_dynamic_counts(pred_masks: dict, gt_masks: dict, path) -> None:
    """Per-frame predicted vs ground-truth dynamic point counts."""
    frames = sorted(pred_masks)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(frames, [int(pred_masks[t].sum()) for t in frames], marker="o",
            label="predicted")
    if gt_masks:
        ax.plot(frames, [int(gt_masks[t].sum()) for t in frames], marker="s",
                label="ground truth")
    ax.set_xlabel("frame")
    ax.set_ylabel("dynamic points")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_run_outputs(out_dir, report: dict, pred_masks=None, gt_masks=None):
    """Standard artifact set for a pipeline run: report.json, quality CSV,
    bar figure, and per-frame count figure when masks are available."""
    os.makedirs(out_dir, exist_ok=True)
    write_report(report, os.path.join(out_dir, "report.json"))
    metrics = report.get("metrics") or {}
    if metrics:
        named = sorted(metrics.items())
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["labels"] + CSV_COLUMNS)
            for name, m in named:
                w.writerow([name] + [f"{m[c]:.6f}" for c in CSV_COLUMNS])
        plot_label_quality(named, os.path.join(out_dir, "label_quality.png"))
    if pred_masks is not None:
        plot_frame_dynamic_counts(pred_masks, gt_masks or {},
                                  os.path.join(out_dir, "dynamic_counts.png"))
