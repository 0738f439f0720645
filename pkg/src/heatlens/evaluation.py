"""Localisation and prediction metrics, aggregation, and report files."""

from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, ShapeError
from .segmentation import SegmentationMask

RECORD_COLUMNS = ("instance_id", "class_index", "method", "tau", "iou", "degenerate")
WEIGHT_SCHEME = "per-class positive-instance count"


def _mask_array(m) -> np.ndarray:
    return (m.mask if isinstance(m, SegmentationMask) else np.asarray(m)).astype(bool)


def iou_counts(pred, gt) -> tuple[int, int]:
    p, g = _mask_array(pred), _mask_array(gt)
    if p.shape != g.shape:
        raise ShapeError(f"mask shapes differ: predicted {p.shape}, ground truth {g.shape}")
    return int(np.count_nonzero(p & g)), int(np.count_nonzero(p | g))


def iou(pred, gt) -> float:
    """Intersection over union of two binary masks.

    Two empty masks score 0; use :func:`iou_counts` to tell that case
    apart (union 0).
    """
    inter, union = iou_counts(pred, gt)
    return inter / union if union else 0.0


# ---------------------------------------------------------------------------
# prediction metrics


def _check_binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if not np.all((y == 0) | (y == 1)):
        raise DataError("labels must be 0 or 1")
    return s, y.astype(bool)


def auroc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic (ties get mid-ranks)."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        only = "negative (0)" if n_pos == 0 else "positive (1)"
        raise DataError(f"AUROC undefined: every label is {only}")
    ranks = rankdata(s, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Sweeps thresholds from the highest score down, summing
    precision * (recall increment); tied scores enter together.
    """
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise DataError("AUPRC undefined: every label is negative (0)")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    last = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = tp[last]
    precision = tp / (last + 1)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def prediction_metrics(probs: np.ndarray, labels: np.ndarray, class_names: Sequence[str] | None = None) -> dict:
    """Per-class AUROC/AUPRC and positive-count weighted averages.

    Classes whose labels are all one value are listed under ``excluded``
    and left out of the averages.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    k = probs.shape[1]
    names = list(class_names) if class_names else [str(c) for c in range(k)]
    per_class, excluded = {}, {}
    for c in range(k):
        try:
            per_class[names[c]] = {
                "auroc": auroc(probs[:, c], labels[:, c]),
                "auprc": auprc(probs[:, c], labels[:, c]),
                "positives": int(labels[:, c].sum()),
            }
        except DataError as exc:
            excluded[names[c]] = str(exc)
    weights = np.array([v["positives"] for v in per_class.values()], dtype=np.float64)
    out = {"per_class": per_class, "excluded": excluded, "weight_scheme": WEIGHT_SCHEME}
    if per_class and weights.sum() > 0:
        for metric in ("auroc", "auprc"):
            vals = np.array([v[metric] for v in per_class.values()])
            out[f"weighted_{metric}"] = float(np.sum(weights * vals) / weights.sum())
    return out


# ---------------------------------------------------------------------------
# IoU records and aggregation


@dataclass(frozen=True, order=True)
class IoURecord:
    instance_id: str
    class_index: int
    method: str
    tau: float
    iou: float
    degenerate: bool = False

    def __post_init__(self):
        if not 0.0 <= self.iou <= 1.0:
            raise DataError(f"IoU {self.iou} outside [0, 1]")


def score_pair(instance_id: str, class_index: int, method: str, tau: float, pred, gt) -> IoURecord:
    inter, union = iou_counts(pred, gt)
    return IoURecord(instance_id, class_index, method, float(tau), inter / union if union else 0.0, union == 0)


def summarize(values: Iterable[float]) -> dict:
    """mean/median/quartiles/min/max with numpy's linear-interpolation quantiles."""
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return {"count": 0, "mean": None, "median": None, "q1": None, "q3": None, "min": None, "max": None}
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {
        "count": int(v.size),
        "mean": float(v.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(v.min()),
        "max": float(v.max()),
    }


@dataclass
class EvalReport:
    records: list[IoURecord]
    per_class: dict  # {method: {class_index: stats}}
    per_method: dict  # {method: stats over all classes}
    prediction: dict | None = None
    class_names: list[str] | None = None

    def summary(self) -> dict:
        return {
            "weight_scheme": WEIGHT_SCHEME,
            "degenerate_policy": "empty-vs-empty pairs score 0, are counted, and are excluded from the statistics",
            "record_count": len(self.records),
            "per_method": self.per_method,
            "per_class": {m: {str(c): s for c, s in d.items()} for m, d in self.per_class.items()},
            "prediction": self.prediction,
            "class_names": self.class_names,
        }


def aggregate(records: Sequence[IoURecord], prediction: dict | None = None, class_names=None) -> EvalReport:
    """Per-(method, class) and per-method IoU statistics.

    Degenerate records are counted but left out of the statistics.
    """
    if not records:
        raise DataError("aggregate needs at least one IoU record")
    records = sorted(records)
    groups: dict = defaultdict(lambda: defaultdict(list))
    degen: dict = defaultdict(lambda: defaultdict(int))
    for r in records:
        values = groups[r.method][r.class_index]
        if r.degenerate:
            degen[r.method][r.class_index] += 1
        else:
            values.append(r.iou)
    per_class, per_method = {}, {}
    for method in sorted(groups):
        per_class[method] = {}
        pooled = []
        for c in sorted(groups[method]):
            stats = summarize(groups[method][c])
            stats["degenerate"] = degen[method][c]
            per_class[method][c] = stats
            pooled += groups[method][c]
        per_method[method] = summarize(pooled)
        per_method[method]["degenerate"] = sum(degen[method].values())
    return EvalReport(list(records), per_class, per_method, prediction, class_names)


# ---------------------------------------------------------------------------
# report files


def fmt(x: float) -> str:
    return f"{x:.9g}"


def _round_floats(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def records_csv(records: Sequence[IoURecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in sorted(records):
        w.writerow([r.instance_id, r.class_index, r.method, fmt(r.tau), fmt(r.iou), int(r.degenerate)])
    return buf.getvalue()


def read_records_csv(path: str | Path) -> list[IoURecord]:
    with open(path, newline="") as fh:
        return [
            IoURecord(row["instance_id"], int(row["class_index"]), row["method"], float(row["tau"]), float(row["iou"]), row["degenerate"] == "1")
            for row in csv.DictReader(fh)
        ]


def dumps_json(obj) -> str:
    """Canonical JSON: sorted keys, floats at 9 significant digits."""
    return json.dumps(_round_floats(obj), indent=2, sort_keys=True) + "\n"


def write_report(report: EvalReport, out_dir: str | Path, stem: str = "iou", extra: dict | None = None) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}_records.csv"
    json_path = out / f"{stem}_summary.json"
    csv_path.write_text(records_csv(report.records))
    json_path.write_text(dumps_json({**report.summary(), **(extra or {})}))
    return csv_path, json_path
