"""Detection metrics: COCO-style mAP/mAR, sweeps, per-class reports, F-beta.

AP uses 101-point interpolation over IoU thresholds 0.50:0.05:0.95 with
at most 100 detections per (image, class); AR is the final recall under
the same cap, both averaged over classes with equal weight.  Classes with
no ground truth are excluded from averaging rather than scored zero.
Matching is greedy in score order: each detection takes the unmatched
same-class ground truth with the highest IoU at or above the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasetio import Detection, GroundTruth
from .errors import ValidationError
from .serial import digest_of

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
DEFAULT_SWEEP: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
MAX_DETS = 100


def iou(a, b) -> float:
    """Intersection over union of (x, y, w, h) boxes; 0 when the union is empty."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _sorted_dets(dets: list[Detection]) -> list[Detection]:
    # stable: ties keep input order
    return sorted(dets, key=lambda d: -d.score)


def match(dets: list[Detection], gts: list[GroundTruth], iou_threshold: float) -> list[int]:
    """Greedy matching; ``dets`` must already be sorted by descending score.

    Returns, per detection, the index into ``gts`` it matched or -1.
    Each ground truth is consumed at most once; candidates must share the
    detection's image and class.
    """
    taken = [False] * len(gts)
    out = []
    for d in dets:
        best = -1
        best_v = -1.0
        for j, g in enumerate(gts):
            if taken[j] or g.image_id != d.image_id or g.category_id != d.category_id:
                continue
            v = iou(d.bbox, g.bbox)
            if v >= iou_threshold and v > best_v:
                best = j
                best_v = v
        if best >= 0:
            taken[best] = True
        out.append(best)
    return out


def _truncate_per_image(dets: list[Detection], max_dets: int) -> list[Detection]:
    """Keep the top-scoring ``max_dets`` per image, preserving score order."""
    kept = []
    counts: dict = {}
    for d in dets:
        c = counts.get(d.image_id, 0)
        if c < max_dets:
            kept.append(d)
            counts[d.image_id] = c + 1
    return kept


def _class_curve(dets: list[Detection], gts: list[GroundTruth], iou_threshold: float, max_dets: int):
    """True-positive flags in score order plus the GT count, one class."""
    dets = _truncate_per_image(_sorted_dets(dets), max_dets)
    matches = match(dets, gts, iou_threshold)
    tp = np.array([m >= 0 for m in matches], dtype=np.float64)
    return tp, len(gts)


def average_precision(dets: list[Detection], gts: list[GroundTruth], iou_threshold: float,
                      category_id: int, max_dets: int = MAX_DETS) -> float | None:
    """101-point interpolated AP for one class; None when the class has no GT."""
    gts_c = [g for g in gts if g.category_id == category_id]
    if not gts_c:
        return None
    dets_c = [d for d in dets if d.category_id == category_id]
    tp, n_gt = _class_curve(dets_c, gts_c, iou_threshold, max_dets)
    if len(tp) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(tp) + 1)
    recall = cum_tp / n_gt
    # precision envelope: max precision at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    indices = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(indices < len(envelope), envelope[np.minimum(indices, len(envelope) - 1)], 0.0)
    return float(sampled.mean())


def class_recall(dets: list[Detection], gts: list[GroundTruth], iou_threshold: float,
                 category_id: int, max_dets: int = MAX_DETS) -> float | None:
    gts_c = [g for g in gts if g.category_id == category_id]
    if not gts_c:
        return None
    dets_c = [d for d in dets if d.category_id == category_id]
    tp, n_gt = _class_curve(dets_c, gts_c, iou_threshold, max_dets)
    return float(tp.sum() / n_gt)


@dataclass(frozen=True)
class EvalReport:
    map: float
    mar: float
    per_class: tuple[tuple[int, float, float], ...]  # (category_id, AP, AR)
    settings_digest: str

    def to_dict(self) -> dict:
        return {
            "mAP": self.map,
            "mAR": self.mar,
            "per_class": [{"category_id": c, "AP": ap, "AR": ar} for c, ap, ar in self.per_class],
            "settings_digest": self.settings_digest,
        }


def evaluate(
    dets: list[Detection],
    gts: list[GroundTruth],
    confidence_threshold: float = 0.0,
    iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS,
    max_dets: int = MAX_DETS,
) -> EvalReport:
    """Score detections against ground truth.

    Detections with score below the confidence threshold are dropped
    before matching; a threshold of 0 keeps everything.
    """
    kept = [d for d in dets if d.score >= confidence_threshold]
    classes = sorted({g.category_id for g in gts})
    if not classes:
        raise ValidationError("no classes with ground truth; nothing to evaluate")
    per_class = []
    for c in classes:
        aps = [average_precision(kept, gts, t, c, max_dets) for t in iou_thresholds]
        ars = [class_recall(kept, gts, t, c, max_dets) for t in iou_thresholds]
        per_class.append((c, float(np.mean([a for a in aps if a is not None])),
                          float(np.mean([r for r in ars if r is not None]))))
    mean_ap = float(np.mean([ap for _c, ap, _r in per_class]))
    mean_ar = float(np.mean([ar for _c, _a, ar in per_class]))
    digest = digest_of(
        {
            "confidence_threshold": confidence_threshold,
            "iou_thresholds": list(iou_thresholds),
            "max_dets": max_dets,
        }
    )
    return EvalReport(map=mean_ap, mar=mean_ar, per_class=tuple(per_class), settings_digest=digest)


@dataclass(frozen=True)
class SweepCurve:
    thresholds: tuple[float, ...]
    map_values: tuple[float, ...]
    mar_values: tuple[float, ...]
    detection_counts: tuple[int, ...]

    def to_csv(self) -> str:
        lines = ["threshold,mAP,mAR,detections"]
        for t, m, r, n in zip(self.thresholds, self.map_values, self.mar_values, self.detection_counts):
            lines.append(f"{t},{m},{r},{n}")
        return "\n".join(lines) + "\n"


def confidence_sweep(dets: list[Detection], gts: list[GroundTruth],
                     thresholds: tuple[float, ...] = DEFAULT_SWEEP,
                     iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS,
                     max_dets: int = MAX_DETS) -> SweepCurve:
    """Evaluate at each ascending threshold, recording retained counts."""
    maps, mars, counts = [], [], []
    for t in thresholds:
        counts.append(sum(1 for d in dets if d.score >= t))
        report = evaluate(dets, gts, confidence_threshold=t, iou_thresholds=iou_thresholds, max_dets=max_dets)
        maps.append(report.map)
        mars.append(report.mar)
    return SweepCurve(tuple(thresholds), tuple(maps), tuple(mars), tuple(counts))


def per_object_report(dets: list[Detection], gts: list[GroundTruth],
                      iou_thresholds: tuple[float, ...] = IOU_THRESHOLDS,
                      max_dets: int = MAX_DETS) -> tuple[tuple[int, float, float], ...]:
    """(category_id, AP, AR) per class, averaged over IoU thresholds."""
    return evaluate(dets, gts, 0.0, iou_thresholds, max_dets).per_class


def f_beta(precision: float, recall: float, beta: float) -> float:
    """(1 + b^2) P R / (b^2 P + R); beta < 1 weighs precision above recall."""
    if beta <= 0:
        raise ValidationError("beta must be positive")
    denom = beta * beta * precision + recall
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * precision * recall / denom


@dataclass(frozen=True)
class FBetaParams:
    beta: float
    iou_threshold: float = 0.5
    confidence_threshold: float = 0.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValidationError("beta must be positive")


@dataclass
class RobustnessTable:
    rows: list[dict] = field(default_factory=list)  # kind, severity, mAP, mAR, present
    baseline: EvalReport | None = None

    def to_csv(self) -> str:
        lines = ["kind,severity,mAP,mAR,present"]
        if self.baseline is not None:
            lines.append(f"clean,0,{self.baseline.map},{self.baseline.mar},1")
        for r in self.rows:
            if r["present"]:
                lines.append(f"{r['kind']},{r['severity']},{r['mAP']},{r['mAR']},1")
            else:
                lines.append(f"{r['kind']},{r['severity']},,,0")
        return "\n".join(lines) + "\n"


def robustness_suite(
    detection_sets: dict[tuple[str, int], list[Detection] | None],
    gts: list[GroundTruth],
    clean_dets: list[Detection] | None = None,
    confidence_threshold: float = 0.0,
) -> RobustnessTable:
    """Evaluate one detection set per (corruption kind, severity) cell.

    Missing cells are recorded as absent, not errors.  ``clean_dets``
    provides the uncorrupted baseline row.
    """
    from .corruptions import KINDS, SEVERITIES

    table = RobustnessTable()
    if clean_dets is not None:
        table.baseline = evaluate(clean_dets, gts, confidence_threshold)
    keys = list(detection_sets.keys()) or [(k, s) for k in KINDS for s in SEVERITIES]
    for kind, severity in sorted(set(keys) | {(k, s) for k in KINDS for s in SEVERITIES}):
        cell = detection_sets.get((kind, severity))
        if cell is None:
            table.rows.append({"kind": kind, "severity": severity, "mAP": None, "mAR": None, "present": False})
            continue
        report = evaluate(cell, gts, confidence_threshold)
        table.rows.append(
            {"kind": kind, "severity": severity, "mAP": report.map, "mAR": report.mar, "present": True}
        )
    return table
