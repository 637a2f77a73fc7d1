"""COCO-style detection evaluation.

Greedy confidence-ordered matching, 101-point interpolated average
precision, AP over the 0.50:0.05:0.95 IoU range, and per-image FP/FN
confusion listings. The 101-point interpolation (not Pascal-VOC 11-point)
matches the convention behind the mAP50 / mAP50-95 vocabulary.

AP is undefined for a class with zero ground truths and is reported as
absent (None), never as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .geometry import iou
from .model import BBox, ClassMap, DEFAULT_CLASSES

# IoU thresholds 0.50, 0.55, ..., 0.95 (exact decimals).
IOU_RANGE = tuple((50 + 5 * i) / 100 for i in range(10))

# Recall sample points 0.00, 0.01, ..., 1.00 (exact decimal doubles).
RECALL_POINTS = np.array([i / 100 for i in range(101)])

# Small-object area cutoff: the 32px rule scaled to 640px images,
# in normalized units.
SMALL_AREA_MAX = (32 / 640) ** 2


@dataclass(frozen=True)
class PredMatch:
    pred_index: int
    is_tp: bool
    gt_index: Optional[int]
    iou: float


@dataclass(frozen=True)
class MatchResult:
    """Per-prediction TP/FP labels plus the unmatched ground truths."""

    matches: tuple[PredMatch, ...]
    unmatched_gt: tuple[int, ...]

    @property
    def tp(self) -> int:
        return sum(1 for m in self.matches if m.is_tp)

    @property
    def fp(self) -> int:
        return sum(1 for m in self.matches if not m.is_tp)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def match_detections(
    preds: Sequence[BBox], gts: Sequence[BBox], iou_min: float
) -> MatchResult:
    """Greedy matching in descending prediction confidence.

    Each prediction takes the unmatched ground truth with the highest
    IoU >= iou_min, else it is a false positive; leftover ground truths
    are false negatives. Confidence ties break by input order, IoU ties
    by lowest ground-truth index.
    """
    if not 0.0 < iou_min <= 1.0:
        raise ValueError(f"iou_min must be in (0, 1] (got {iou_min})")
    classes = {b.class_id for b in preds} | {b.class_id for b in gts}
    if len(classes) > 1:
        raise ValueError(f"mixed classes in matching: {sorted(classes)}")

    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, i))
    gt_taken = [False] * len(gts)
    matches: list[Optional[PredMatch]] = [None] * len(preds)
    for i in order:
        best_gt = -1
        best_iou = 0.0
        for j, gt in enumerate(gts):
            if gt_taken[j]:
                continue
            ov = iou(preds[i], gt)
            if ov >= iou_min and ov > best_iou:
                best_gt, best_iou = j, ov
        if best_gt >= 0:
            gt_taken[best_gt] = True
            matches[i] = PredMatch(i, True, best_gt, best_iou)
        else:
            matches[i] = PredMatch(i, False, None, 0.0)
    unmatched = tuple(j for j, taken in enumerate(gt_taken) if not taken)
    return MatchResult(tuple(matches), unmatched)  # type: ignore[arg-type]


def _ranked_tp_flags(
    preds_by_image: Mapping[str, Sequence[BBox]],
    gts_by_image: Mapping[str, Sequence[BBox]],
    iou_min: float,
) -> tuple[np.ndarray, int]:
    """Match per image, then rank all predictions by confidence globally.

    Returns (tp flags in rank order, total ground-truth count). Global
    confidence ties break by image id then input order.
    """
    total_gts = sum(len(v) for v in gts_by_image.values())
    ranked: list[tuple[float, str, int, bool]] = []
    for image_id in sorted(set(preds_by_image) | set(gts_by_image)):
        preds = preds_by_image.get(image_id, [])
        gts = gts_by_image.get(image_id, [])
        result = match_detections(preds, gts, iou_min)
        for m in result.matches:
            ranked.append((-preds[m.pred_index].confidence, image_id, m.pred_index, m.is_tp))
    ranked.sort(key=lambda r: r[:3])
    flags = np.array([r[3] for r in ranked], dtype=bool)
    return flags, total_gts


def average_precision(
    preds_by_image: Mapping[str, Sequence[BBox]],
    gts_by_image: Mapping[str, Sequence[BBox]],
    iou_min: float,
) -> Optional[float]:
    """101-point interpolated AP across the dataset at one IoU threshold.

    Returns None when there are no ground truths (AP undefined).
    """
    tp_flags, total_gts = _ranked_tp_flags(preds_by_image, gts_by_image, iou_min)
    if total_gts == 0:
        return None
    if tp_flags.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(~tp_flags)
    recall = tp_cum / total_gts
    precision = tp_cum / (tp_cum + fp_cum)
    # Precision envelope: best precision achievable at or beyond each rank.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    # Plain sequential sum: keeps the result bit-identical to a direct
    # definition-based computation of the same 101 samples.
    return sum(float(v) for v in sampled) / len(RECALL_POINTS)


def pr_curve(
    preds_by_image: Mapping[str, Sequence[BBox]],
    gts_by_image: Mapping[str, Sequence[BBox]],
    iou_min: float,
) -> list[tuple[float, float]]:
    """Raw cumulative (recall, precision) points in global rank order."""
    tp_flags, total_gts = _ranked_tp_flags(preds_by_image, gts_by_image, iou_min)
    if total_gts == 0 or tp_flags.size == 0:
        return []
    tp_cum = np.cumsum(tp_flags)
    fp_cum = np.cumsum(~tp_flags)
    recall = tp_cum / total_gts
    precision = tp_cum / (tp_cum + fp_cum)
    return [(float(r), float(p)) for r, p in zip(recall, precision)]


@dataclass(frozen=True)
class ClassEval:
    class_name: str
    gt_count: int
    pred_count: int
    tp: int
    fp: int
    fn: int
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    ap50: Optional[float]
    ap50_95: Optional[float]
    ap_small: Optional[float]
    ap_by_iou: dict[float, Optional[float]]
    pr_curve: list[tuple[float, float]]


@dataclass(frozen=True)
class EvalReport:
    per_class: dict[str, ClassEval]
    map50: Optional[float]
    map50_95: Optional[float]
    map_small: Optional[float]
    conf_min: float


def _filter_class(
    by_image: Mapping[str, Sequence[BBox]], class_id: int
) -> dict[str, list[BBox]]:
    return {
        image_id: [b for b in boxes if b.class_id == class_id]
        for image_id, boxes in by_image.items()
    }


def _mean_or_none(values: list[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def map_range(
    preds_by_image: Mapping[str, Sequence[BBox]],
    gts_by_image: Mapping[str, Sequence[BBox]],
    class_map: ClassMap = DEFAULT_CLASSES,
    conf_min: float = 0.25,
) -> EvalReport:
    """Full report: per-class AP over IoU 0.50:0.05:0.95, P/R/F1 at a fixed
    confidence threshold (matched at IoU 0.5), PR curves, and the small-
    object AP variant.
    """
    per_class: dict[str, ClassEval] = {}
    for class_id, class_name in enumerate(class_map.names):
        preds_c = _filter_class(preds_by_image, class_id)
        gts_c = _filter_class(gts_by_image, class_id)
        gt_count = sum(len(v) for v in gts_c.values())
        pred_count = sum(len(v) for v in preds_c.values())

        ap_by_iou = {t: average_precision(preds_c, gts_c, t) for t in IOU_RANGE}
        ap50 = ap_by_iou[0.5]
        ap50_95 = _mean_or_none(list(ap_by_iou.values()))

        small_preds = {
            k: [b for b in v if b.area < SMALL_AREA_MAX] for k, v in preds_c.items()
        }
        small_gts = {
            k: [b for b in v if b.area < SMALL_AREA_MAX] for k, v in gts_c.items()
        }
        ap_small = _mean_or_none(
            [average_precision(small_preds, small_gts, t) for t in IOU_RANGE]
        )

        tp = fp = fn = 0
        for image_id in sorted(set(preds_c) | set(gts_c)):
            kept = [b for b in preds_c.get(image_id, []) if b.confidence >= conf_min]
            result = match_detections(kept, gts_c.get(image_id, []), 0.5)
            tp += result.tp
            fp += result.fp
            fn += result.fn
        precision = tp / (tp + fp) if tp + fp > 0 else None
        recall = tp / (tp + fn) if tp + fn > 0 else None
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision is not None and recall is not None and precision + recall > 0
            else None
        )

        per_class[class_name] = ClassEval(
            class_name=class_name,
            gt_count=gt_count,
            pred_count=pred_count,
            tp=tp,
            fp=fp,
            fn=fn,
            precision=precision,
            recall=recall,
            f1=f1,
            ap50=ap50,
            ap50_95=ap50_95,
            ap_small=ap_small,
            ap_by_iou=ap_by_iou,
            pr_curve=pr_curve(preds_c, gts_c, 0.5),
        )

    return EvalReport(
        per_class=per_class,
        map50=_mean_or_none([c.ap50 for c in per_class.values()]),
        map50_95=_mean_or_none([c.ap50_95 for c in per_class.values()]),
        map_small=_mean_or_none([c.ap_small for c in per_class.values()]),
        conf_min=conf_min,
    )


# ---------------------------------------------------------------------------
# Confusion reporting


@dataclass(frozen=True)
class ImageConfusion:
    """FP predictions and FN ground truths for one image, with their
    indices in the original per-image lists."""

    image_id: str
    false_positives: tuple[tuple[int, BBox], ...]
    false_negatives: tuple[tuple[int, BBox], ...]


@dataclass(frozen=True)
class ConfusionReport:
    tp: int
    fp: int
    fn: int
    per_image: dict[str, ImageConfusion]


def confusion_report(
    preds_by_image: Mapping[str, Sequence[BBox]],
    gts_by_image: Mapping[str, Sequence[BBox]],
    conf_min: float,
    iou_min: float,
) -> ConfusionReport:
    """Itemize every FP and FN per image for qualitative triage.

    Predictions below conf_min are discarded before matching; matching is
    per class within each image.
    """
    tp = fp = fn = 0
    per_image: dict[str, ImageConfusion] = {}
    for image_id in sorted(set(preds_by_image) | set(gts_by_image)):
        preds = list(preds_by_image.get(image_id, []))
        gts = list(gts_by_image.get(image_id, []))
        fps: list[tuple[int, BBox]] = []
        fns: list[tuple[int, BBox]] = []
        classes = sorted({b.class_id for b in preds} | {b.class_id for b in gts})
        for class_id in classes:
            ip = [(i, b) for i, b in enumerate(preds)
                  if b.class_id == class_id and b.confidence >= conf_min]
            ig = [(i, b) for i, b in enumerate(gts) if b.class_id == class_id]
            result = match_detections([b for _, b in ip], [b for _, b in ig], iou_min)
            tp += result.tp
            for m in result.matches:
                if not m.is_tp:
                    fps.append(ip[m.pred_index])
            for j in result.unmatched_gt:
                fns.append(ig[j])
        fp += len(fps)
        fn += len(fns)
        per_image[image_id] = ImageConfusion(
            image_id,
            tuple(sorted(fps, key=lambda e: e[0])),
            tuple(sorted(fns, key=lambda e: e[0])),
        )
    return ConfusionReport(tp, fp, fn, per_image)


# ---------------------------------------------------------------------------
# Report rendering


def report_to_dict(report: EvalReport) -> dict:
    return {
        "conf_min": report.conf_min,
        "map50": report.map50,
        "map50_95": report.map50_95,
        "map_small": report.map_small,
        "classes": {
            name: {
                "gt_count": c.gt_count,
                "pred_count": c.pred_count,
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "precision": c.precision,
                "recall": c.recall,
                "f1": c.f1,
                "ap50": c.ap50,
                "ap50_95": c.ap50_95,
                "ap_small": c.ap_small,
                "ap_by_iou": {f"{t:.2f}": v for t, v in c.ap_by_iou.items()},
                "pr_curve": c.pr_curve,
            }
            for name, c in report.per_class.items()
        },
    }


def _fmt(value: Optional[float]) -> str:
    return f"{value:.3f}" if value is not None else "n/a"


def render_report_text(report: EvalReport) -> str:
    """Plain-text metric table, one row per class plus the aggregate."""
    header = (
        f"{'class':<10} {'gts':>5} {'preds':>5} {'tp':>4} {'fp':>4} {'fn':>4} "
        f"{'prec':>6} {'recall':>6} {'f1':>6} {'ap50':>6} {'ap50-95':>8} {'ap-small':>8}"
    )
    lines = [header, "-" * len(header)]
    for name, c in report.per_class.items():
        lines.append(
            f"{name:<10} {c.gt_count:>5} {c.pred_count:>5} {c.tp:>4} {c.fp:>4} {c.fn:>4} "
            f"{_fmt(c.precision):>6} {_fmt(c.recall):>6} {_fmt(c.f1):>6} "
            f"{_fmt(c.ap50):>6} {_fmt(c.ap50_95):>8} {_fmt(c.ap_small):>8}"
        )
    lines.append("-" * len(header))
    lines.append(
        f"{'all':<10} {'':>5} {'':>5} {'':>4} {'':>4} {'':>4} {'':>6} {'':>6} {'':>6} "
        f"{_fmt(report.map50):>6} {_fmt(report.map50_95):>8} {_fmt(report.map_small):>8}"
    )
    return "\n".join(lines) + "\n"
