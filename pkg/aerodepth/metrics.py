"""
Dense prediction metrics: depth error/accuracy and per-class IoU
"""
import logging
from typing import Dict, List, Optional, Union

import numpy as np

from .errors import ContractError
from .models import DepthMap, DepthMetrics, SegMetrics

logger = logging.getLogger(__name__)

DELTA_BASE = 1.25

ArrayOrDepth = Union[np.ndarray, DepthMap]


def _values(depth: ArrayOrDepth) -> np.ndarray:
    return np.asarray(depth.values if isinstance(depth, DepthMap) else depth, dtype=np.float64)


def _check_depth_pair(pred: np.ndarray, gt: np.ndarray):
    if pred.shape != gt.shape:
        raise ContractError(f"Prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    if np.any(pred <= 0) or np.any(gt <= 0):
        raise ContractError("Depth metrics need strictly positive depths")


def _check_deltas(delta1: float, delta2: float, delta3: float):
    if not (0.0 <= delta1 <= delta2 <= delta3 <= 1.0):
        raise ContractError(f"Delta accuracies not monotone: {delta1}, {delta2}, {delta3}")


def depth_metrics(pred: ArrayOrDepth, gt: ArrayOrDepth, max_depth_cap: float,
                  mask: Optional[np.ndarray] = None) -> DepthMetrics:
    """
    RMSE, AbsRel and delta accuracies after clamping both maps to the cap.

    Args:
        pred: predicted depth
        gt: ground-truth depth
        max_depth_cap: protocol cap in meters (80 or 200)
        mask: optional pixels to score

    Returns:
        DepthMetrics
    """
    pred, gt = _values(pred), _values(gt)
    _check_depth_pair(pred, gt)
    if mask is not None:
        pred, gt = pred[mask], gt[mask]
    accumulator = DepthAccumulator(max_depth_cap)
    accumulator.add(pred, gt)
    return accumulator.result()


class DepthAccumulator:
    """Pooled depth metrics over many frames"""

    def __init__(self, max_depth_cap: float):
        self.cap = float(max_depth_cap)
        self.count = 0
        self.squared_error = 0.0
        self.relative_error = 0.0
        self.delta_hits = np.zeros(3, dtype=np.int64)
        self.relative_samples: List[np.ndarray] = []

    def add(self, pred: np.ndarray, gt: np.ndarray):
        pred = np.minimum(np.asarray(pred, dtype=np.float64), self.cap).ravel()
        gt = np.minimum(np.asarray(gt, dtype=np.float64), self.cap).ravel()
        _check_depth_pair(pred, gt)
        relative = np.abs(pred - gt) / gt
        ratio = np.maximum(pred / gt, gt / pred)
        self.count += pred.size
        self.squared_error += float(np.sum((pred - gt) ** 2))
        self.relative_error += float(np.sum(relative))
        for k in range(3):
            self.delta_hits[k] += int(np.sum(ratio < DELTA_BASE ** (k + 1)))
        self.relative_samples.append(relative)

    def relative_errors(self) -> np.ndarray:
        return np.concatenate(self.relative_samples) if self.relative_samples else np.zeros(0)

    def result(self) -> DepthMetrics:
        if self.count == 0:
            raise ContractError("No pixels to score")
        deltas = [float(hits) / self.count for hits in self.delta_hits]
        _check_deltas(*deltas)
        return DepthMetrics(
            rmse=float(np.sqrt(self.squared_error / self.count)),
            abs_rel=self.relative_error / self.count,
            delta1=deltas[0],
            delta2=deltas[1],
            delta3=deltas[2],
            median_abs_rel=float(np.median(self.relative_errors())),
        )


def confusion_matrix(pred_classes: np.ndarray, gt_classes: np.ndarray, num_classes: int) -> np.ndarray:
    """Counts indexed [gt, pred]"""
    pred = np.asarray(pred_classes).astype(np.int64).ravel()
    gt = np.asarray(gt_classes).astype(np.int64).ravel()
    if pred.shape != gt.shape:
        raise ContractError(f"Prediction and ground truth hold {pred.size} and {gt.size} pixels")
    for name, values in (('prediction', pred), ('ground truth', gt)):
        if values.size and (values.min() < 0 or values.max() >= num_classes):
            raise ContractError(f"Class index in {name} outside [0, {num_classes})")
    return np.bincount(gt * num_classes + pred, minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def seg_metrics_from_confusion(confusion: np.ndarray) -> SegMetrics:
    true_positive = np.diag(confusion).astype(np.float64)
    gt_total = confusion.sum(axis=1)
    pred_total = confusion.sum(axis=0)
    union = gt_total + pred_total - true_positive

    per_class: Dict[int, Optional[float]] = {}
    for index in range(len(confusion)):
        per_class[index] = None if union[index] == 0 else float(true_positive[index] / union[index])
    present = [v for v in per_class.values() if v is not None]
    total = confusion.sum()
    return SegMetrics(
        per_class_iou=per_class,
        miou=float(np.mean(present)) if present else float('nan'),
        pixel_accuracy=float(true_positive.sum() / total) if total else float('nan'),
    )


def seg_metrics(pred_classes: np.ndarray, gt_classes: np.ndarray, num_classes: int) -> SegMetrics:
    """
    Per-class IoU = TP / (TP + FP + FN). Classes absent from both maps get
    None and are left out of the mean.
    """
    return seg_metrics_from_confusion(confusion_matrix(pred_classes, gt_classes, num_classes))


class SegAccumulator:
    """Pooled confusion counts over many frames"""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.confusion = np.zeros((num_classes, num_classes), dtype=np.int64)

    def add(self, pred_classes: np.ndarray, gt_classes: np.ndarray):
        self.confusion += confusion_matrix(pred_classes, gt_classes, self.num_classes)

    def result(self) -> SegMetrics:
        return seg_metrics_from_confusion(self.confusion)
