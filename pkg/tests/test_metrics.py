import math

import numpy as np
import pytest

from aerodepth.class_mapping import MAPPINGS, get_mapping, map_classes
from aerodepth.errors import ConfigError, ContractError, UnmappedLabelError
from aerodepth.metrics import (
    DepthAccumulator, SegAccumulator, confusion_matrix, depth_metrics, seg_metrics,
)
from aerodepth.models import CLASS_NAMES, LAND, NUM_CLASSES, OTHERS, DepthMap


# ============================================================================
# DEPTH
# ============================================================================

def test_identical_depth_is_perfect():
    gt = np.random.default_rng(0).uniform(1.0, 80.0, size=(16, 16))
    metrics = depth_metrics(gt, gt, 80.0)
    assert metrics.rmse == 0.0 and metrics.abs_rel == 0.0
    assert (metrics.delta1, metrics.delta2, metrics.delta3) == (1.0, 1.0, 1.0)


def test_uniform_overestimate():
    gt = np.random.default_rng(1).uniform(1.0, 50.0, size=(8, 8))
    metrics = depth_metrics(gt * 1.3, gt, 200.0)
    assert metrics.delta1 == 0.0
    assert metrics.delta2 == 1.0 and metrics.delta3 == 1.0
    assert metrics.abs_rel == pytest.approx(0.3)
    assert metrics.median_abs_rel == pytest.approx(0.3)


def test_depth_metrics_match_loop_oracle():
    rng = np.random.default_rng(2)
    for _ in range(100):
        height, width = rng.integers(1, 9, size=2)
        cap = float(rng.choice([80.0, 200.0]))
        gt = rng.uniform(1.0, 200.0, size=(height, width))
        pred = gt * rng.uniform(0.5, 2.0, size=(height, width))
        squared, relative, hits, errors = 0.0, 0.0, [0, 0, 0], []
        for p, g in zip(pred.ravel(), gt.ravel()):
            p, g = min(p, cap), min(g, cap)
            squared += (p - g) ** 2
            relative += abs(p - g) / g
            errors.append(abs(p - g) / g)
            for k in range(3):
                hits[k] += max(p / g, g / p) < 1.25 ** (k + 1)
        count = gt.size
        errors.sort()
        middle = count // 2
        median = errors[middle] if count % 2 else (errors[middle - 1] + errors[middle]) / 2

        metrics = depth_metrics(DepthMap(pred, 400.0), DepthMap(gt, 200.0), cap)
        assert metrics.rmse == pytest.approx(math.sqrt(squared / count), rel=1e-9, abs=1e-12)
        assert metrics.abs_rel == pytest.approx(relative / count, rel=1e-9, abs=1e-12)
        assert metrics.median_abs_rel == pytest.approx(median, rel=1e-9, abs=1e-12)
        assert [metrics.delta1, metrics.delta2, metrics.delta3] == pytest.approx([h / count for h in hits],
                                                                                  rel=1e-9)


def test_mask_limits_scored_pixels():
    gt = np.full((2, 2), 10.0)
    pred = np.array([[10.0, 10.0], [10.0, 50.0]])
    mask = np.array([[True, True], [True, False]])
    assert depth_metrics(pred, gt, 80.0, mask).rmse == 0.0


def test_accumulator_pools_pixels():
    rng = np.random.default_rng(3)
    gt = rng.uniform(1.0, 80.0, size=(2, 5, 5))
    pred = rng.uniform(1.0, 80.0, size=(2, 5, 5))
    accumulator = DepthAccumulator(80.0)
    accumulator.add(pred[0], gt[0])
    accumulator.add(pred[1], gt[1])
    pooled = depth_metrics(pred, gt, 80.0)
    assert accumulator.result().rmse == pytest.approx(pooled.rmse)
    assert accumulator.relative_errors().shape == (50,)


def test_depth_metric_contract():
    with pytest.raises(ContractError):
        depth_metrics(np.ones((2, 2)), np.ones((2, 3)), 80.0)
    with pytest.raises(ContractError):
        depth_metrics(np.zeros((2, 2)), np.ones((2, 2)), 80.0)
    with pytest.raises(ContractError):
        DepthAccumulator(80.0).result()


# ============================================================================
# SEGMENTATION
# ============================================================================

def test_half_overlap_iou():
    gt = np.zeros((4, 8), dtype=np.uint8)
    gt[:, :4] = 1
    pred = np.zeros((4, 8), dtype=np.uint8)
    pred[:, 2:6] = 1
    metrics = seg_metrics(pred, gt, 3)
    assert metrics.per_class_iou[1] == pytest.approx(1 / 3)
    assert metrics.per_class_iou[0] == pytest.approx(1 / 3)
    assert metrics.per_class_iou[2] is None
    assert metrics.miou == pytest.approx(1 / 3)
    assert metrics.pixel_accuracy == pytest.approx(0.5)


def test_confusion_is_indexed_by_ground_truth_first():
    confusion = confusion_matrix(np.array([1]), np.array([0]), 2)
    assert confusion.tolist() == [[0, 1], [0, 0]]


def test_seg_metrics_match_loop_oracle():
    rng = np.random.default_rng(6)
    for _ in range(100):
        present = int(rng.integers(2, NUM_CLASSES + 1))
        gt = rng.integers(0, present, size=(32, 32))
        pred = np.where(rng.uniform(size=(32, 32)) < 0.6, gt, rng.integers(0, present, size=(32, 32)))

        counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
        for g, p in zip(gt.ravel(), pred.ravel()):
            counts[g, p] += 1
        assert np.array_equal(confusion_matrix(pred, gt, NUM_CLASSES), counts)

        metrics = seg_metrics(pred, gt, NUM_CLASSES)
        ious = []
        for c in range(NUM_CLASSES):
            tp = int(np.sum((pred == c) & (gt == c)))
            fp = int(np.sum((pred == c) & (gt != c)))
            fn = int(np.sum((pred != c) & (gt == c)))
            if tp + fp + fn == 0:
                assert metrics.per_class_iou[c] is None
                continue
            ious.append(tp / (tp + fp + fn))
            assert metrics.per_class_iou[c] == pytest.approx(ious[-1], rel=1e-12)
        assert metrics.miou == pytest.approx(sum(ious) / len(ious), rel=1e-12)
        assert metrics.pixel_accuracy == pytest.approx(np.sum(pred == gt) / gt.size, rel=1e-12)


def test_iou_permutes_with_labels():
    rng = np.random.default_rng(4)
    gt = rng.integers(0, 5, size=(10, 10))
    pred = rng.integers(0, 5, size=(10, 10))
    permutation = np.array([3, 0, 4, 1, 2])
    original = seg_metrics(pred, gt, 5)
    permuted = seg_metrics(permutation[pred], permutation[gt], 5)
    for index in range(5):
        assert permuted.per_class_iou[int(permutation[index])] == pytest.approx(original.per_class_iou[index])
    assert permuted.miou == pytest.approx(original.miou)


def test_absent_classes_are_left_out_of_the_mean():
    gt = np.array([[0, 1]])
    metrics = seg_metrics(gt, gt, NUM_CLASSES)
    assert metrics.miou == 1.0
    assert sum(v is None for v in metrics.per_class_iou.values()) == NUM_CLASSES - 2


def test_segmentation_accumulator_pools_counts():
    rng = np.random.default_rng(5)
    gt = rng.integers(0, 4, size=(2, 6, 6))
    pred = rng.integers(0, 4, size=(2, 6, 6))
    accumulator = SegAccumulator(4)
    accumulator.add(pred[0], gt[0])
    accumulator.add(pred[1], gt[1])
    assert accumulator.result().miou == pytest.approx(seg_metrics(pred, gt, 4).miou)


def test_seg_metrics_round_trip_through_dict():
    metrics = seg_metrics(np.array([[0, 1]]), np.array([[0, 0]]), 3)
    restored = type(metrics).from_dict(metrics.to_dict())
    assert restored.per_class_iou == metrics.per_class_iou
    assert restored.miou == pytest.approx(metrics.miou)


def test_out_of_range_class_is_rejected():
    with pytest.raises(ContractError):
        seg_metrics(np.array([[5]]), np.array([[0]]), 3)


# ============================================================================
# CLASS MAPPINGS
# ============================================================================

def test_common_class_mapping_is_identity():
    seg = np.random.default_rng(6).integers(0, NUM_CLASSES, size=(8, 8)).astype(np.uint8)
    assert np.array_equal(map_classes(seg, get_mapping('topair')), seg)


def test_midair_rows():
    mapping = get_mapping('midair')
    table = mapping.as_dict()
    assert table['dirt ground'] == CLASS_NAMES[LAND]
    assert table['train track'] == CLASS_NAMES[OTHERS]
    assert map_classes(np.array([[3, 11]]), mapping).tolist() == [[LAND, OTHERS]]


@pytest.mark.parametrize('name', sorted(MAPPINGS))
def test_mapping_conserves_pixels(name):
    mapping = get_mapping(name)
    seg = np.random.default_rng(7).integers(0, len(mapping.source_names), size=(12, 12))
    mapped = map_classes(seg, mapping)
    source_counts = np.bincount(seg.ravel(), minlength=len(mapping.source_names))
    expected = np.zeros(len(mapping.target_names), dtype=np.int64)
    for source, target in enumerate(mapping.table):
        expected[target] += source_counts[source]
    assert np.array_equal(np.bincount(mapped.ravel(), minlength=len(mapping.target_names)), expected)


def test_unmapped_label_is_reported():
    with pytest.raises(UnmappedLabelError) as info:
        map_classes(np.array([[0, 40, 41]]), get_mapping('udd'))
    assert info.value.labels == [40, 41]


def test_mapping_onto_the_common_set_is_idempotent():
    seg = np.random.default_rng(8).integers(0, len(get_mapping('wilduav').source_names), size=(6, 6))
    once = map_classes(seg, get_mapping('wilduav'))
    assert np.array_equal(map_classes(once, get_mapping('topair')), once)


def test_unknown_mapping_name():
    with pytest.raises(ConfigError):
        get_mapping('cityscapes')
