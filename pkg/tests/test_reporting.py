import json
import math
import os

import numpy as np
import pytest
import torch

from aerodepth.errors import AerodepthError, FingerprintMismatchError, ManifestError
from aerodepth.models import CameraIntrinsics, DepthMetrics, SegMetrics, TrainConfig
from aerodepth.network.joint import JointDepthSegNet
from aerodepth.services.checkpoint_service import BEST_NAME, LAST_NAME, Checkpoint, checkpoint_service
from aerodepth.services.manifest_service import MANIFEST_NAME, manifest_service, read_manifest
from aerodepth.services.report_service import (
    DEPTH_FIELDS, HTML_NAME, SEG_FIELDS, SUMMARY_NAME, XLSX_NAME, RunMetrics, load_report, read_xlsx,
    report_service,
)


def _run(run_id, rmse, miou, seed=0):
    rng = np.random.default_rng(seed)
    return RunMetrics(
        run_id=run_id, dataset='toy', split='test',
        depth=DepthMetrics(rmse=rmse, abs_rel=0.1, delta1=0.9, delta2=0.95, delta3=0.99, median_abs_rel=0.08),
        seg=SegMetrics(per_class_iou={0: miou, 1: 0.5, 2: None}, miou=miou, pixel_accuracy=0.8),
        class_names=('sky', 'water', 'land'),
        relative_errors=rng.uniform(0, 0.5, size=200),
    )


# ============================================================================
# REPORTS
# ============================================================================

def test_empty_report_writes_every_artifact(tmp_path):
    outputs = report_service.emit_report([], str(tmp_path))
    for path in outputs.values():
        assert os.path.isfile(path)
    assert load_report(str(tmp_path)) == []
    assert read_xlsx(outputs['xlsx']) == []
    with open(outputs['html']) as handle:
        assert 'No runs.' in handle.read()


def test_two_runs_parse_back(tmp_path):
    runs = [_run('baseline', 4.5, 0.6, seed=1), _run('joint', 3.9, 0.7, seed=2)]
    outputs = report_service.emit_report(runs, str(tmp_path))
    assert os.path.basename(outputs['summary']) == SUMMARY_NAME

    parsed = load_report(str(tmp_path))
    assert [run.run_id for run in parsed] == ['baseline', 'joint']
    assert parsed[1].depth.rmse == pytest.approx(3.9)
    assert parsed[1].seg.miou == pytest.approx(0.7)
    assert list(parsed[0].class_names) == ['sky', 'water', 'land']
    assert parsed[0].seg.per_class_iou[2] is None

    rows = read_xlsx(str(tmp_path / XLSX_NAME))
    assert list(rows[0])[:3 + len(DEPTH_FIELDS) + len(SEG_FIELDS)] == ['run_id', 'dataset', 'split',
                                                                         *DEPTH_FIELDS, *SEG_FIELDS]
    assert [row['run_id'] for row in rows] == ['baseline', 'joint']
    assert rows[0]['iou/water'] == pytest.approx(0.5)
    assert rows[0]['iou/land'] is None

    with open(tmp_path / HTML_NAME) as handle:
        html = handle.read()
    assert 'data-run="baseline"' in html and 'data-run="joint"' in html


def test_nan_metrics_are_stored_as_null(tmp_path):
    run = _run('empty', 1.0, float('nan'))
    report_service.emit_report([run], str(tmp_path))
    with open(tmp_path / SUMMARY_NAME) as handle:
        records = [json.loads(line) for line in handle]
    miou = [r for r in records if r['metric'] == 'miou'][0]
    assert miou['value'] is None
    assert math.isnan(load_report(str(tmp_path))[0].seg.miou)


# ============================================================================
# CHECKPOINTS
# ============================================================================

@pytest.fixture
def checkpoint(tiny_arch):
    model = JointDepthSegNet(tiny_arch)
    return Checkpoint(arch=tiny_arch, state_dict=model.state_dict(), epoch=3,
                      train_config=TrainConfig(epochs=3, batch_size=2, sequence_length=2),
                      depth_metrics=DepthMetrics(5.0, 0.2, 0.7, 0.9, 0.95),
                      seg_metrics=SegMetrics({0: 0.4, 1: None}, 0.4, 0.6))


def test_checkpoint_round_trip_reproduces_outputs(tmp_path, checkpoint):
    path = checkpoint_service.save(checkpoint, str(tmp_path / 'run' / LAST_NAME))
    loaded = checkpoint_service.load(path, expected_fingerprint=checkpoint.fingerprint)
    assert loaded.epoch == 3
    assert loaded.seg_metrics.per_class_iou == {0: 0.4, 1: None}

    frames = torch.rand(1, 2, 3, 32, 32)
    rotations = torch.eye(3).expand(1, 1, 3, 3).clone()
    translations = torch.tensor([[[0.5, 0.0, 0.2]]])
    intr = CameraIntrinsics(30.0, 30.0, 15.5, 15.5, 32, 32)
    with torch.no_grad():
        expected = checkpoint.build_model()(frames, rotations, translations, intr)
        restored = loaded.build_model()(frames, rotations, translations, intr)
    assert torch.equal(expected.depth, restored.depth)
    assert torch.equal(expected.seg_logits, restored.seg_logits)


def test_tampered_checkpoint_is_rejected(tmp_path, checkpoint):
    record = checkpoint.to_record()
    record['arch']['refiner_width'] = record['arch']['refiner_width'] * 2
    with pytest.raises(FingerprintMismatchError):
        Checkpoint.from_record(record)

    path = checkpoint_service.save(checkpoint, str(tmp_path / BEST_NAME))
    with pytest.raises(FingerprintMismatchError):
        checkpoint_service.load(path, expected_fingerprint='0' * 64)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(AerodepthError):
        checkpoint_service.load(str(tmp_path / 'absent.pt'))


def test_best_checkpoint_ordering(checkpoint):
    def variant(miou, rmse):
        return Checkpoint(arch=checkpoint.arch, state_dict={}, epoch=0, train_config=checkpoint.train_config,
                          depth_metrics=DepthMetrics(rmse, 0.1, 0.9, 0.95, 0.99),
                          seg_metrics=SegMetrics({}, miou))

    assert checkpoint_service.better(variant(0.5, 9.0), None)
    assert checkpoint_service.better(variant(0.6, 9.0), variant(0.5, 1.0))
    assert checkpoint_service.better(variant(0.5, 1.0), variant(0.5, 2.0))
    assert not checkpoint_service.better(variant(0.5, 2.0), variant(0.5, 2.0))
    assert checkpoint_service.better(variant(0.1, 2.0), variant(float('nan'), 1.0))


def test_save_run_keeps_epoch_copies(tmp_path, checkpoint):
    paths = checkpoint_service.save_run(str(tmp_path), checkpoint, checkpoint, keep_epoch=True)
    assert sorted(os.path.basename(p) for p in paths) == sorted([LAST_NAME, BEST_NAME, 'epoch_0003.pt'])


# ============================================================================
# MANIFESTS
# ============================================================================

def test_manifest_guards_its_directory(tmp_path):
    out_dir = str(tmp_path / 'out')
    manifest = manifest_service.begin('generate', {'seed': 1}, [], out_dir)
    output = os.path.join(out_dir, 'scene.json')
    with open(output, 'w') as handle:
        handle.write('{}')
    manifest_service.finish(manifest, out_dir, [output])

    stored = read_manifest(out_dir)
    assert stored.command == 'generate'
    assert stored.outputs == ['scene.json']
    assert stored.finished_at is not None
    assert len(stored.revision) == 64

    with pytest.raises(ManifestError) as info:
        manifest_service.begin('generate', {'seed': 1}, [], out_dir)
    assert 'identical inputs' in str(info.value)
    assert 'pass --overwrite' in str(info.value)

    replaced = manifest_service.begin('generate', {'seed': 2}, [], out_dir, overwrite=True)
    assert read_manifest(out_dir).config_hash == replaced.config_hash != stored.config_hash


def test_directory_without_manifest_has_none(tmp_path):
    assert read_manifest(str(tmp_path)) is None
    (tmp_path / MANIFEST_NAME).write_text('not json')
    with pytest.raises(ManifestError):
        read_manifest(str(tmp_path))


def test_unfinished_run_is_reclaimed(tmp_path):
    out_dir = str(tmp_path / 'out')
    stale = manifest_service.begin('generate', {'seed': 0}, [], out_dir)
    assert read_manifest(out_dir).finished_at is None

    reclaimed = manifest_service.begin('generate', {'seed': 0}, [], out_dir)
    assert reclaimed.config_hash == stale.config_hash
    manifest_service.finish(reclaimed, out_dir, [])
    with pytest.raises(ManifestError):
        manifest_service.begin('generate', {'seed': 0}, [], out_dir)


def test_abandon_leaves_a_newer_claim_alone(tmp_path):
    out_dir = str(tmp_path / 'out')
    first = manifest_service.begin('eval', {'cap': 80}, [], out_dir)
    second = manifest_service.begin('eval', {'cap': 80}, [], out_dir)
    second.started_at = first.started_at + '-later'
    manifest_service._write(second, out_dir)

    manifest_service.abandon(first, out_dir)
    assert read_manifest(out_dir).started_at == second.started_at
    manifest_service.abandon(second, out_dir)
    assert read_manifest(out_dir) is None
