import csv
import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from aerodepth.cli import cli
from aerodepth.commands import guarded_run
from aerodepth.errors import ContractError
from aerodepth.geometry.reconstruction import read_point_cloud
from aerodepth.services.dataset_service import trajectory_dir
from aerodepth.services.manifest_service import read_manifest
from aerodepth.services.report_service import read_xlsx
from aerodepth.utils import image_io

SIZE = 32


def invoke(*args):
    runner = CliRunner(mix_stderr=False)
    return runner.invoke(cli, ['--config', 'config.TestingConfig', *[str(a) for a in args]])


def error_lines(result):
    return [line for line in result.stderr.splitlines() if line.startswith('Error:')]


@pytest.fixture(scope='module')
def pipeline(tmp_path_factory):
    """A generated dataset and a run trained for zero epochs on it"""
    base = tmp_path_factory.mktemp('cli')
    data = base / 'data'
    result = invoke('generate', '--frames', 4, '--width', SIZE, '--height', SIZE, '--seed', 3,
                    '--min-altitude', 20, '--max-altitude', 40, '--out', data)
    assert result.exit_code == 0, result.stderr
    run = base / 'run'
    result = invoke('train', '--data', data, '--epochs', 0, '--levels', 4, '--sequence-length', 2,
                    '--no-augment', '--out', run)
    assert result.exit_code == 0, result.stderr
    return {'base': base, 'data': data, 'run': run, 'train_output': result.output}


def test_generate_writes_poses_and_manifest(pipeline):
    data = pipeline['data']
    with open(os.path.join(trajectory_dir(str(data), 0), 'poses.csv')) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ['frame', 'x', 'y', 'z', 'qw', 'qx', 'qy', 'qz']
    assert len(rows) == 5
    manifest = read_manifest(str(data))
    assert manifest.command == 'generate'
    assert 'scene.json' in manifest.outputs
    with open(data / 'scene.json') as handle:
        assert json.load(handle)['seed'] == 3


def test_rerun_without_overwrite_fails_with_one_line(pipeline):
    result = invoke('generate', '--frames', 4, '--width', SIZE, '--height', SIZE, '--seed', 3,
                    '--min-altitude', 20, '--max-altitude', 40, '--out', pipeline['data'])
    assert result.exit_code == 1
    lines = error_lines(result)
    assert len(lines) == 1
    assert 'pass --overwrite' in lines[0]


def test_train_reports_best_checkpoint(pipeline):
    assert 'Best checkpoint: epoch 0' in pipeline['train_output']
    for name in ('best.pt', 'last.pt', 'config.json', 'training_log.csv', 'manifest.json'):
        assert os.path.isfile(pipeline['run'] / name)


def test_predict_writes_images(pipeline):
    out = pipeline['base'] / 'predict'
    result = invoke('predict', '--ckpt', pipeline['run'] / 'best.pt', '--data', pipeline['data'],
                    '--frame', 2, '--out', out)
    assert result.exit_code == 0, result.stderr
    stem = '000_000002'
    assert image_io.load_depth_codes(str(out / f"{stem}_depth.png")).shape == (SIZE, SIZE)
    assert image_io.load_class_map(str(out / f"{stem}_seg.png")).shape == (SIZE, SIZE)
    assert image_io.load_rgb(str(out / f"{stem}_seg_color.png")).shape == (SIZE, SIZE, 3)
    assert os.path.isfile(out / f"{stem}_depth_preview.png")


def test_predict_first_frame_is_a_user_error(pipeline):
    result = invoke('predict', '--ckpt', pipeline['run'] / 'best.pt', '--data', pipeline['data'],
                    '--frame', 0, '--out', pipeline['base'] / 'predict_first')
    assert result.exit_code == 1
    assert len(error_lines(result)) == 1
    assert read_manifest(str(pipeline['base'] / 'predict_first')) is None


def test_failed_run_does_not_block_a_retry(pipeline):
    out = pipeline['base'] / 'predict_retry'
    failed = invoke('predict', '--ckpt', pipeline['run'] / 'best.pt', '--data', pipeline['data'],
                    '--frame', 0, '--out', out)
    assert failed.exit_code == 1
    retried = invoke('predict', '--ckpt', pipeline['run'] / 'best.pt', '--data', pipeline['data'],
                     '--frame', 2, '--out', out)
    assert retried.exit_code == 0, retried.stderr
    assert read_manifest(str(out)).parameters['frame'] == 2


def test_guarded_run_releases_the_directory_on_failure(tmp_path):
    out = str(tmp_path / 'data')
    with pytest.raises(ContractError):
        with guarded_run('generate', {'seed': 0}, [], out, False):
            raise ContractError('body failed')
    assert read_manifest(out) is None

    with guarded_run('generate', {'seed': 0}, [], out, False) as outputs:
        path = os.path.join(out, 'scene.json')
        with open(path, 'w') as handle:
            handle.write('{}')
        outputs.append(path)
    manifest = read_manifest(out)
    assert manifest.finished_at is not None
    assert manifest.outputs == ['scene.json']


    assert result.exit_code == 1
    assert len(error_lines(result)) == 1


def test_reconstruct_with_tiny_truncation_is_empty(pipeline):
    out = pipeline['base'] / 'cloud'
    result = invoke('reconstruct', '--ckpt', pipeline['run'] / 'best.pt', '--data', pipeline['data'],
                    '--frame', 1, '--trunc', 1e-6, '--out', out)
    assert result.exit_code == 0, result.stderr
    path = out / '000_000001_cloud.txt'
    with open(path) as handle:
        assert handle.read().splitlines() == ['count 0', 'fields x y z label r g b']
    assert len(read_point_cloud(str(path))) == 0


def test_eval_then_report(pipeline):
    base = pipeline['base']
    for name, cap in (('eval80', 80), ('eval200', 200)):
        result = invoke('eval', '--ckpt', pipeline['run'] / 'best.pt', '--data', pipeline['data'],
                        '--cap', cap, '--run-id', name, '--out', base / name)
        assert result.exit_code == 0, result.stderr
        with open(base / name / 'eval.json') as handle:
            record = json.load(handle)
        assert record['max_depth_cap'] == float(cap)
        assert record['run_id'] == name
        assert np.load(base / name / 'relative_errors.npy').size > 0

    result = invoke('report', '--runs', f"{base / 'eval80'},{base / 'eval200'}", '--out', base / 'report')
    assert result.exit_code == 0, result.stderr
    rows = read_xlsx(str(base / 'report' / 'comparison.xlsx'))
    assert [row['run_id'] for row in rows] == ['eval80', 'eval200']
    for name in ('summary.jsonl', 'comparison.html', 'per_class_iou.png', 'depth_error_hist.png'):
        assert os.path.isfile(base / 'report' / name)


def test_help_lists_flags():
    result = invoke('train', '--help')
    assert result.exit_code == 0
    for flag in ('--data', '--ratio', '--loss-weight', '--levels', '--overwrite'):
        assert flag in result.output


def test_unknown_flag_is_a_usage_error():
    result = invoke('generate', '--no-such-flag')
    assert result.exit_code == 1
    assert len(error_lines(result)) == 1


def test_missing_dataset_fails_cleanly(tmp_path):
    empty = tmp_path / 'empty'
    empty.mkdir()
    result = invoke('train', '--data', empty, '--epochs', 0, '--out', tmp_path / 'run')
    assert result.exit_code == 1
    assert len(error_lines(result)) == 1
