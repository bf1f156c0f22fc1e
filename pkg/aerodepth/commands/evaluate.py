import json
import logging
import os

import click
import numpy as np

from ..class_mapping import MAPPINGS
from ..services.training_service import training_service
from . import default_out, guarded_run

logger = logging.getLogger(__name__)

EVAL_NAME = 'eval.json'
ERRORS_NAME = 'relative_errors.npy'
MAX_ERROR_SAMPLES = 100000


@click.command('eval')
@click.option('--ckpt', required=True, type=click.Path(exists=True, dir_okay=False), help='Checkpoint file.')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False), help='Dataset root.')
@click.option('--cap', type=click.Choice(['80', '200']), default='80', show_default=True,
              help='Depth cap protocol in meters.')
@click.option('--label-map', type=click.Choice(sorted(MAPPINGS)),
              help='Remap ground-truth labels of a foreign dataset before scoring.')
@click.option('--run-id', help='Name of the run in reports; defaults to the output directory name.')
@click.option('--out', type=click.Path(file_okay=False), help='Evaluation directory.')
@click.option('--overwrite', is_flag=True, help='Replace an existing run in --out.')
@click.pass_obj
def eval_cmd(app, ckpt, data, cap, label_map, run_id, out, overwrite):
    """Score a checkpoint on a dataset split."""
    out = default_out(app, 'eval', out)
    parameters = dict(ckpt=os.path.abspath(ckpt), data=os.path.abspath(data), cap=cap, label_map=label_map)
    with guarded_run('eval', parameters, [ckpt, data], out, overwrite) as outputs:
        result = training_service.evaluate(ckpt, data, f"cap{cap}", label_map, out)
        record = result.to_dict()
        record.update({
            'run_id': run_id or os.path.basename(os.path.abspath(out)),
            'dataset': os.path.abspath(data),
            'split': os.path.basename(os.path.abspath(data)),
            'checkpoint': os.path.abspath(ckpt),
            'label_map': label_map,
        })
        with open(os.path.join(out, EVAL_NAME), 'w') as handle:
            json.dump(record, handle, indent=2, sort_keys=True)
        outputs.append(os.path.join(out, EVAL_NAME))

        if result.relative_errors is not None and result.relative_errors.size:
            errors = result.relative_errors
            if errors.size > MAX_ERROR_SAMPLES:
                errors = np.random.default_rng(0).choice(errors, MAX_ERROR_SAMPLES, replace=False)
            np.save(os.path.join(out, ERRORS_NAME), errors)
            outputs.append(os.path.join(out, ERRORS_NAME))
        grid = os.path.join(out, 'qualitative_grid.png')
        if os.path.isfile(grid):
            outputs.append(grid)

    parts = []
    if result.depth is not None:
        parts.append(f"RMSE {result.depth.rmse:.4f} AbsRel {result.depth.abs_rel:.4f} "
                     f"d1 {result.depth.delta1:.4f}")
    if result.seg is not None:
        parts.append(f"mIoU {result.seg.miou:.4f}")
    click.echo(f"{result.frames} sequences: " + ', '.join(parts))
