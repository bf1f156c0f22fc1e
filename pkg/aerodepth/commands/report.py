import json
import logging
import os

import click
import numpy as np

from ..errors import AerodepthError
from ..models import CLASS_NAMES, DepthMetrics, SegMetrics
from ..services.report_service import RunMetrics, report_service
from . import default_out, guarded_run, split_paths
from .evaluate import ERRORS_NAME, EVAL_NAME

logger = logging.getLogger(__name__)


def load_eval_run(run_dir: str) -> RunMetrics:
    path = os.path.join(run_dir, EVAL_NAME)
    try:
        with open(path) as handle:
            record = json.load(handle)
    except (OSError, ValueError) as e:
        raise AerodepthError(f"Cannot read evaluation record {path}: {e}")
    errors_path = os.path.join(run_dir, ERRORS_NAME)
    extra = {'frames': record.get('frames'), 'max_depth_cap': record.get('max_depth_cap'),
             'ms_per_frame': record.get('ms_per_frame')}
    return RunMetrics(
        run_id=record.get('run_id') or os.path.basename(os.path.abspath(run_dir)),
        dataset=record.get('dataset', ''),
        split=record.get('split', ''),
        depth=DepthMetrics(**record['depth']) if record.get('depth') else None,
        seg=SegMetrics.from_dict(record['seg']) if record.get('seg') else None,
        class_names=CLASS_NAMES,
        relative_errors=np.load(errors_path) if os.path.isfile(errors_path) else None,
        extra={k: float(v) for k, v in extra.items() if v is not None},
    )


@click.command('report')
@click.option('--runs', multiple=True, help='Evaluation directories; repeat or separate with commas.')
@click.option('--out', type=click.Path(file_okay=False), help='Report directory.')
@click.option('--overwrite', is_flag=True, help='Replace an existing report in --out.')
@click.pass_obj
def report_cmd(app, runs, out, overwrite):
    """Compare evaluation runs in tables and plots."""
    out = default_out(app, 'report', out)
    run_dirs = split_paths(runs)
    with guarded_run('report', {'runs': [os.path.abspath(r) for r in run_dirs]}, run_dirs, out,
                     overwrite) as outputs:
        metrics = [load_eval_run(run_dir) for run_dir in run_dirs]
        outputs.extend(report_service.emit_report(metrics, out).values())

    click.echo(f"Report for {len(run_dirs)} runs written to {out}")
