import logging
import os

import click

from ..geometry.reconstruction import point_cloud_from_maps, write_point_cloud
from ..services.training_service import training_service
from . import default_out, guarded_run

logger = logging.getLogger(__name__)


@click.command('reconstruct')
@click.option('--ckpt', required=True, type=click.Path(exists=True, dir_okay=False), help='Checkpoint file.')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False), help='Dataset root.')
@click.option('--frame', 'frame_index', required=True, type=click.IntRange(min=0), help='Frame index.')
@click.option('--trajectory', 'trajectory_id', type=click.IntRange(min=0),
              help='Trajectory id; the first trajectory when omitted.')
@click.option('--trunc', type=click.FloatRange(min=0.0, min_open=True), default=200.0, show_default=True,
              help='Points at or beyond this depth are dropped.')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--overwrite', is_flag=True, help='Replace an existing run in --out.')
@click.pass_obj
def reconstruct_cmd(app, ckpt, data, frame_index, trajectory_id, trunc, out, overwrite):
    """Back-project a predicted depth map into a labeled point cloud."""
    out = default_out(app, 'reconstruct', out)
    parameters = dict(ckpt=os.path.abspath(ckpt), data=os.path.abspath(data), frame=frame_index,
                      trajectory=trajectory_id, trunc=trunc)
    with guarded_run('reconstruct', parameters, [ckpt, data], out, overwrite) as outputs:
        sample, output, checkpoint = training_service.predict(ckpt, data, frame_index, trajectory_id)
        if output.depth is None:
            click.echo("Checkpoint has no depth head; reconstructing from ground-truth depth", err=True)
            depth = sample.depth
        else:
            depth = output.depth_map(0, checkpoint.arch.max_depth)
        labels = output.seg_classes(0) if output.seg_logits is not None else sample.seg
        cloud = point_cloud_from_maps(depth, labels, sample.intrinsics, trunc, rgb=sample.rgb)
        path = write_point_cloud(cloud, os.path.join(
            out, f"{sample.trajectory_id:03d}_{sample.frame_index:06d}_cloud.txt"))
        outputs.append(path)

    click.echo(f"Wrote {len(cloud)} points to {path}")
