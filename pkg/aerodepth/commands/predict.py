import logging
import os

import click
import numpy as np

from ..models import DEFAULT_PALETTE
from ..services.training_service import training_service
from ..utils import image_io
from . import default_out, guarded_run

logger = logging.getLogger(__name__)


@click.command('predict')
@click.option('--ckpt', required=True, type=click.Path(exists=True, dir_okay=False), help='Checkpoint file.')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False), help='Dataset root.')
@click.option('--frame', 'frame_index', required=True, type=click.IntRange(min=0), help='Frame index to predict.')
@click.option('--trajectory', 'trajectory_id', type=click.IntRange(min=0),
              help='Trajectory id; the first trajectory when omitted.')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory.')
@click.option('--overwrite', is_flag=True, help='Replace an existing run in --out.')
@click.pass_obj
def predict_cmd(app, ckpt, data, frame_index, trajectory_id, out, overwrite):
    """Write depth and class images predicted for one frame."""
    out = default_out(app, 'predict', out)
    parameters = dict(ckpt=os.path.abspath(ckpt), data=os.path.abspath(data), frame=frame_index,
                      trajectory=trajectory_id)
    with guarded_run('predict', parameters, [ckpt, data], out, overwrite) as outputs:
        sample, output, checkpoint = training_service.predict(ckpt, data, frame_index, trajectory_id)
        stem = f"{sample.trajectory_id:03d}_{sample.frame_index:06d}"
        if output.depth is not None:
            depth = output.depth_map(0, checkpoint.arch.max_depth).values
            scale = image_io.depth_scale_for(checkpoint.arch.max_depth)
            depth_path = os.path.join(out, f"{stem}_depth.png")
            image_io.save_depth_codes(depth_path, image_io.encode_depth(depth, scale))
            preview_path = os.path.join(out, f"{stem}_depth_preview.png")
            preview = 255.0 * (1.0 - np.clip(depth / checkpoint.arch.max_depth, 0.0, 1.0))
            image_io.save_rgb(preview_path, np.repeat(preview.astype(np.uint8)[..., None], 3, axis=-1))
            outputs.extend([depth_path, preview_path])
        if output.seg_logits is not None:
            classes = output.seg_classes(0)
            seg_path = os.path.join(out, f"{stem}_seg.png")
            image_io.save_class_map(seg_path, classes)
            colored_path = os.path.join(out, f"{stem}_seg_color.png")
            image_io.save_colorized(colored_path, classes, DEFAULT_PALETTE)
            outputs.extend([seg_path, colored_path])

    click.echo(f"Wrote {len(outputs)} images for frame {sample.frame_index} to {out}")
