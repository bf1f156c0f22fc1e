import logging
import os

import click

from ..errors import ConfigError
from ..models import AugmentConfig, MixConfig, TrainConfig
from ..network.config import ArchConfig
from ..services.checkpoint_service import BEST_NAME, LAST_NAME
from ..services.dataset_service import read_meta, list_trajectories, trajectory_dir
from ..services.training_service import CONFIG_NAME, TRAINING_LOG_NAME, training_service
from . import default_out, guarded_run, split_paths

logger = logging.getLogger(__name__)


@click.command('train')
@click.option('--data', required=True, help='Training dataset root, or two roots "A,B" to mix.')
@click.option('--ratio', default='1:1', show_default=True, help='Sampling ratio a:b between mixed datasets.')
@click.option('--val', 'val_root', type=click.Path(exists=True, file_okay=False),
              help='Validation dataset root; the first training root is used when omitted.')
@click.option('--epochs', type=click.IntRange(min=0), default=60, show_default=True)
@click.option('--batch', 'batch_size', type=click.IntRange(min=1), default=3, show_default=True)
@click.option('--lr', 'learning_rate', type=click.FloatRange(min=0.0, min_open=True), default=1e-4, show_default=True)
@click.option('--loss-weight', type=click.FloatRange(min=0.0), default=0.15, show_default=True,
              help='Weight w of the semantic loss.')
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--levels', type=click.Choice(['4', '5', '6']), default='5', show_default=True)
@click.option('--tasks', type=click.Choice(['joint', 'depth', 'semantic']), default='joint', show_default=True)
@click.option('--sequence-length', type=click.IntRange(min=1), default=3, show_default=True)
@click.option('--semantic-sncv', is_flag=True, help='Add a correlation volume to the semantic decoder.')
@click.option('--max-depth-cap', type=click.FloatRange(min=0.0, min_open=True), default=80.0, show_default=True,
              help='Depth cap used for validation metrics.')
@click.option('--epoch-size', type=click.IntRange(min=0), help='Sequences per epoch.')
@click.option('--lr-drop-epoch', type=click.IntRange(min=1), help='Epoch from which the learning rate is dropped.')
@click.option('--lr-drop-factor', type=click.FloatRange(min=0.0, min_open=True), default=0.1, show_default=True)
@click.option('--view', type=click.Choice(['nadir', 'forward']), default='nadir', show_default=True,
              help='Rotation augmentation regime.')
@click.option('--no-augment', is_flag=True, help='Disable every augmentation.')
@click.option('--exclude-sky', is_flag=True, help='Leave sky pixels out of the depth loss.')
@click.option('--keep-all', is_flag=True, help='Keep one checkpoint per epoch.')
@click.option('--out', type=click.Path(file_okay=False), help='Run directory.')
@click.option('--overwrite', is_flag=True, help='Replace an existing run in --out.')
@click.pass_obj
def train_cmd(app, data, ratio, val_root, epochs, batch_size, learning_rate, loss_weight, seed, levels, tasks,
              sequence_length, semantic_sncv, max_depth_cap, epoch_size, lr_drop_epoch, lr_drop_factor, view,
              no_augment, exclude_sky, keep_all, out, overwrite):
    """Train the joint depth and segmentation network."""
    out = default_out(app, 'train', out)
    roots = split_paths(data)
    if not roots or len(roots) > 2:
        raise ConfigError("--data takes one root or two comma-separated roots")
    if tasks == 'semantic' and sequence_length != 1:
        logger.info("Semantic-only model ignores earlier frames; using sequences of 1")
        sequence_length = 1

    augment = AugmentConfig.disabled() if no_augment else AugmentConfig(view=view)
    config = TrainConfig(
        learning_rate=learning_rate, batch_size=batch_size, epochs=epochs, loss_weight=loss_weight,
        augment=augment, seed=seed, sequence_length=sequence_length, max_depth_cap=max_depth_cap,
        mix=MixConfig(root_b=os.path.abspath(roots[1]), ratio=ratio) if len(roots) == 2 else None,
        epoch_size=epoch_size, lr_drop_epoch=lr_drop_epoch, lr_drop_factor=lr_drop_factor,
        include_sky=not exclude_sky, keep_all_checkpoints=keep_all,
    )
    ids = list_trajectories(roots[0])
    max_depth = float(read_meta(trajectory_dir(roots[0], ids[0]))['max_depth']) if ids else 200.0
    arch = ArchConfig(num_levels=int(levels), tasks=tasks, sequence_length=sequence_length,
                      semantic_sncv=semantic_sncv, max_depth=max_depth)

    parameters = dict(config.to_dict(), arch=arch.to_dict())
    inputs = roots + ([val_root] if val_root else [])
    with guarded_run('train', parameters, inputs, out, overwrite) as outputs:
        result = training_service.train(config, roots[:1], val_root, out, arch)
        outputs.extend(os.path.join(out, name) for name in (CONFIG_NAME, TRAINING_LOG_NAME, BEST_NAME, LAST_NAME))
        outputs.extend(p for p in result.checkpoint_paths if p not in outputs)

    best = result.best
    summary = f"Best checkpoint: epoch {best.epoch}"
    if best.seg_metrics is not None:
        summary += f", mIoU {best.seg_metrics.miou:.4f}"
    if best.depth_metrics is not None:
        summary += f", RMSE {best.depth_metrics.rmse:.4f}"
    click.echo(summary)
