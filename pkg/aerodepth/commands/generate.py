import json
import logging
import os

import click

from ..errors import ConfigError
from ..models import CameraIntrinsics, SceneSpec
from ..services.dataset_service import dataset_service, trajectory_dir
from ..services.render_service import random_scene
from ..services.trajectory_service import trajectory_service
from . import default_out, guarded_run

logger = logging.getLogger(__name__)

WAYPOINTS = 4


def load_scene(path: str) -> SceneSpec:
    try:
        with open(path) as handle:
            return SceneSpec.from_dict(json.load(handle))
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"Cannot load scene spec {path}: {e}")


@click.command('generate')
@click.option('--scene', 'scene_path', type=click.Path(exists=True, dir_okay=False),
              help='Scene spec JSON; a procedural scene is drawn from the seed when omitted.')
@click.option('--frames', type=click.IntRange(min=1), default=32, show_default=True, help='Frames per trajectory.')
@click.option('--trajectories', type=click.IntRange(min=1), default=1, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--view', type=click.Choice(['nadir', 'forward']), default='nadir', show_default=True)
@click.option('--width', type=click.IntRange(min=1), default=96, show_default=True)
@click.option('--height', type=click.IntRange(min=1), default=96, show_default=True)
@click.option('--fov', type=click.FloatRange(1.0, 179.0), default=90.0, show_default=True,
              help='Horizontal field of view in degrees.')
@click.option('--max-depth', type=click.FloatRange(min=0.0, min_open=True), help='Sky depth in meters.')
@click.option('--min-altitude', type=float, default=10.0, show_default=True)
@click.option('--max-altitude', type=float, default=100.0, show_default=True)
@click.option('--step', type=click.FloatRange(min=0.0, min_open=True), default=1.5, show_default=True,
              help='Approximate flight distance between frames in meters.')
@click.option('--workers', type=click.IntRange(min=1), help='Render worker threads.')
@click.option('--out', type=click.Path(file_okay=False), help='Dataset root.')
@click.option('--overwrite', is_flag=True, help='Replace an existing run in --out.')
@click.pass_obj
def generate_cmd(app, scene_path, frames, trajectories, seed, view, width, height, fov, max_depth,
                 min_altitude, max_altitude, step, workers, out, overwrite):
    """Render a synthetic dataset with ground-truth depth, classes and poses."""
    out = default_out(app, 'generate', out)
    if min_altitude <= 0 or max_altitude < min_altitude:
        raise ConfigError(f"Altitude range {min_altitude}..{max_altitude} is invalid")
    parameters = dict(scene=scene_path, frames=frames, trajectories=trajectories, seed=seed, view=view,
                      width=width, height=height, fov=fov, max_depth=max_depth, min_altitude=min_altitude,
                      max_altitude=max_altitude, step=step)
    inputs = [scene_path] if scene_path else []

    with guarded_run('generate', parameters, inputs, out, overwrite) as outputs:
        scene = load_scene(scene_path) if scene_path else random_scene(seed, view)
        intr = CameraIntrinsics.from_fov(width, height, fov)
        frame_rate = float(app.config.get('DEFAULT_FRAME_RATE', 20.0))
        leg_length = step * max(frames - 1, 1) / (WAYPOINTS - 1)
        poses = []
        for trajectory_id in range(trajectories):
            _, trajectory = trajectory_service.build(seed + trajectory_id, frames, view,
                                                     (min_altitude, max_altitude), frame_rate,
                                                     WAYPOINTS, leg_length)
            poses.append(trajectory)
        manifest = dataset_service.generate_dataset(scene, poses, intr, out, max_depth=max_depth,
                                                    workers=workers, frame_rate=frame_rate)
        with open(os.path.join(out, 'scene.json'), 'w') as handle:
            json.dump(scene.to_dict(), handle, indent=2, sort_keys=True)
        outputs.append(os.path.join(out, 'scene.json'))
        for trajectory_id in sorted(manifest['trajectories']):
            outputs.append(trajectory_dir(out, trajectory_id))

    click.echo(f"Wrote {manifest['frames']} frames in {len(manifest['trajectories'])} trajectories to {out}")
