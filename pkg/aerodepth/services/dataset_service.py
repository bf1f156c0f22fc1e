"""
On-disk dataset format, ground-truth curation and dataset generation.

Layout under a dataset root:
    trajectory_<id>/rgb/<frame:06>.png     8-bit RGB
    trajectory_<id>/depth/<frame:06>.png   16-bit, meters = value * depth_scale
    trajectory_<id>/seg/<frame:06>.png     8-bit class index
    trajectory_<id>/poses.csv              frame,x,y,z,qw,qx,qy,qz
    trajectory_<id>/meta.json              intrinsics, depth scale, palette, frame rate, seed
"""
import csv
import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from logging_config import log_dataset_error
from ..errors import AerodepthError, DatasetLoadError, ShapeError, TrajectoryError
from ..geometry.camera import relative_transform
from ..geometry.warping import reprojection_coordinates, warp_map
from ..models import (
    CLASS_NAMES, DEFAULT_PALETTE, SKY,
    CameraIntrinsics, DepthMap, FrameSample, Pose, SceneSpec,
)
from ..utils import image_io
from ..utils.filters import median_filter
from .render_service import render_service

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
POSE_HEADER = ['frame', 'x', 'y', 'z', 'qw', 'qx', 'qy', 'qz']
TRAJECTORY_PATTERN = re.compile(r'^trajectory_(\d+)$')


def trajectory_dir(root: str, trajectory_id: int) -> str:
    return os.path.join(root, f"trajectory_{trajectory_id}")


def frame_name(frame_index: int) -> str:
    return f"{frame_index:06d}.png"


# ============================================================================
# CURATION AND CHECKS
# ============================================================================

def enforce_sky_coupling(depth: np.ndarray, seg: np.ndarray, max_depth: float):
    """Sky pixels carry exactly max_depth and every max_depth pixel is Sky"""
    seg = np.where(depth >= max_depth, SKY, seg).astype(np.uint8)
    depth = np.where(seg == SKY, float(max_depth), depth)
    return depth, seg


def curate_frame(sample: FrameSample, window: int) -> FrameSample:
    """Median-filter depth and seg (RGB untouched), then restore the sky/depth coupling"""
    max_depth = sample.depth.max_depth
    depth = median_filter(sample.depth.values, window)
    seg = median_filter(sample.seg, window)
    depth, seg = enforce_sky_coupling(depth, seg, max_depth)
    return FrameSample(rgb=sample.rgb, depth=DepthMap(depth, max_depth), seg=seg, pose=sample.pose,
                       intrinsics=sample.intrinsics, frame_index=sample.frame_index,
                       trajectory_id=sample.trajectory_id)


def frame_overlap(a: FrameSample, b: FrameSample) -> float:
    """Fraction of b's non-sky pixels that reproject inside frame a (1.0 when b is all sky)"""
    solid = b.seg != SKY
    if not solid.any():
        return 1.0
    motion = relative_transform(a.pose, b.pose)
    i, j, z = reprojection_coordinates(b.depth, motion, b.intrinsics)
    inside = (z > 0) & (i >= 0) & (i <= a.intrinsics.width - 1) & (j >= 0) & (j <= a.intrinsics.height - 1)
    return float(inside[solid].mean())


def consistency_ratio(a: FrameSample, b: FrameSample, depth_tolerance: float = 0.05) -> float:
    """
    Agreement between b's class map and a's class map warped onto b, over
    non-sky pixels of b that are visible in a.

    A pixel counts as visible when its depth in frame a matches a's own depth
    at the landing pixel within `depth_tolerance` (relative).
    """
    motion = relative_transform(a.pose, b.pose)
    warped_seg, valid = warp_map(a.seg, b.depth, motion, b.intrinsics, 'nearest')
    warped_depth, _ = warp_map(a.depth.values, b.depth, motion, b.intrinsics, 'nearest')
    _, _, z_in_a = reprojection_coordinates(b.depth, motion, b.intrinsics)
    visible = valid & (np.abs(z_in_a - warped_depth) <= depth_tolerance * np.maximum(z_in_a, 1e-9))
    considered = visible & (b.seg != SKY)
    if not considered.any():
        return 1.0
    return float((warped_seg[considered] == b.seg[considered]).mean())


# ============================================================================
# READ / WRITE
# ============================================================================

def _write_trajectory(samples: List[FrameSample], directory: str, meta: Dict) -> int:
    intr = samples[0].intrinsics
    max_depth = samples[0].depth.max_depth
    scale = image_io.depth_scale_for(max_depth)
    shape = samples[0].depth.shape
    for sample in samples:
        if sample.intrinsics != intr or sample.depth.shape != shape:
            raise ShapeError(f"Frame {sample.frame_index} differs in resolution or intrinsics "
                             f"within trajectory {sample.trajectory_id}")
    for folder in ('rgb', 'depth', 'seg'):
        os.makedirs(os.path.join(directory, folder), exist_ok=True)

    with open(os.path.join(directory, 'poses.csv'), 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(POSE_HEADER)
        for sample in samples:
            name = frame_name(sample.frame_index)
            codes = image_io.encode_depth(sample.depth.values, scale)
            sky = sample.seg == SKY
            codes = np.where(sky, image_io.DEPTH_CODE_MAX,
                             np.minimum(codes, image_io.DEPTH_CODE_MAX - 1)).astype(np.uint16)
            image_io.save_rgb(os.path.join(directory, 'rgb', name), sample.rgb)
            image_io.save_depth_codes(os.path.join(directory, 'depth', name), codes)
            image_io.save_class_map(os.path.join(directory, 'seg', name), sample.seg)
            values = [*sample.pose.position, *sample.pose.orientation]
            writer.writerow([sample.frame_index] + [format(float(v), '.17g') for v in values])

    record = dict(meta)
    record.update({
        'format_version': FORMAT_VERSION,
        'intrinsics': intr.to_dict(),
        'max_depth': float(max_depth),
        'depth_scale': scale,
        'frame_count': len(samples),
    })
    record.setdefault('class_names', list(CLASS_NAMES))
    record.setdefault('class_palette', [list(c) for c in DEFAULT_PALETTE])
    record.setdefault('frame_rate', 20.0)
    record.setdefault('seed', 0)
    with open(os.path.join(directory, 'meta.json'), 'w') as handle:
        json.dump(record, handle, indent=2, sort_keys=True)
    return len(samples)


def write_dataset(samples: Sequence[FrameSample], root: str, meta: Optional[Dict] = None,
                  workers: int = 1) -> Dict:
    """
    Write samples grouped by trajectory, one writer per trajectory directory.

    Returns:
        Manifest with the frame count per trajectory
    """
    groups: Dict[int, List[FrameSample]] = {}
    for sample in samples:
        groups.setdefault(int(sample.trajectory_id), []).append(sample)
    os.makedirs(root, exist_ok=True)

    def write(item):
        trajectory_id, frames = item
        frames = sorted(frames, key=lambda s: s.frame_index)
        return trajectory_id, _write_trajectory(frames, trajectory_dir(root, trajectory_id), meta or {})

    items = sorted(groups.items())
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            written = dict(pool.map(write, items))
    else:
        written = dict(write(item) for item in items)

    logger.info(f"Wrote {sum(written.values())} frames in {len(written)} trajectories to {root}")
    return {'root': root, 'trajectories': written, 'frames': int(sum(written.values()))}


def list_trajectories(root: str) -> List[int]:
    if not os.path.isdir(root):
        raise DatasetLoadError(f"Dataset root {root} does not exist")
    ids = []
    for entry in os.listdir(root):
        match = TRAJECTORY_PATTERN.match(entry)
        if match and os.path.isdir(os.path.join(root, entry)):
            ids.append(int(match.group(1)))
    return sorted(ids)


def read_meta(directory: str) -> Dict:
    path = os.path.join(directory, 'meta.json')
    try:
        with open(path) as handle:
            meta = json.load(handle)
    except (OSError, ValueError) as e:
        raise DatasetLoadError(f"Cannot read {path}: {e}", frame=path)
    if meta.get('format_version') != FORMAT_VERSION:
        raise DatasetLoadError(f"{path} has unsupported format version {meta.get('format_version')}", frame=path)
    return meta


def _read_poses(directory: str) -> Dict[int, Pose]:
    path = os.path.join(directory, 'poses.csv')
    poses = {}
    try:
        with open(path, newline='') as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            if header != POSE_HEADER:
                raise DatasetLoadError(f"{path} has header {header}, expected {POSE_HEADER}", frame=path)
            for row in reader:
                if not row:
                    continue
                values = [float(v) for v in row[1:]]
                poses[int(row[0])] = Pose(values[:3], values[3:7])
    except OSError as e:
        raise DatasetLoadError(f"Cannot read {path}: {e}", frame=path)
    except (ValueError, IndexError) as e:
        raise DatasetLoadError(f"Malformed pose row in {path}: {e}", frame=path)
    return poses


def read_trajectory(root: str, trajectory_id: int) -> List[FrameSample]:
    directory = trajectory_dir(root, trajectory_id)
    meta = read_meta(directory)
    intr = CameraIntrinsics.from_dict(meta['intrinsics'])
    max_depth = float(meta['max_depth'])
    scale = float(meta['depth_scale'])
    class_count = len(meta.get('class_names') or CLASS_NAMES)
    samples = []
    for frame_index, pose in sorted(_read_poses(directory).items()):
        name = frame_name(frame_index)
        try:
            rgb = image_io.load_rgb(os.path.join(directory, 'rgb', name))
            codes = image_io.load_depth_codes(os.path.join(directory, 'depth', name))
            seg = image_io.load_class_map(os.path.join(directory, 'seg', name))
            if seg.size and int(seg.max()) >= class_count:
                raise DatasetLoadError(f"class index {int(seg.max())} out of range")
            sample = FrameSample(rgb=rgb, depth=DepthMap(image_io.decode_depth(codes, scale, max_depth), max_depth),
                                 seg=seg, pose=pose, intrinsics=intr, frame_index=frame_index,
                                 trajectory_id=trajectory_id)
        except AerodepthError as e:
            message = f"Failed to load frame {frame_index} of trajectory {trajectory_id} in {root}: {e}"
            log_dataset_error(message)
            raise DatasetLoadError(message, frame=os.path.join(directory, name))
        samples.append(sample)
    return samples


def read_dataset(root: str) -> List[FrameSample]:
    """All frames of every trajectory, ordered by trajectory then frame"""
    samples = []
    for trajectory_id in list_trajectories(root):
        samples.extend(read_trajectory(root, trajectory_id))
    if not samples:
        raise DatasetLoadError(f"Dataset root {root} holds no frames")
    return samples


def dataset_intrinsics(root: str) -> CameraIntrinsics:
    ids = list_trajectories(root)
    if not ids:
        raise DatasetLoadError(f"Dataset root {root} holds no trajectories")
    return CameraIntrinsics.from_dict(read_meta(trajectory_dir(root, ids[0]))['intrinsics'])


# ============================================================================
# GENERATION
# ============================================================================

class DatasetService:
    """Renders, curates, checks and writes synthetic datasets"""

    def __init__(self, app=None):
        self.app = app
        self.max_depth = 200.0
        self.median_window = 10
        self.min_overlap = 0.3
        self.workers = 1

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.max_depth = float(app.config.get('DEFAULT_MAX_DEPTH', 200.0))
        self.median_window = int(app.config.get('MEDIAN_WINDOW', 10))
        self.min_overlap = float(app.config.get('MIN_FRAME_OVERLAP', 0.3))
        self.workers = int(app.config.get('RENDER_WORKERS', 1))

    def generate_dataset(self, scene: SceneSpec, trajectories: Sequence[Sequence[Pose]],
                         intr: CameraIntrinsics, root: str, max_depth: Optional[float] = None,
                         window: Optional[int] = None, workers: Optional[int] = None,
                         frame_rate: float = 20.0, min_overlap: Optional[float] = None) -> Dict:
        """
        Render every trajectory, curate its frames, check frustum overlap and write it.

        Raises:
            TrajectoryError: consecutive frames overlap less than the minimum
        """
        max_depth = self.max_depth if max_depth is None else max_depth
        window = self.median_window if window is None else window
        workers = self.workers if workers is None else workers
        min_overlap = self.min_overlap if min_overlap is None else min_overlap

        samples = []
        for trajectory_id, poses in enumerate(trajectories):
            frames = render_service.render_sequence(scene, poses, intr, max_depth, trajectory_id, workers)
            for previous, current in zip(frames, frames[1:]):
                overlap = frame_overlap(previous, current)
                if overlap < min_overlap:
                    message = (f"Frames {previous.frame_index} and {current.frame_index} of trajectory "
                               f"{trajectory_id} overlap {overlap:.2f} < {min_overlap}")
                    log_dataset_error(message)
                    raise TrajectoryError(message)
            if window > 1:
                frames = [curate_frame(frame, window) for frame in frames]
            samples.extend(frames)
            logger.info(f"Rendered trajectory {trajectory_id}: {len(frames)} frames")

        meta = {
            'seed': int(scene.seed),
            'frame_rate': float(frame_rate),
            'class_palette': [list(c) for c in scene.class_palette],
            'median_window': int(window),
        }
        return write_dataset(samples, root, meta, workers=workers)


dataset_service = DatasetService()
