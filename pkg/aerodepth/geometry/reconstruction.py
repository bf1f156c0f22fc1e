import logging
import os
from typing import Optional

import numpy as np

from ..errors import DatasetLoadError, ShapeError
from ..models import DEFAULT_PALETTE, CameraIntrinsics, DepthMap, LabeledPointCloud
from .camera import pixel_grid

logger = logging.getLogger(__name__)

POINT_FIELDS = ('x', 'y', 'z', 'label', 'r', 'g', 'b')
NO_LABEL = -1


def point_cloud_from_maps(depth: DepthMap, labels_or_rgb: np.ndarray, intr: CameraIntrinsics,
                          max_depth_trunc: float, rgb: Optional[np.ndarray] = None,
                          palette=DEFAULT_PALETTE) -> LabeledPointCloud:
    """
    Back-project every pixel closer than `max_depth_trunc` into a camera-frame point.

    Args:
        depth: optical-axis depth map
        labels_or_rgb: (H, W) class map or (H, W, 3) color image
        intr: camera intrinsics
        max_depth_trunc: pixels at or beyond this depth are dropped
        rgb: optional colors when `labels_or_rgb` is a class map; the palette is used otherwise

    Returns:
        LabeledPointCloud (labels are -1 when only colors were given)
    """
    values = depth.values
    annotations = np.asarray(labels_or_rgb)
    if annotations.shape[:2] != values.shape or values.shape != intr.shape:
        raise ShapeError(f"Depth {values.shape}, annotations {annotations.shape[:2]} and "
                         f"intrinsics {intr.shape} must share a resolution")

    keep = (values < max_depth_trunc) & (values > 0)
    i, j = pixel_grid(*values.shape)
    z = values[keep]
    points = np.stack([
        (i[keep] - intr.cx) * z / intr.fx,
        (j[keep] - intr.cy) * z / intr.fy,
        z,
    ], axis=-1)

    if annotations.ndim == 3:
        labels = np.full(len(z), NO_LABEL, dtype=np.int64)
        colors = annotations[keep]
    else:
        labels = annotations[keep].astype(np.int64)
        if rgb is not None:
            colors = np.asarray(rgb)[keep]
        else:
            colors = np.asarray(palette, dtype=np.uint8)[labels]

    logger.debug(f"Reconstructed {len(z)} of {values.size} pixels (trunc {max_depth_trunc} m)")
    return LabeledPointCloud(points, labels, colors)


def write_point_cloud(cloud: LabeledPointCloud, path: str) -> str:
    """Write an ASCII cloud: `count N`, `fields x y z label r g b`, then one point per line"""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w') as handle:
        handle.write(f"count {len(cloud)}\n")
        handle.write(f"fields {' '.join(POINT_FIELDS)}\n")
        for point, label, color in zip(cloud.points, cloud.labels, cloud.colors):
            handle.write(f"{point[0]:.9g} {point[1]:.9g} {point[2]:.9g} {int(label)} "
                         f"{int(color[0])} {int(color[1])} {int(color[2])}\n")
    return path


def read_point_cloud(path: str) -> LabeledPointCloud:
    try:
        with open(path) as handle:
            count_line = handle.readline().split()
            fields_line = handle.readline().split()
            rows = [line.split() for line in handle if line.strip()]
    except OSError as e:
        raise DatasetLoadError(f"Cannot read point cloud {path}: {e}")

    if len(count_line) != 2 or count_line[0] != 'count' or tuple(fields_line[1:]) != POINT_FIELDS:
        raise DatasetLoadError(f"Point cloud {path} has a malformed header")
    count = int(count_line[1])
    if count != len(rows):
        raise DatasetLoadError(f"Point cloud {path} declares {count} points but holds {len(rows)}")
    if count == 0:
        return LabeledPointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), np.zeros((0, 3), dtype=np.uint8))
    table = np.array(rows, dtype=np.float64)
    return LabeledPointCloud(table[:, :3], table[:, 3].astype(np.int64), table[:, 4:7].astype(np.uint8))
