"""
Ray-cast renderer producing RGB frames with exact optical-axis depth and
class maps. World frame is Z up; primitives live in their own local frames.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..geometry.rotations import quaternion_from_euler
from ..models import (
    BUILDING, DEFAULT_PALETTE, LAND, OTHERS, ROAD, ROCKS, SKY, TREES, VEHICLE, WATER,
    CameraIntrinsics, DepthMap, FrameSample, Pose, Primitive, SceneSpec, TerrainSpec,
)

logger = logging.getLogger(__name__)

HIT_EPS = 1e-9
TERRAIN_STEPS = 96
BISECTION_STEPS = 48
AMBIENT = 0.3
SUN_DIRECTION = np.array([0.3, 0.2, 0.93]) / np.linalg.norm([0.3, 0.2, 0.93])


class _Hits:
    """Nearest-hit buffers for a batch of rays"""

    def __init__(self, count: int):
        self.depth = np.full(count, np.inf)
        self.class_index = np.full(count, SKY, dtype=np.int64)
        self.color = np.zeros((count, 3))
        self.normal = np.zeros((count, 3))

    def update(self, s, normal, class_index, color):
        closer = np.isfinite(s) & (s < self.depth)
        self.depth[closer] = s[closer]
        self.normal[closer] = normal[closer]
        self.class_index[closer] = class_index
        self.color[closer] = color


# ============================================================================
# RAY / PRIMITIVE INTERSECTIONS (local frames, rays o + s d, d not unit)
# ============================================================================

def intersect_box(origin, direction, size):
    """Slab test against an axis-aligned box centred at the origin"""
    half = np.asarray(size, dtype=np.float64)[:3] / 2.0
    with np.errstate(divide='ignore', invalid='ignore'):
        inv = 1.0 / direction
        t0 = (-half - origin) * inv
        t1 = (half - origin) * inv
    near = np.where(np.isnan(t0), -np.inf, np.minimum(t0, t1))
    far = np.where(np.isnan(t1), np.inf, np.maximum(t0, t1))
    # rays parallel to a slab: inside -> unbounded, outside -> miss
    parallel = direction == 0
    outside = parallel & (np.abs(origin) > half)
    near = np.where(parallel, -np.inf, near)
    far = np.where(parallel, np.inf, far)

    s_near = near.max(axis=1)
    s_far = far.min(axis=1)
    hit = (s_near <= s_far) & (s_far > HIT_EPS) & ~outside.any(axis=1)
    s = np.where(s_near > HIT_EPS, s_near, s_far)
    s = np.where(hit, s, np.inf)

    entry_axis = np.argmax(near, axis=1)
    normal = np.zeros_like(origin)
    rows = np.arange(len(origin))
    normal[rows, entry_axis] = -np.sign(direction[rows, entry_axis])
    return s, normal


def _smallest_positive_root(qa, qb, qc, accept):
    """Smallest root s > eps of qa s^2 + qb s + qc = 0 that passes `accept(s)`"""
    disc = qb * qb - 4.0 * qa * qc
    real = (disc >= 0) & (np.abs(qa) > 1e-15)
    root = np.sqrt(np.where(real, disc, 0.0))
    safe_qa = np.where(real, qa, 1.0)
    roots = np.stack([(-qb - root) / (2.0 * safe_qa), (-qb + root) / (2.0 * safe_qa)], axis=1)
    best = np.full(len(qa), np.inf)
    for k in range(2):
        s = roots[:, k]
        ok = real & (s > HIT_EPS) & accept(s)
        best = np.where(ok & (s < best), s, best)
    return best


def intersect_sphere(origin, direction, size):
    radius = float(size[0])
    qa = np.einsum('ij,ij->i', direction, direction)
    qb = 2.0 * np.einsum('ij,ij->i', origin, direction)
    qc = np.einsum('ij,ij->i', origin, origin) - radius * radius
    s = _smallest_positive_root(qa, qb, qc, lambda s: np.ones_like(s, dtype=bool))
    point = origin + np.where(np.isfinite(s), s, 0.0)[:, None] * direction
    return s, point / radius


def intersect_cone(origin, direction, size):
    """Upright cone: base disk of `radius` at z=0, apex at z=height"""
    radius, height = float(size[0]), float(size[1])
    k = radius / height
    ox, oy, oz = origin.T
    dx, dy, dz = direction.T
    m = radius - k * oz
    qa = dx * dx + dy * dy - k * k * dz * dz
    qb = 2.0 * (ox * dx + oy * dy + m * k * dz)
    qc = ox * ox + oy * oy - m * m

    def on_lateral(s):
        z = oz + s * dz
        return (z >= 0.0) & (z <= height)

    s_side = _smallest_positive_root(qa, qb, qc, on_lateral)

    with np.errstate(divide='ignore', invalid='ignore'):
        s_base = np.where(dz != 0, -oz / dz, np.inf)
    bx = ox + np.where(np.isfinite(s_base), s_base, 0.0) * dx
    by = oy + np.where(np.isfinite(s_base), s_base, 0.0) * dy
    s_base = np.where((s_base > HIT_EPS) & (bx * bx + by * by <= radius * radius), s_base, np.inf)

    s = np.minimum(s_side, s_base)
    side_point = origin + np.where(np.isfinite(s_side), s_side, 0.0)[:, None] * direction
    side_normal = np.stack([
        2.0 * side_point[:, 0],
        2.0 * side_point[:, 1],
        2.0 * k * (radius - k * side_point[:, 2]),
    ], axis=1)
    base_normal = np.tile([0.0, 0.0, -1.0], (len(origin), 1))
    normal = np.where((s_base < s_side)[:, None], base_normal, side_normal)
    return s, normal


def intersect_plane_patch(origin, direction, size):
    """Rectangle in the local z=0 plane, extent size[0] x size[1]"""
    half_x, half_y = float(size[0]) / 2.0, float(size[1]) / 2.0
    with np.errstate(divide='ignore', invalid='ignore'):
        s = np.where(direction[:, 2] != 0, -origin[:, 2] / direction[:, 2], np.inf)
    finite = np.where(np.isfinite(s), s, 0.0)
    x = origin[:, 0] + finite * direction[:, 0]
    y = origin[:, 1] + finite * direction[:, 1]
    inside = (np.abs(x) <= half_x) & (np.abs(y) <= half_y) & (s > HIT_EPS)
    normal = np.tile([0.0, 0.0, 1.0], (len(origin), 1))
    return np.where(inside, s, np.inf), normal


INTERSECTORS = {
    'box': intersect_box,
    'sphere': intersect_sphere,
    'cone': intersect_cone,
    'plane-patch': intersect_plane_patch,
}


def intersect_terrain(origin, direction, terrain: TerrainSpec, max_depth: float):
    """First crossing of the heightfield within max_depth, found by marching then bisection"""
    count = len(origin)
    oz, dz = origin[:, 2], direction[:, 2]
    if terrain.amplitude == 0.0:
        with np.errstate(divide='ignore', invalid='ignore'):
            s = np.where(dz < 0, -oz / dz, np.inf)
        s = np.where(s > HIT_EPS, s, np.inf)
        return s, np.tile([0.0, 0.0, 1.0], (count, 1))

    amplitude = abs(terrain.amplitude)

    def above(s):
        point = origin + s[..., None] * direction if s.ndim == 1 else \
            origin[:, None, :] + s[..., None] * direction[:, None, :]
        return point[..., 2] - terrain.height(point[..., 0], point[..., 1])

    # only the slab |Z| <= amplitude can contain the surface
    with np.errstate(divide='ignore', invalid='ignore'):
        s_top = np.where(dz != 0, (amplitude - oz) / dz, np.where(oz <= amplitude, 0.0, np.inf))
        s_bottom = np.where(dz != 0, (-amplitude - oz) / dz, np.where(oz >= -amplitude, np.inf, -np.inf))
    s_start = np.maximum(np.minimum(s_top, s_bottom), 0.0)
    s_stop = np.minimum(np.maximum(s_top, s_bottom), max_depth)
    active = s_stop > s_start

    fractions = np.linspace(0.0, 1.0, TERRAIN_STEPS + 1)
    span = np.where(active, s_stop - s_start, 0.0)
    samples = s_start[:, None] + span[:, None] * fractions[None, :]
    heights = above(samples)
    crossing = (heights[:, :-1] > 0) & (heights[:, 1:] <= 0)
    has_hit = active & crossing.any(axis=1)
    first = np.argmax(crossing, axis=1)

    rows = np.arange(count)
    low = samples[rows, first]
    high = samples[rows, np.minimum(first + 1, TERRAIN_STEPS)]
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (low + high)
        positive = above(mid) > 0
        low = np.where(positive, mid, low)
        high = np.where(positive, high, mid)
    s = np.where(has_hit & (high > HIT_EPS), high, np.inf)

    point = origin + np.where(np.isfinite(s), s, 0.0)[:, None] * direction
    grad_x, grad_y = terrain.gradient(point[:, 0], point[:, 1])
    normal = np.stack([-grad_x, -grad_y, np.ones(count)], axis=1)
    return s, normal


# ============================================================================
# FRAME RENDERING
# ============================================================================

def camera_rays(pose: Pose, intr: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """World-frame origins and directions R (u, v, 1); ray parameter equals z-depth"""
    j, i = np.meshgrid(np.arange(intr.height, dtype=np.float64),
                       np.arange(intr.width, dtype=np.float64), indexing='ij')
    rays = np.stack([(i - intr.cx) / intr.fx, (j - intr.cy) / intr.fy, np.ones_like(i)], axis=-1)
    directions = rays.reshape(-1, 3) @ pose.rotation_matrix.T
    origins = np.broadcast_to(pose.position, directions.shape).copy()
    return origins, directions


def render_frame(scene: SceneSpec, pose: Pose, intr: CameraIntrinsics, max_depth: float,
                 frame_index: int = 0, trajectory_id: int = 0) -> FrameSample:
    """
    Ray-cast one frame.

    Depth is the optical-axis z of the nearest hit; misses and hits at or
    beyond max_depth are Sky with depth exactly max_depth.
    """
    origins, directions = camera_rays(pose, intr)
    hits = _Hits(len(origins))

    if scene.terrain is not None:
        s, normal = intersect_terrain(origins, directions, scene.terrain, max_depth)
        hits.update(s, normal, scene.terrain.class_index, scene.terrain.color)

    for primitive in scene.primitives:
        local_rotation = primitive.pose.rotation_matrix
        local_origin = (origins - primitive.pose.position) @ local_rotation
        local_direction = directions @ local_rotation
        s, normal = INTERSECTORS[primitive.shape](local_origin, local_direction, primitive.size)
        hits.update(s, normal @ local_rotation.T, primitive.class_index, primitive.color)

    sky = ~(hits.depth < max_depth)
    depth = np.where(sky, float(max_depth), hits.depth)
    seg = np.where(sky, SKY, hits.class_index)

    normal = hits.normal / np.maximum(np.linalg.norm(hits.normal, axis=1, keepdims=True), 1e-12)
    facing = np.einsum('ij,ij->i', normal, directions) > 0
    normal = np.where(facing[:, None], -normal, normal)
    shade = AMBIENT + (1.0 - AMBIENT) * np.clip(normal @ SUN_DIRECTION, 0.0, 1.0)
    rgb = np.where(sky[:, None], np.asarray(scene.sky_color, dtype=np.float64), hits.color * shade[:, None])
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

    shape = intr.shape
    return FrameSample(
        rgb=rgb.reshape(*shape, 3),
        depth=DepthMap(depth.reshape(shape), max_depth),
        seg=seg.reshape(shape).astype(np.uint8),
        pose=pose,
        intrinsics=intr,
        frame_index=frame_index,
        trajectory_id=trajectory_id,
    )


# ============================================================================
# PROCEDURAL SCENES
# ============================================================================

def _jitter(rng, class_index, palette, amount=18):
    base = np.asarray(palette[class_index], dtype=np.int64)
    return tuple(int(c) for c in np.clip(base + rng.integers(-amount, amount + 1, size=3), 0, 255))


def _yawed(position, rng) -> Pose:
    return Pose(position, quaternion_from_euler('z', float(rng.uniform(0.0, 360.0))))


def random_scene(seed: int, view: str = 'nadir', extent: float = 160.0,
                 palette=DEFAULT_PALETTE) -> SceneSpec:
    """
    Procedural scene covering every class: rolling terrain (land), lakes,
    roads, buildings, trees, rocks, vehicles and miscellaneous structures.
    """
    rng = np.random.default_rng(seed)
    terrain = TerrainSpec(
        amplitude=float(rng.uniform(0.5, 3.0)),
        frequency=float(rng.uniform(0.005, 0.02)),
        class_index=LAND,
        color=_jitter(rng, LAND, palette),
    )
    lift = terrain.amplitude + 0.05
    half = extent / 2.0
    primitives: List[Primitive] = []

    def ground(x, y):
        return float(terrain.height(np.float64(x), np.float64(y)))

    for _ in range(int(rng.integers(1, 3))):
        center = rng.uniform(-half, half, size=2)
        primitives.append(Primitive('plane-patch', _yawed([*center, lift], rng),
                                    tuple(rng.uniform(20.0, 50.0, size=2)), WATER, _jitter(rng, WATER, palette)))

    roads = []
    for _ in range(int(rng.integers(1, 3))):
        center = rng.uniform(-half / 2, half / 2, size=2)
        road = _yawed([*center, lift + 0.05], rng)
        roads.append(road)
        primitives.append(Primitive('plane-patch', road, (extent * 1.5, float(rng.uniform(6.0, 10.0))),
                                    ROAD, _jitter(rng, ROAD, palette, 8)))

    for road in roads:
        axis = road.rotation_matrix[:, 0]
        for _ in range(int(rng.integers(1, 4))):
            offset = float(rng.uniform(-half, half))
            position = road.position + offset * axis
            position[2] = lift + 0.85
            primitives.append(Primitive('box', Pose(position, road.orientation), (4.5, 2.0, 1.6),
                                        VEHICLE, _jitter(rng, VEHICLE, palette, 30)))

    for _ in range(int(rng.integers(3, 7))):
        x, y = rng.uniform(-half, half, size=2)
        size = (float(rng.uniform(8, 20)), float(rng.uniform(8, 20)), float(rng.uniform(6, 30)))
        primitives.append(Primitive('box', _yawed([x, y, ground(x, y) + size[2] / 2 - 0.5], rng), size,
                                    BUILDING, _jitter(rng, BUILDING, palette)))

    for _ in range(int(rng.integers(8, 16))):
        x, y = rng.uniform(-half, half, size=2)
        radius, height = float(rng.uniform(2.0, 4.5)), float(rng.uniform(6.0, 14.0))
        primitives.append(Primitive('cone', Pose([x, y, ground(x, y) - 0.2], [1, 0, 0, 0]), (radius, height),
                                    TREES, _jitter(rng, TREES, palette)))

    for _ in range(int(rng.integers(3, 8))):
        x, y = rng.uniform(-half, half, size=2)
        radius = float(rng.uniform(1.0, 3.0))
        primitives.append(Primitive('sphere', Pose([x, y, ground(x, y)], [1, 0, 0, 0]), (radius,),
                                    ROCKS, _jitter(rng, ROCKS, palette)))

    for _ in range(int(rng.integers(1, 3))):
        x, y = rng.uniform(-half, half, size=2)
        size = (float(rng.uniform(1.0, 3.0)), float(rng.uniform(1.0, 3.0)), float(rng.uniform(8.0, 20.0)))
        primitives.append(Primitive('box', _yawed([x, y, ground(x, y) + size[2] / 2], rng), size,
                                    OTHERS, _jitter(rng, OTHERS, palette)))

    logger.debug(f"Scene {seed} ({view}): {len(primitives)} primitives")
    return SceneSpec(seed=seed, terrain=terrain, primitives=primitives,
                     sky_color=tuple(palette[SKY]), class_palette=tuple(palette))


class RenderService:
    """Renders frame sequences, optionally across a worker pool"""

    def __init__(self, app=None):
        self.app = app
        self.max_depth = 200.0
        self.workers = 1

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.max_depth = float(app.config.get('DEFAULT_MAX_DEPTH', 200.0))
        self.workers = int(app.config.get('RENDER_WORKERS', 1))

    def render_sequence(self, scene: SceneSpec, poses: Sequence[Pose], intr: CameraIntrinsics,
                        max_depth: Optional[float] = None, trajectory_id: int = 0,
                        workers: Optional[int] = None) -> List[FrameSample]:
        """Render frames in order; results do not depend on the worker count"""
        max_depth = self.max_depth if max_depth is None else max_depth
        workers = max(1, self.workers if workers is None else workers)

        def render(index):
            return render_frame(scene, poses[index], intr, max_depth, index, trajectory_id)

        if workers == 1:
            return [render(index) for index in range(len(poses))]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(render, range(len(poses))))


render_service = RenderService()
