from .camera import (
    compose_transforms,
    invert_transform,
    pixel_grid,
    project,
    relative_transform,
    transform_points,
    unproject,
    unproject_map,
)
from .reconstruction import point_cloud_from_maps, read_point_cloud, write_point_cloud
from .rotations import matrix_from_quaternion, quaternion_from_matrix
from .warping import (
    depth_from_parallax,
    depth_from_parallax_tensor,
    parallax_from_depth,
    parallax_from_depth_tensor,
    reprojected_depth,
    reprojection_coordinates,
    warp_map,
    warp_tensor,
)
