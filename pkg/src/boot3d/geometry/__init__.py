from .grid import VoxelGrid, sphere_grid
from .marching_cubes import marching_cubes
from .mesh import (
    LANDMARK_NAMES,
    Aabb,
    TriangleMesh,
    box_mesh,
    icosphere,
    is_watertight,
    mesh_area,
    mesh_bounds,
    mesh_centroid,
    mesh_volume,
)
from .voxelize import inside_mask, voxelize
