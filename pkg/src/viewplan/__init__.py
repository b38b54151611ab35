"""Budget-constrained viewpoint planning for aerial 3D reconstruction.

The planner picks camera poses from a graph of free-space candidates so that
a fixed travel budget buys as much well-observed surface as possible; the
evaluation harness replays plans against synthetic scenes and scores the
fused reconstruction.
"""

from .evaluation import FusionParams, MetricsReport, f_score, fuse_depth_maps, precision_recall_f1
from .geometry import Box, CameraIntrinsics, Viewpoint
from .graph import RRTParams, SamplerParams, ViewpointGraph, find_motion, generate_viewpoints, shortest_path
from .occupancy import OccupancyMap, OccupancyParams, VoxelClass, VoxelKey
from .planner import (BudgetParams, CoverageState, Trajectory, brute_force_oracle, cost_benefit_baseline,
                      greedy_baseline, recursive_greedy)
from .scene import Scene, load_scene, ray_mesh_intersect, render_depth_normal
from .visibility import InformationParams, ViewpointObservation, compute_observation, matchable

__version__ = "0.1.0"

__all__ = [
    "Box", "BudgetParams", "CameraIntrinsics", "CoverageState", "FusionParams", "InformationParams",
    "MetricsReport", "OccupancyMap", "OccupancyParams", "RRTParams", "SamplerParams", "Scene", "Trajectory",
    "Viewpoint", "ViewpointGraph", "ViewpointObservation", "VoxelClass", "VoxelKey", "brute_force_oracle",
    "compute_observation", "cost_benefit_baseline", "f_score", "find_motion", "fuse_depth_maps",
    "generate_viewpoints", "greedy_baseline", "load_scene", "matchable", "precision_recall_f1",
    "ray_mesh_intersect", "recursive_greedy", "render_depth_normal", "shortest_path",
]
