"""Layered 3D scene graphs and pipe-system functional graphs from mesh scenes."""

from .clustering import NOISE, Clustering, connected_components, dbscan
from .functional import FunctionalGraph, extract_functional_relations, identify_functional_units
from .geometry import Box3, PointSet, surface_points
from .grouping import MeshGroup, group_small_meshes
from .labeling import FileLabeler, RemoteLabeler, SemanticLabel, Vocabulary, label_scene
from .pipeline import PipelineConfig, run_all
from .scene_graph import SceneGraph, build_scene_graph
from .scene_io import Mesh, Scene, apply_exclusions, load_scene
from .spatial_index import SparseDistanceMap, build_grid, min_distance, pairwise_min_distances

__version__ = "0.1.0"

__all__ = [
    "Box3",
    "Clustering",
    "FileLabeler",
    "FunctionalGraph",
    "Mesh",
    "MeshGroup",
    "NOISE",
    "PipelineConfig",
    "PointSet",
    "RemoteLabeler",
    "Scene",
    "SceneGraph",
    "SemanticLabel",
    "SparseDistanceMap",
    "Vocabulary",
    "apply_exclusions",
    "build_grid",
    "build_scene_graph",
    "connected_components",
    "dbscan",
    "extract_functional_relations",
    "group_small_meshes",
    "identify_functional_units",
    "label_scene",
    "load_scene",
    "min_distance",
    "pairwise_min_distances",
    "run_all",
    "surface_points",
]
