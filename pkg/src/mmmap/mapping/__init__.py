"""Accumulated multimodal map: occupancy voxels, scene graph and places."""
from .map import (
    ChecksumError,
    MapFormatError,
    MappingParams,
    MapSnapshot,
    MultimodalMap,
    TimeRegressionError,
    UnsupportedVersionError,
    export_snapshot,
    integrate_frame,
    load_map,
    save_map,
    snapshot_instantaneous,
)
from .places import MODALITIES, PLACE_DIM, ModalityError, PlaceDatabase, compute_place_descriptor
from .scene_graph import CameraView, Node, SceneGraph, infer_spatial_relations, update_scene_graph
from .voxels import VoxelGrid, update_voxel_grid

__all__ = [
    "CameraView", "ChecksumError", "MODALITIES", "MapFormatError", "MapSnapshot", "MappingParams",
    "ModalityError", "MultimodalMap", "Node", "PLACE_DIM", "PlaceDatabase", "SceneGraph",
    "TimeRegressionError", "UnsupportedVersionError", "VoxelGrid", "compute_place_descriptor",
    "export_snapshot", "infer_spatial_relations", "integrate_frame", "load_map", "save_map",
    "snapshot_instantaneous", "update_scene_graph", "update_voxel_grid",
]
