"""The accumulated multimodal map, instantaneous snapshots and the map file."""
from __future__ import annotations

import hashlib
import json
import struct
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry as geo
from ..perception.observations import CalibrationSet
from ..perception.tracking import LOST
from ..world.scenario import CameraSpec
from .places import MODALITIES, PlaceDatabase, PlaceEntry, compute_place_descriptor
from .scene_graph import CameraView, Node, SceneGraph, update_scene_graph
from .voxels import VoxelGrid, update_voxel_grid

MAGIC = b"M3DM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sI32sQ")


class TimeRegressionError(ValueError):
    """A frame older than the map (or with a mismatched pose time) was integrated."""


class MapFormatError(ValueError):
    """The map file is not a map file, or its payload is corrupted."""


class ChecksumError(MapFormatError):
    pass


class UnsupportedVersionError(MapFormatError):
    pass


@dataclass
class MappingParams:
    voxel_size: float = 0.2
    max_range: float = 20.0  # lidar returns farther than this are not integrated
    keyframe_stride: int = 5
    keyframe_distance: float = 0.5
    place_modalities: tuple = MODALITIES
    occlusion_margin: float = 0.5


@dataclass
class MultimodalMap:
    params: MappingParams = field(default_factory=MappingParams)
    calib: CalibrationSet | None = None
    camera: CameraSpec | None = None
    grid: VoxelGrid = None
    graph: SceneGraph = field(default_factory=SceneGraph)
    places: PlaceDatabase = None
    version: int = 0
    t_latest: float = float("-inf")
    frames_since_keyframe: int = 0
    keyframe_pose: np.ndarray | None = None
    snapshots: list = field(default_factory=list)

    def __post_init__(self):
        if self.grid is None:
            self.grid = VoxelGrid(self.params.voxel_size)
        if self.places is None:
            self.places = PlaceDatabase(frozenset(self.params.place_modalities))

    def equals(self, other):
        return (self.version == other.version and self.t_latest == other.t_latest
                and self.grid.equals(other.grid) and self.graph.equals(other.graph)
                and self.places.equals(other.places))


def _labelled_points(frame, tracks, t):
    """Per-point object index for the scan, plus the (label, embedding) table."""
    ids = np.full(frame.points.shape[0], -1, dtype=np.int64)
    table = []
    if tracks is None:
        return ids, table
    for tr in tracks.tracks.values():
        ob = tr.current
        if tr.state == LOST or tr.last_seen != t or ob is None or ob.point_indices is None:
            continue
        idx = np.asarray(ob.point_indices, dtype=np.int64)
        if idx.size == 0:
            continue
        ids[idx] = len(table)
        table.append((tr.label, tr.embedding))
    return ids, table


def _frame_observations(tracks, t):
    if tracks is None:
        return []
    return [tr.current for tr in tracks.tracks.values()
            if tr.state != LOST and tr.last_seen == t and tr.current is not None]


def _is_keyframe(m, pose):
    if m.keyframe_pose is None:
        return True
    if m.frames_since_keyframe >= m.params.keyframe_stride:
        return True
    return bool(np.linalg.norm(pose[:3, 3] - m.keyframe_pose[:3, 3]) > m.params.keyframe_distance)


def integrate_frame(m, frame, tracks, pose_e, observations=None):
    """Fold one frame into the map; returns the same (mutated) map.

    ``observations`` feed the place descriptor's semantic and text blocks;
    by default the observations matched to tracks at this frame are used.
    """
    if m.calib is None:
        raise ValueError("the map needs a CalibrationSet to integrate frames")
    if abs(pose_e.t - frame.t) > 1e-9:
        raise TimeRegressionError(f"pose time {pose_e.t} does not match frame time {frame.t}")
    if frame.t < m.t_latest:
        raise TimeRegressionError(f"frame time {frame.t} precedes map time {m.t_latest}")
    pose = np.asarray(pose_e.pose, dtype=float)
    point_objects, objects = _labelled_points(frame, tracks, frame.t)
    update_voxel_grid(m.grid, frame.points, pose @ m.calib.lidar_to_base, point_objects, objects,
                      max_range=m.params.max_range)
    view = None
    if m.camera is not None:
        view = CameraView(m.camera, pose @ m.calib.camera_to_base, frame.depth, m.params.occlusion_margin)
    if tracks is not None:
        update_scene_graph(m.graph, tracks, frame.t, view)
    if _is_keyframe(m, pose):
        obs = _frame_observations(tracks, frame.t) if observations is None else observations
        d = compute_place_descriptor(frame, obs, m.places.modality_mask, m.calib.lidar_to_base)
        m.places.add(frame.t, pose, d)
        m.keyframe_pose = pose.copy()
        m.frames_since_keyframe = 1
    else:
        m.frames_since_keyframe += 1
    m.version += 1
    m.t_latest = float(frame.t)
    return m


# -- snapshots --------------------------------------------------------------


def _tuple(a):
    a = np.asarray(a, dtype=float)
    return tuple(_tuple(r) for r in a) if a.ndim > 1 else tuple(float(x) for x in a)


@dataclass(frozen=True)
class NodeView:
    node_id: int
    label: str
    embedding: tuple
    aabb: tuple
    centroid: tuple
    last_seen: float
    true_id: int | None = None

    def to_node(self):
        return Node(self.node_id, self.label, np.array(self.embedding), np.array(self.aabb),
                    np.array(self.centroid), [], True, self.last_seen, None, self.true_id)


@dataclass(frozen=True)
class MapSnapshot:
    t: float
    version: int
    nodes: tuple  # NodeView, by node id
    edges: tuple  # sorted (id_a, relation, id_b)
    grid_digest: tuple  # (occupied count, bbox as nested tuple or None)

    @property
    def graph_view(self):
        """A fresh, mutable SceneGraph copy of the snapshot."""
        return SceneGraph({n.node_id: n.to_node() for n in self.nodes}, set(self.edges))

    def to_json(self):
        return {
            "t": self.t,
            "version": self.version,
            "nodes": [asdict(n) for n in self.nodes],
            "edges": [list(e) for e in self.edges],
            "grid_digest": {"occupied": self.grid_digest[0], "bbox": self.grid_digest[1]},
        }


def snapshot_instantaneous(m, t):
    """Immutable view of the active subgraph and a grid digest at ``t``."""
    if t != m.t_latest:
        raise TimeRegressionError(f"snapshot time {t} does not match map time {m.t_latest}")
    active = {n.node_id for n in m.graph.active_nodes()}
    nodes = tuple(NodeView(n.node_id, n.label, _tuple(n.embedding), _tuple(n.aabb), _tuple(n.centroid),
                           float(n.last_seen), n.true_id) for n in m.graph.active_nodes())
    edges = tuple(sorted(e for e in m.graph.edges if e[0] in active and e[2] in active))
    count, bbox = m.grid.digest()
    snap = MapSnapshot(float(t), m.version, nodes, edges, (count, None if bbox is None else _tuple(bbox)))
    m.snapshots.append(snap)
    return snap


def export_snapshot(snap, out_dir, index):
    path = Path(out_dir) / f"snapshot_{index:04d}.json"
    path.write_text(json.dumps(snap.to_json(), sort_keys=True))
    return path


# -- map file ---------------------------------------------------------------


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=float).ravel()]


def _map_body(m):
    from .. import kernels

    g = m.grid
    ijk = kernels.unpack_keys(g.keys)
    cells = []
    for (i, j, k), key, lo in zip(ijk.tolist(), g.keys.tolist(), g.log_odds.tolist()):
        emb = g.embedding_sum.get(key)
        cells.append([i, j, k, lo, dict(sorted(g.label_hist.get(key, {}).items())),
                      None if emb is None else _floats(emb), int(g.embedding_n.get(key, 0))])
    nodes = [{
        "id": n.node_id, "label": n.label, "embedding": _floats(n.embedding),
        "aabb": np.asarray(n.aabb, float).tolist(), "centroid": _floats(n.centroid),
        "tracklet": [[tt, _floats(c)] for tt, c in n.tracklet], "active": n.active,
        "last_seen": n.last_seen, "interactive_state": n.interactive_state, "true_id": n.true_id,
    } for _, n in sorted(m.graph.nodes.items())]
    places = [{
        "place_id": e.place_id, "t": e.t, "pose": np.asarray(e.pose, float).tolist(),
        "descriptor": _floats(e.descriptor), "modality_mask": sorted(e.modality_mask),
    } for e in m.places.entries]
    sensors = None
    if m.calib is not None:
        sensors = {"camera_to_base": m.calib.camera_to_base.tolist(),
                   "lidar_to_base": m.calib.lidar_to_base.tolist()}
        if m.camera is not None:
            c = m.camera
            sensors["camera"] = {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy, "width": c.width,
                                 "height": c.height, "max_depth": c.max_depth,
                                 "extrinsic": c.extrinsic.tolist()}
    params = asdict(m.params)
    params["place_modalities"] = list(params["place_modalities"])
    return {
        "voxel_size": g.voxel_size,
        "log_odds_limits": [g.l_hit, g.l_miss, g.l_min, g.l_max],
        "cells": cells,
        "nodes": nodes,
        "edges": [list(e) for e in sorted(m.graph.edges)],
        "places": places,
        "place_mask": sorted(m.places.modality_mask),
        "version": m.version,
        "t_latest": m.t_latest if np.isfinite(m.t_latest) else None,
        "keyframe": {"frames_since": m.frames_since_keyframe,
                     "pose": None if m.keyframe_pose is None else m.keyframe_pose.tolist()},
        "params": params,
        "sensors": sensors,
    }


def save_map(m, path):
    body = json.dumps(_map_body(m), sort_keys=True).encode("utf-8")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, hashlib.sha256(body).digest(), len(body))
    Path(path).write_bytes(header + body)
    return Path(path)


def _map_from_body(d):
    from .. import kernels

    params = MappingParams(**{**d["params"], "place_modalities": tuple(d["params"]["place_modalities"])})
    l_hit, l_miss, l_min, l_max = d["log_odds_limits"]
    grid = VoxelGrid(d["voxel_size"], l_hit, l_miss, l_min, l_max)
    cells = d["cells"]
    if cells:
        grid.keys = kernels.pack_keys(np.array([c[:3] for c in cells], dtype=np.int64))
        grid.log_odds = np.array([c[3] for c in cells], dtype=float)
    for key, c in zip(grid.keys.tolist(), cells):
        if c[4]:
            grid.label_hist[key] = Counter(c[4])
        if c[5] is not None:
            grid.embedding_sum[key] = np.array(c[5], dtype=float)
        if c[6]:
            grid.embedding_n[key] = int(c[6])
    graph = SceneGraph()
    for n in d["nodes"]:
        graph.nodes[n["id"]] = Node(
            n["id"], n["label"], np.array(n["embedding"]), np.array(n["aabb"]), np.array(n["centroid"]),
            [(tt, np.array(c)) for tt, c in n["tracklet"]], n["active"], n["last_seen"],
            n["interactive_state"], n["true_id"])
    graph.edges = {tuple(e) for e in d["edges"]}
    places = PlaceDatabase(frozenset(d["place_mask"]))
    places.entries = [PlaceEntry(e["place_id"], e["t"], np.array(e["pose"]), np.array(e["descriptor"]),
                                 frozenset(e["modality_mask"])) for e in d["places"]]
    calib = camera = None
    s = d.get("sensors")
    if s is not None:
        calib = CalibrationSet(np.array(s["camera_to_base"]), np.array(s["lidar_to_base"]))
        if "camera" in s:
            camera = CameraSpec(**{**s["camera"], "extrinsic": np.array(s["camera"]["extrinsic"])})
    kf = d["keyframe"]
    return MultimodalMap(
        params=params, calib=calib, camera=camera, grid=grid, graph=graph, places=places,
        version=d["version"], t_latest=float("-inf") if d["t_latest"] is None else d["t_latest"],
        frames_since_keyframe=kf["frames_since"],
        keyframe_pose=None if kf["pose"] is None else np.array(kf["pose"]),
    )


def load_map(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ChecksumError("map file is truncated")
    magic, version, digest, length = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MapFormatError("not a map file (bad magic)")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"map format version {version} is not supported "
                                      f"(expected {FORMAT_VERSION})")
    body = raw[_HEADER.size:]
    if len(body) != length or hashlib.sha256(body).digest() != digest:
        raise ChecksumError("map payload checksum mismatch")
    return _map_from_body(json.loads(body.decode("utf-8")))
