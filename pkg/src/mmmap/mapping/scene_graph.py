"""Object-level scene graph with geometric relations and view-based deactivation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from ..perception.tracking import CONFIRMED, LOST

RELATIONS = ("near", "above", "on", "inside")
NEAR_DIST = 1.5
CONTACT_TOL = 0.05


@dataclass
class Node:
    node_id: int
    label: str
    embedding: np.ndarray
    aabb: np.ndarray
    centroid: np.ndarray
    tracklet: list = field(default_factory=list)  # [(t, centroid)]
    active: bool = True
    last_seen: float = 0.0
    interactive_state: str | None = None
    true_id: int | None = None  # evaluation only

    def equals(self, other):
        return (
            self.node_id == other.node_id and self.label == other.label
            and np.array_equal(self.embedding, other.embedding)
            and np.array_equal(self.aabb, other.aabb)
            and np.array_equal(self.centroid, other.centroid)
            and len(self.tracklet) == len(other.tracklet)
            and all(ta == tb and np.array_equal(ca, cb)
                    for (ta, ca), (tb, cb) in zip(self.tracklet, other.tracklet))
            and self.active == other.active and self.last_seen == other.last_seen
            and self.interactive_state == other.interactive_state and self.true_id == other.true_id
        )


@dataclass
class SceneGraph:
    nodes: dict = field(default_factory=dict)  # node id -> Node
    edges: set = field(default_factory=set)  # (id_a, relation, id_b)

    def active_nodes(self):
        return [n for _, n in sorted(self.nodes.items()) if n.active]

    def equals(self, other):
        return (self.nodes.keys() == other.nodes.keys() and self.edges == other.edges
                and all(n.equals(other.nodes[k]) for k, n in self.nodes.items()))


@dataclass
class CameraView:
    """What the camera sees now: optical-frame pose in world, intrinsics, depth."""

    camera: object
    pose: np.ndarray  # world <- optical
    depth: np.ndarray
    occlusion_margin: float = 0.5

    def sees(self, point):
        """True if ``point`` projects into the image and nothing lies in front of it."""
        c = geo.transform_points(geo.pose_inv(self.pose), np.asarray(point, float).reshape(1, 3))[0]
        if c[2] <= 1e-6:
            return False
        cam = self.camera
        u = int(round(cam.fx * c[0] / c[2] + cam.cx))
        v = int(round(cam.fy * c[1] / c[2] + cam.cy))
        if not (0 <= u < cam.width and 0 <= v < cam.height):
            return False
        rng = float(np.linalg.norm(c))
        if rng > cam.max_depth:
            return False
        return bool(self.depth[v, u] >= rng - self.occlusion_margin)


def relation_holds(rel, a, b):
    """Evaluate a predicate between two nodes' geometry (``a rel b``)."""
    if rel == "near":
        return bool(np.linalg.norm(a.centroid - b.centroid) <= NEAR_DIST)
    if rel == "above":
        return bool(a.aabb[0, 2] >= b.aabb[1, 2] - CONTACT_TOL and geo.aabb_overlap_2d(a.aabb, b.aabb) > 0)
    if rel == "on":
        return relation_holds("above", a, b) and abs(a.aabb[0, 2] - b.aabb[1, 2]) <= CONTACT_TOL
    if rel == "inside":
        return geo.aabb_contains(b.aabb, a.aabb)
    raise ValueError(f"unknown relation {rel!r}")


def infer_spatial_relations(graph):
    """Edge set over the active nodes. ``near`` is stored once per pair, lower id first.

    Vectorised over all pairs; agrees with :func:`relation_holds` pair by pair.
    """
    nodes = graph.active_nodes()
    if len(nodes) < 2:
        return set()
    ids = [n.node_id for n in nodes]
    c = np.array([n.centroid for n in nodes], dtype=float)
    box = np.array([n.aabb for n in nodes], dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    near = np.linalg.norm(c[:, None] - c[None], axis=2) <= NEAR_DIST
    fx = np.minimum(hi[:, None, 0], hi[None, :, 0]) - np.maximum(lo[:, None, 0], lo[None, :, 0])
    fy = np.minimum(hi[:, None, 1], hi[None, :, 1]) - np.maximum(lo[:, None, 1], lo[None, :, 1])
    overlap = np.maximum(fx, 0.0) * np.maximum(fy, 0.0) > 0
    above = (lo[:, None, 2] >= hi[None, :, 2] - CONTACT_TOL) & overlap
    on = above & (np.abs(lo[:, None, 2] - hi[None, :, 2]) <= CONTACT_TOL)
    inside = np.all((lo[:, None] >= lo[None]) & (hi[:, None] <= hi[None]), axis=2)
    off_diag = ~np.eye(len(nodes), dtype=bool)
    edges = set()
    for rel, m in (("near", np.triu(near, 1)), ("above", above & off_diag), ("on", on & off_diag),
                   ("inside", inside & off_diag)):
        for i, j in zip(*np.nonzero(m)):
            edges.add((ids[i], rel, ids[j]))
    return edges


def _upsert(graph, tr):
    node = graph.nodes.get(tr.track_id)
    tracklet = [(float(tt), np.array(c, dtype=float)) for tt, c in tr.tracklet]
    if node is None:
        node = Node(tr.track_id, tr.label, tr.embedding.copy(), np.array(tr.aabb_world, float),
                    np.array(tr.centroid, float), tracklet, True, float(tr.last_seen))
        graph.nodes[tr.track_id] = node
    else:
        node.label = tr.label
        node.embedding = tr.embedding.copy()
        node.aabb = np.array(tr.aabb_world, dtype=float)
        node.centroid = np.array(tr.centroid, dtype=float)
        node.tracklet = tracklet
        node.last_seen = float(tr.last_seen)
        node.active = True
    node.true_id = tr.true_id


def update_scene_graph(graph, tracks, t, view=None):
    """Refresh nodes from confirmed tracks and recompute edges.

    A node whose track is lost (or gone) is marked inactive only if ``view``
    shows its last centroid unoccluded; out-of-view nodes keep their state.
    """
    for tr in tracks.tracks.values():
        if tr.state == CONFIRMED and (tr.last_seen == t or tr.track_id not in graph.nodes):
            _upsert(graph, tr)
    if view is not None:
        for node_id, node in graph.nodes.items():
            tr = tracks.tracks.get(node_id)
            lost = tr is None or tr.state == LOST
            if node.active and lost and view.sees(node.centroid):
                node.active = False
    graph.edges = infer_spatial_relations(graph)
    return graph
