"""Metrics against simulator ground truth."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import geometry as geo
from ..mapping.scene_graph import Node, SceneGraph, infer_spatial_relations
from ..perception.descriptors import encode_descriptor
from ..retrieval.grounding import RelationalQuery, ground_relational
from .benchmarks import body_aabb

LOC_RADIUS = 2.0  # a retrieved place within this distance of the query counts as recalled
REVISIT_GAP = 10.0  # seconds; places closer in time than this are not revisit candidates
VISIBLE_PIXELS = 10
VISIBLE_POINTS = 10


@dataclass
class MetricsReport:
    ate_rmse: float
    rpe_rmse: float
    id_switches: int
    track_precision: float | None = None
    track_recall: float | None = None
    occupancy_agreement: float | None = None
    place_recall_at1: float | None = None
    place_recall_at5: float | None = None
    grounding_top1: float | None = None
    n_frames: int = 0
    runtimes: dict = field(default_factory=dict)

    def to_json(self, with_runtimes=False):
        d = asdict(self)
        if not with_runtimes:
            d.pop("runtimes")
        return d


def ate_rmse(est_poses, gt_poses):
    """RMSE of position error with no alignment (shared origin)."""
    if len(est_poses) != len(gt_poses) or not est_poses:
        raise ValueError("trajectories must be non-empty and of equal length")
    e = np.array([np.asarray(a)[:3, 3] - np.asarray(b)[:3, 3] for a, b in zip(est_poses, gt_poses)])
    return float(np.sqrt(np.mean(np.sum(e * e, axis=1))))


def rpe_rmse(est_poses, gt_poses):
    """RMSE of the translational error of 1-frame relative motions."""
    if len(est_poses) != len(gt_poses) or not est_poses:
        raise ValueError("trajectories must be non-empty and of equal length")
    if len(est_poses) < 2:
        return 0.0
    errs = []
    for k in range(1, len(est_poses)):
        d_est = geo.pose_inv(est_poses[k - 1]) @ est_poses[k]
        d_gt = geo.pose_inv(gt_poses[k - 1]) @ gt_poses[k]
        errs.append(np.linalg.norm((geo.pose_inv(d_gt) @ d_est)[:3, 3]))
    return float(np.sqrt(np.mean(np.square(errs))))


def _majority(track_log):
    votes = defaultdict(Counter)
    for frame in track_log:
        for tid, true_id in frame:
            if true_id is not None:
                votes[tid][true_id] += 1
    return {tid: c.most_common(1)[0][0] for tid, c in votes.items()}


def _assigned(track_log):
    """Per frame, ``{true id: track id}`` using each track's majority true id;
    when several tracks claim one object the lowest track id stands for it."""
    major = _majority(track_log)
    out = []
    for frame in track_log:
        cur = {}
        for tid, _ in frame:
            g = major.get(tid)
            if g is not None and (g not in cur or tid < cur[g]):
                cur[g] = tid
        out.append(cur)
    return out


def count_id_switches(track_log, ignore=()):
    """Times an object's representing track changes between frames it is tracked.

    ``track_log`` has one entry per frame: ``[(track_id, observed true id)]``
    for every track matched at that frame. True ids in ``ignore`` (floor,
    walls) are not scored.
    """
    last = {}
    switches = 0
    for cur in _assigned(track_log):
        for g, tid in cur.items():
            if g in ignore:
                continue
            if g in last and last[g] != tid:
                switches += 1
            last[g] = tid
    return switches


def track_precision_recall(track_log, visible):
    """Precision: matched (track, frame) pairs whose observation is the
    track's own object. Recall: visible (object, frame) pairs that a track
    represents. ``visible`` holds one set of true ids per frame."""
    if len(track_log) != len(visible):
        raise ValueError("track log and visibility differ in length")
    major = _majority(track_log)
    good = total = 0
    for frame in track_log:
        for tid, true_id in frame:
            total += 1
            good += true_id is not None and major.get(tid) == true_id
    hit = n_vis = 0
    for cur, vis in zip(_assigned(track_log), visible):
        n_vis += len(vis)
        hit += sum(g in cur for g in vis)
    return (good / total if total else None), (hit / n_vis if n_vis else None)


def visible_objects(gt_frames, ignore=()):
    out = []
    for rec in gt_frames:
        ids = {int(i) for i, c in rec["pixel_counts"].items() if c >= VISIBLE_PIXELS}
        ids |= {int(i) for i, c in rec["point_counts"].items() if c >= VISIBLE_POINTS}
        out.append(ids - set(ignore))
    return out


def place_recall(places, true_pose_at, ks=(1, 5), gap=REVISIT_GAP, radius=LOC_RADIUS):
    """Recall@k over revisit queries in a place database.

    Each entry queries the entries at least ``gap`` seconds older. It is a
    revisit query if one of those lies within ``radius`` of its true pose,
    and it is recalled@k if one of its top-k matches does.
    """
    entries = places.entries
    if not entries:
        return {k: None for k in ks}
    D = places.matrix()
    pos = np.array([true_pose_at(e.t)[:3, 3] for e in entries])
    ids = np.array([e.place_id for e in entries])
    times = np.array([e.t for e in entries])
    hits = {k: 0 for k in ks}
    n = 0
    for i, e in enumerate(entries):
        older = np.nonzero(times <= e.t - gap)[0]
        if older.size == 0:
            continue
        dist = np.linalg.norm(pos[older] - pos[i], axis=1)
        if not np.any(dist <= radius):
            continue
        n += 1
        scores = D[older] @ D[i]
        order = older[np.lexsort((ids[older], -scores))]
        for k in ks:
            top = order[:k]
            hits[k] += bool(np.any(np.linalg.norm(pos[top] - pos[i], axis=1) <= radius))
    return {k: (hits[k] / n if n else None) for k in ks}


def ground_truth_graph(bodies, ignore_labels=("floor",)):
    """Scene graph from static ground-truth scenario bodies (node id = body id)."""
    g = SceneGraph()
    for b in bodies:
        if b["label"] in ignore_labels:
            continue
        box = body_aabb(b)
        emb = encode_descriptor(label=b["label"])
        g.nodes[b["id"]] = Node(b["id"], b["label"], emb, box, box.mean(axis=0))
    g.edges = infer_spatial_relations(g)
    return g


def grounding_accuracy(graph, queries, strategy, node_to_body=None):
    """Top-1 accuracy of ``ground_relational`` against oracle answers."""
    if not queries:
        raise ValueError("no queries")
    correct = 0
    for q in queries:
        rq = RelationalQuery(q["target_label"], q.get("relation"), q.get("anchor_label"))
        res = ground_relational(graph, rq, strategy, k=1)
        if res.items:
            top = res.items[0].id
            if node_to_body is not None:
                top = node_to_body.get(top)
            correct += top == q["answer"]
    return correct / len(queries)


def dynamic_point_fraction(spec, gt):
    """Mean per-frame share of lidar points that hit a moving body."""
    moving = {b.id for b in spec.bodies if b.motion.kind != "static"}
    fr = []
    for rec in gt["frames"]:
        counts = {int(i): c for i, c in rec["point_counts"].items()}
        total = sum(counts.values())
        if total:
            fr.append(sum(c for i, c in counts.items() if i in moving) / total)
    if not fr:
        raise ValueError("no lidar points in the log")
    return float(np.mean(fr))
