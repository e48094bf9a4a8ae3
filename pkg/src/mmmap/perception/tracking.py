"""Multi-object tracking with Hungarian association and a track lifecycle."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .assignment import FORBIDDEN, solve_assignment
from .descriptors import cosine
from .observations import padded_iou
from .segmentation import UNKNOWN_LABEL

TENTATIVE, CONFIRMED, LOST = "tentative", "confirmed", "lost"
DYNAMIC_LABELS = frozenset({"person", "car", "truck", "bicycle"})


@dataclass
class TrackingParams:
    weights: tuple = (0.5, 0.3, 0.2)  # IoU, centroid distance, appearance
    max_distance: float = 2.0
    iou_min_extent: float = 1.0
    gate: float = 0.9
    confirm_hits: int = 3
    max_misses: int = 5
    velocity_window: float = 1.0
    dynamic_displacement: float = 0.2
    dynamic_labels: frozenset = DYNAMIC_LABELS


@dataclass
class TrackedObject:
    track_id: int
    label: str
    embedding: np.ndarray
    aabb_world: np.ndarray
    tracklet: list = field(default_factory=list)  # [(t, centroid)]
    state: str = TENTATIVE
    hits: int = 1
    misses: int = 0
    last_seen: float = 0.0
    label_votes: Counter = field(default_factory=Counter)
    true_votes: Counter = field(default_factory=Counter)  # evaluation only
    current: object = None  # observation matched at the latest step

    @property
    def centroid(self):
        return self.tracklet[-1][1]

    def displacement(self, window):
        """Centroid displacement over the trailing ``window`` seconds."""
        t_end = self.tracklet[-1][0]
        k = len(self.tracklet) - 1
        while k > 0 and self.tracklet[k - 1][0] >= t_end - window - 1e-9:
            k -= 1
        (t0, c0), (t1, c1) = self.tracklet[k], self.tracklet[-1]
        return c1 - c0, t1 - t0

    def velocity(self, params):
        d, dt = self.displacement(params.velocity_window)
        if dt <= 0 or np.linalg.norm(d) <= params.dynamic_displacement:
            return np.zeros(3)
        return d / dt

    def is_dynamic(self, params=None):
        p = params or TrackingParams()
        if self.label in p.dynamic_labels:
            return True
        d, _ = self.displacement(p.velocity_window)
        return bool(np.linalg.norm(d) > p.dynamic_displacement)

    def predicted_aabb(self, t, params):
        shift = self.velocity(params) * (t - self.last_seen)
        return self.aabb_world + shift, self.centroid + shift

    @property
    def true_id(self):
        return self.true_votes.most_common(1)[0][0] if self.true_votes else None


@dataclass
class TrackSet:
    tracks: dict = field(default_factory=dict)  # id -> TrackedObject, in creation order
    next_id: int = 0
    t_last: float | None = None
    matched: dict = field(default_factory=dict)  # track id -> observation index, latest step

    def active(self):
        return [tr for tr in self.tracks.values() if tr.state != LOST]

    def confirmed(self):
        return [tr for tr in self.tracks.values() if tr.state == CONFIRMED]


def association_cost(track, obs, t, params):
    box, centroid = track.predicted_aabb(t, params)
    w_iou, w_dist, w_app = params.weights
    iou = padded_iou(box, obs.aabb_world, params.iou_min_extent)
    dist = min(float(np.linalg.norm(obs.centroid - centroid)) / params.max_distance, 1.0)
    app = (1.0 - cosine(track.embedding, obs.embedding)) / 2.0
    return w_iou * (1.0 - iou) + w_dist * dist + w_app * app


def _padded_boxes(boxes, min_extent):
    grow = np.maximum(min_extent - (boxes[:, 1] - boxes[:, 0]), 0.0) / 2.0
    return boxes[:, 0] - grow, boxes[:, 1] + grow


def _unit_rows(m):
    n = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, n, out=np.zeros_like(m), where=n > 0)


def cost_matrix(tracks, observations, t, params):
    """All pairwise :func:`association_cost` values, gated with FORBIDDEN."""
    if not tracks or not observations:
        return np.empty((len(tracks), len(observations)))
    pred = [tr.predicted_aabb(t, params) for tr in tracks]
    tb = np.array([b for b, _ in pred], dtype=float)
    tc = np.array([c for _, c in pred], dtype=float)
    ob = np.array([o.aabb_world for o in observations], dtype=float)
    oc = np.array([o.centroid for o in observations], dtype=float)
    tlo, thi = _padded_boxes(tb, params.iou_min_extent)
    olo, ohi = _padded_boxes(ob, params.iou_min_extent)
    ext = np.maximum(np.minimum(thi[:, None], ohi[None]) - np.maximum(tlo[:, None], olo[None]), 0.0)
    inter = np.prod(ext, axis=2)
    union = (np.prod(np.maximum(thi - tlo, 0.0), axis=1)[:, None]
             + np.prod(np.maximum(ohi - olo, 0.0), axis=1)[None] - inter)
    iou = np.where((inter > 0) & (union > 0), inter / np.where(union > 0, union, 1.0), 0.0)
    dist = np.minimum(np.linalg.norm(oc[None] - tc[:, None], axis=2) / params.max_distance, 1.0)
    te = _unit_rows(np.array([tr.embedding for tr in tracks], dtype=float))
    oe = _unit_rows(np.array([o.embedding for o in observations], dtype=float))
    app = (1.0 - te @ oe.T) / 2.0
    w_iou, w_dist, w_app = params.weights
    c = w_iou * (1.0 - iou) + w_dist * dist + w_app * app
    c[c > params.gate] = FORBIDDEN
    return c


def _vote(track, obs):
    if obs.label != UNKNOWN_LABEL:
        track.label_votes[obs.label] += 1
        track.label = track.label_votes.most_common(1)[0][0]
    if obs.true_id is not None:
        track.true_votes[obs.true_id] += 1


def gated_assignment(cost):
    """Assignment over the rows and columns that have at least one allowed pair;
    the rest stay unmatched instead of making a square problem infeasible."""
    c = np.asarray(cost, dtype=float)
    ok = np.isfinite(c)
    rows, cols = np.flatnonzero(ok.any(axis=1)), np.flatnonzero(ok.any(axis=0))
    if rows.size == 0:
        return []
    pairs = solve_assignment(c[np.ix_(rows, cols)])
    return [(int(rows[i]), int(cols[j])) for i, j in pairs]


def track_objects(tracks, observations, pose_e=None, t=0.0, params=None):
    """Advance ``tracks`` to time ``t`` with world-frame observations.

    Updates the TrackSet in place and returns it. ``pose_e`` is accepted for
    interface symmetry; observations are already ego-motion compensated.
    """
    p = params or TrackingParams()
    if tracks.t_last is not None and not t > tracks.t_last:
        raise ValueError(f"track update times must increase ({t} after {tracks.t_last})")
    active = tracks.active()
    pairs = gated_assignment(cost_matrix(active, observations, t, p)) if active and observations else []
    tracks.matched = {}
    matched_tracks = set()
    for i, j in pairs:
        tr, ob = active[i], observations[j]
        tr.tracklet.append((t, np.asarray(ob.centroid, dtype=float).copy()))
        emb = tr.embedding * tr.hits + ob.embedding
        tr.embedding = emb / np.linalg.norm(emb)
        tr.aabb_world = np.array(ob.aabb_world, dtype=float)
        tr.hits += 1
        tr.misses = 0
        tr.last_seen = t
        tr.current = ob
        _vote(tr, ob)
        if tr.state == TENTATIVE and tr.hits >= p.confirm_hits:
            tr.state = CONFIRMED
        tracks.matched[tr.track_id] = j
        matched_tracks.add(tr.track_id)
    for tr in active:
        if tr.track_id in matched_tracks:
            continue
        tr.current = None
        tr.misses += 1
        if tr.misses >= p.max_misses:
            tr.state = LOST
    taken = {j for _, j in pairs}
    for j, ob in enumerate(observations):
        if j in taken:
            continue
        tr = TrackedObject(
            track_id=tracks.next_id,
            label=ob.label,
            embedding=np.array(ob.embedding, dtype=float),
            aabb_world=np.array(ob.aabb_world, dtype=float),
            tracklet=[(t, np.asarray(ob.centroid, dtype=float).copy())],
            last_seen=t,
            current=ob,
        )
        _vote(tr, ob)
        tracks.tracks[tr.track_id] = tr
        tracks.matched[tr.track_id] = j
        tracks.next_id += 1
        if p.confirm_hits <= 1:
            tr.state = CONFIRMED
    tracks.t_last = t
    return tracks
