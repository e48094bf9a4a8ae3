"""Generated benchmark scenarios and query suites.

Every generator is a pure function of ``(kind, seed)``. Robot path knots sit
on the frame grid so that piecewise-constant velocity is exact per frame.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

KINDS = (
    "static-3", "odometry-std", "odometry-zero", "dynamic-ate", "crossing", "removal",
    "revisit", "relational-50",
)
RELATIONS = ("near", "on", "above", "inside", "closest-to")

NEAR_DIST = 1.5
CONTACT_GAP = 0.05


def _pose(x, y, z=0.0, yaw=0.0):
    return {"t": [float(x), float(y), float(z)], "yaw": float(yaw)}


def _body(bid, label, center, half, color, yaw=0.0, motion=None, present=None, sphere=False):
    shape = {"sphere": float(half)} if sphere else {"box": [float(h) for h in half]}
    b = {"id": bid, "label": label, "shape": shape, "color": [float(c) for c in color]}
    b["motion"] = motion or {"type": "static", "pose": _pose(*center, yaw=yaw)}
    if present is not None:
        b["present"] = list(present)
    return b


def _floor(bid=1, half=40.0):
    return _body(bid, "floor", (0, 0, -0.05), (half, half, 0.05), (0.35, 0.35, 0.35))


class PathBuilder:
    """Robot path from straight drives and in-place turns."""

    def __init__(self, x=0.0, y=0.0, yaw=0.0, rate_hz=10.0):
        self.rate = rate_hz
        self.t, self.x, self.y, self.yaw = 0.0, x, y, yaw
        self.points = [(0.0, x, y, yaw)]

    def _snap(self, dt):
        return max(round(dt * self.rate), 1) / self.rate

    def drive(self, distance, speed=1.0):
        self.t += self._snap(abs(distance) / speed)
        self.x += distance * math.cos(self.yaw)
        self.y += distance * math.sin(self.yaw)
        self.points.append((self.t, self.x, self.y, self.yaw))
        return self

    def turn(self, angle, rate=math.pi / 4):
        self.t += self._snap(abs(angle) / rate)
        self.yaw += angle
        self.points.append((self.t, self.x, self.y, self.yaw))
        return self

    def wait(self, dt):
        self.t += self._snap(dt)
        self.points.append((self.t, self.x, self.y, self.yaw))
        return self

    def waypoints(self):
        return [{"t": round(t, 9), "pose": _pose(x, y, 0.0, yaw)} for t, x, y, yaw in self.points]


def _scenario(seed, duration, bodies, path, rate=10.0, noise=True, gnss_gap=None, **extra):
    d = {
        "seed": int(seed),
        "duration_s": float(duration),
        "rate_hz": float(rate),
        "bodies": bodies,
        "robot_path": path,
        "gnss": {"sigma_pos": 0.3 if noise else 0.0, "sigma_rot": 0.02 if noise else 0.0},
        "imu": {"sigma_vel": 0.05 if noise else 0.0, "sigma_acc": 0.05 if noise else 0.0},
        "noise": {"lidar_range": 0.02 if noise else 0.0, "depth": 0.01 if noise else 0.0},
    }
    if gnss_gap is not None:
        d["gnss"]["availability"] = [[0.0, gnss_gap[0]], [gnss_gap[1], None]]
    d.update(extra)
    return d


def static_three(seed=0):
    # Every axis-aligned face sits half a 0.2 m voxel away from a grid plane
    # (the floor top is at z = -0.1), so occupancy scoring does not hinge on
    # which side of a plane a coincident surface hit rounds to.
    floor = _floor()
    floor["motion"]["pose"]["t"][2] = -0.15
    bodies = [
        floor,
        _body(2, "chair", (6.0, -1.2, 0.3), (0.3, 0.3, 0.4), (0.8, 0.1, 0.1)),
        _body(3, "table", (7.0, 1.2, 0.275), (0.5, 0.3, 0.375), (0.55, 0.35, 0.15)),
        _body(4, "ball", (6.0, 0.2, 0.2), 0.3, (0.1, 0.2, 0.9), sphere=True),
    ]
    path = PathBuilder().drive(1.5, speed=0.5).waypoints()
    return _scenario(seed, 4.0, bodies, path, noise=False)


def _scatter(rng, n, xlim, ylim, keepout, min_sep, start_id, label="pillar"):
    bodies, placed = [], []
    while len(bodies) < n:
        x, y = rng.uniform(*xlim), rng.uniform(*ylim)
        if any(abs(x - a) < b and abs(y - c) < d for a, b, c, d in keepout):
            continue
        if any(math.hypot(x - px, y - py) < min_sep for px, py in placed):
            continue
        placed.append((x, y))
        h = rng.uniform(0.6, 2.0)
        w = rng.uniform(0.15, 0.5)
        col = rng.uniform(0.2, 0.9, size=3)
        bodies.append(_body(start_id + len(bodies), label, (x, y, h), (w, w, h), col,
                            yaw=rng.uniform(-math.pi, math.pi)))
    return bodies


def _loop_path(length, width, laps=1, speed=1.0):
    pb = PathBuilder()
    for _ in range(laps):
        for side in (length, width, length, width):
            pb.drive(side, speed).turn(math.pi / 2)
    return pb


def odometry_standard(seed=0, noise=True):
    rng = np.random.default_rng(seed)
    # corridor keep-out around the 12 x 8 m loop driven from the origin
    keepout = [(6.0, 7.5, 0.0, 1.2), (6.0, 7.5, 8.0, 1.2), (0.0, 1.2, 4.0, 5.5), (12.0, 1.2, 4.0, 5.5)]
    bodies = [_floor()] + _scatter(rng, 40, (-6, 18), (-6, 14), keepout, 1.5, 2)
    pb = _loop_path(12.0, 8.0)
    return _scenario(seed, pb.t, bodies, pb.waypoints(), noise=noise, gnss_gap=(12.0, 18.0))


def dynamic_ate(seed=0):
    """Corridor with large vehicles pacing the robot; no floor so vehicle
    returns make up a large share of the scan."""
    rng = np.random.default_rng(seed)
    bodies = []
    bid = 1
    for side in (-1, 1):
        for x in np.arange(-10.0, 40.0, 3.0):
            xx = x + rng.uniform(-0.5, 0.5)
            yy = side * rng.uniform(4.5, 6.0)
            h = rng.uniform(1.0, 2.0)
            bodies.append(_body(bid, "pillar", (xx, yy, h), (0.3, 0.3, h), rng.uniform(0.3, 0.9, 3)))
            bid += 1
    vehicles = [(-1.5, 2.0, 1.6), (2.5, -2.2, 1.5), (-6.0, 2.3, 1.8), (8.0, -2.1, 1.7)]
    for x0, y0, vx in vehicles:
        vx = vx + rng.uniform(-0.2, 0.2)
        label = "truck" if bid % 2 else "car"
        motion = {"type": "constant-velocity", "pose": _pose(x0, y0, 1.0), "v": [vx, 0.0, 0.0]}
        bodies.append(_body(bid, label, None, (2.0, 0.9, 1.0), rng.uniform(0.3, 0.9, 3), motion=motion))
        bid += 1
    pb = PathBuilder().drive(12.0, speed=1.0)
    d = _scenario(seed, pb.t, bodies, pb.waypoints())
    d["gnss"]["availability"] = []
    return d


def crossing(seed=0):
    bodies = [
        _floor(),
        _body(2, "chair", (8.0, 3.0, 0.45), (0.3, 0.3, 0.45), (0.8, 0.1, 0.1)),
        _body(3, "person", None, (0.25, 0.25, 0.9), (0.9, 0.7, 0.2), motion={
            "type": "constant-velocity", "pose": _pose(6.0, -3.0, 0.9), "v": [0.0, 1.0, 0.0]}),
        _body(4, "person", None, (0.25, 0.25, 0.9), (0.2, 0.8, 0.3), motion={
            "type": "constant-velocity", "pose": _pose(7.5, 3.0, 0.9), "v": [0.0, -1.0, 0.0]}),
    ]
    path = PathBuilder().wait(6.0).waypoints()
    return _scenario(seed, 6.0, bodies, path, noise=True)


def removal(seed=0):
    bodies = [
        _floor(),
        _body(2, "box", (5.0, 0.3, 0.4), (0.4, 0.4, 0.4), (0.9, 0.5, 0.1), present=[0.0, 2.0]),
        _body(3, "chair", (5.5, -1.5, 0.45), (0.3, 0.3, 0.45), (0.8, 0.1, 0.1)),
        _body(4, "plant", (-3.0, 0.0, 0.5), (0.3, 0.3, 0.5), (0.1, 0.7, 0.2), present=[0.0, 2.0]),
    ]
    path = PathBuilder().drive(0.8, speed=0.2).waypoints()
    return _scenario(seed, 4.0, bodies, path, noise=False)


def revisit(seed=0):
    rng = np.random.default_rng(seed)
    keepout = [(5.0, 6.5, 0.0, 1.2), (5.0, 6.5, 6.0, 1.2), (0.0, 1.2, 3.0, 4.5), (10.0, 1.2, 3.0, 4.5)]
    labels = ("chair", "table", "lamp", "sofa", "plant", "shelf", "box", "bottle")
    bodies = [_floor()]
    grey = _scatter(rng, 30, (-5, 15), (-5, 11), keepout, 1.2, 2)
    for i, b in enumerate(grey):
        b["label"] = labels[int(rng.integers(len(labels)))]
        b["color"] = [0.5, 0.5, 0.5] if i % 3 else [float(c) for c in rng.uniform(0.2, 0.9, 3)]
    bodies += grey
    pb = _loop_path(10.0, 6.0, laps=2, speed=1.0)
    return _scenario(seed, pb.t, bodies, pb.waypoints(), rate=5.0, noise=True)


# -- relational suite -------------------------------------------------------

def body_aabb(b):
    c = np.asarray(b["motion"]["pose"]["t"], dtype=float)
    sh = b["shape"]
    h = np.full(3, sh["sphere"]) if "sphere" in sh else np.asarray(sh["box"], dtype=float)
    return np.stack([c - h, c + h])


def _holds(rel, a, b):
    """Predicate oracle evaluated directly on ground-truth boxes."""
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    overlap = (min(a[1, 0], b[1, 0]) > max(a[0, 0], b[0, 0])
               and min(a[1, 1], b[1, 1]) > max(a[0, 1], b[0, 1]))
    above = a[0, 2] >= b[1, 2] - CONTACT_GAP and overlap
    if rel == "near":
        return bool(np.linalg.norm(ca - cb) <= NEAR_DIST)
    if rel == "above":
        return bool(above)
    if rel == "on":
        return bool(above and abs(a[0, 2] - b[1, 2]) <= CONTACT_GAP)
    if rel == "inside":
        return bool(np.all(a[0] >= b[0]) and np.all(a[1] <= b[1]))
    raise ValueError(rel)


def relational_scene(seed=0):
    rng = np.random.default_rng(seed)
    bodies = [_floor()]
    nid = [2]

    def add(label, center, half, color, sphere=False):
        bodies.append(_body(nid[0], label, center, half, color, sphere=sphere))
        nid[0] += 1

    tables = []
    while len(tables) < 3:
        x, y = rng.uniform(2, 14), rng.uniform(-6, 6)
        if all(math.hypot(x - a, y - b) > 5.0 for a, b in tables):
            tables.append((x, y))
    for x, y in tables:
        add("table", (x, y, 0.375), (0.6, 0.4, 0.375), (0.55, 0.35, 0.15))
    add("cup", (tables[0][0] + 0.2, tables[0][1], 0.81), (0.05, 0.05, 0.06), (0.9, 0.9, 0.9))
    add("cup", (tables[1][0] - 0.3, tables[1][1] + 0.1, 0.81), (0.05, 0.05, 0.06), (0.9, 0.1, 0.1))
    add("lamp", (tables[2][0], tables[2][1] - 0.1, 0.95), (0.1, 0.1, 0.2), (0.95, 0.9, 0.3))
    add("chair", (tables[0][0], tables[0][1] + 1.0, 0.45), (0.25, 0.25, 0.45), (0.8, 0.1, 0.1))
    add("chair", (tables[2][0] + 1.1, tables[2][1], 0.45), (0.25, 0.25, 0.45), (0.1, 0.1, 0.8))
    occupied = list(tables)
    for label, half, z in (("chair", (0.25, 0.25, 0.45), 0.45), ("sofa", (0.9, 0.4, 0.4), 0.4),
                           ("sofa", (0.9, 0.4, 0.4), 0.4), ("lamp", (0.1, 0.1, 0.8), 0.8),
                           ("plant", (0.2, 0.2, 0.5), 0.5), ("plant", (0.2, 0.2, 0.5), 0.5)):
        while True:
            x, y = rng.uniform(0, 16), rng.uniform(-8, 8)
            if all(math.hypot(x - a, y - b) > 3.5 for a, b in occupied):
                break
        occupied.append((x, y))
        add(label, (x, y, z), half, rng.uniform(0.2, 0.9, 3))
    bx, by = occupied[-1][0] + 1.2, occupied[-1][1]
    add("box", (bx, by, 0.4), (0.4, 0.4, 0.4), (0.6, 0.45, 0.25))
    add("bottle", (bx, by, 0.3), (0.05, 0.05, 0.12), (0.2, 0.6, 0.2))
    return bodies


def relational_queries(bodies, seed=0, n=50):
    """Queries with exactly one correct target, answered from ground truth."""
    objs = [(b["id"], b["label"], body_aabb(b)) for b in bodies if b["label"] != "floor"]
    labels = sorted({lab for _, lab, _ in objs})
    pool = []
    for tl in labels:
        targets = [o for o in objs if o[1] == tl]
        if len(targets) == 1:
            pool.append({"target_label": tl, "relation": None, "anchor_label": None,
                         "answer": targets[0][0]})
        for al in labels:
            if al == tl:
                continue
            anchors = [o for o in objs if o[1] == al]
            for rel in RELATIONS:
                if rel == "closest-to":
                    d = [min(np.linalg.norm(t[2].mean(0) - a[2].mean(0)) for a in anchors)
                         for t in targets]
                    order = np.argsort(d, kind="stable")
                    if len(d) > 1 and d[order[1]] - d[order[0]] < 0.5:
                        continue
                    hits = [targets[order[0]][0]]
                else:
                    hits = [t[0] for t in targets if any(_holds(rel, t[2], a[2]) for a in anchors)]
                if len(hits) == 1:
                    pool.append({"target_label": tl, "relation": rel, "anchor_label": al,
                                 "answer": hits[0]})
    rng = np.random.default_rng(seed)
    # favour ambiguous targets: that is where relations matter
    multi = {lab for lab in labels if sum(o[1] == lab for o in objs) > 1}
    key = [0 if (q["target_label"] in multi and q["relation"]) else 1 for q in pool]
    perm = rng.permutation(len(pool))
    ranked = sorted(perm, key=lambda i: key[i])
    chosen = sorted(ranked[:n]) if len(pool) >= n else list(range(len(pool)))
    out = []
    for k, i in enumerate(chosen):
        q = dict(pool[i])
        q["id"] = k
        q["text"] = q["target_label"] if not q["relation"] else \
            f"{q['target_label']} {q['relation']} {q['anchor_label']}"
        out.append(q)
    return out


def relational_benchmark(seed=0):
    bodies = relational_scene(seed)
    pb = PathBuilder(x=-2.0).wait(1.0)
    return _scenario(seed, 1.0, bodies, pb.waypoints(), noise=False), relational_queries(bodies, seed)


def make_benchmark(kind, seed=0):
    """Return ``(scenario_dict, queries_or_None)`` for a benchmark kind."""
    if kind == "static-3":
        return static_three(seed), None
    if kind == "odometry-std":
        return odometry_standard(seed), None
    if kind == "odometry-zero":
        return odometry_standard(seed, noise=False), None
    if kind == "dynamic-ate":
        return dynamic_ate(seed), None
    if kind == "crossing":
        return crossing(seed), None
    if kind == "removal":
        return removal(seed), None
    if kind == "revisit":
        return revisit(seed), None
    if kind == "relational-50":
        return relational_benchmark(seed)
    raise ValueError(f"unknown benchmark kind {kind!r}; choose from {', '.join(KINDS)}")


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def make_benchmarks(kind, seed=0, out_dir=None):
    """Generate a benchmark; with ``out_dir`` also write scenario.json and queries.json."""
    scenario, queries = make_benchmark(kind, seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "scenario.json").write_text(_dumps(scenario))
        if queries is not None:
            (out / "queries.json").write_text(_dumps(queries))
    return scenario, queries
