"""End-to-end acceptance checks; each records one PASS/FAIL line in the session summary."""
import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, box_body, scenario
from mmmap.harness import evaluate as ev
from mmmap.harness.benchmarks import PathBuilder, make_benchmark
from mmmap.harness.cli import main
from mmmap.harness.pipeline import PipelineConfig, run_pipeline
from mmmap.mapping import ChecksumError, UnsupportedVersionError, load_map, save_map
from mmmap.perception import solve_assignment
from mmmap.theory import (
    FusionModel,
    SamplerParams,
    estimate_statistics,
    find_witness,
    recall_quality_rows,
    replay_witness,
    sample_pair,
    save_witness,
)

SEEDS = range(5)


def record(number, name, ok, detail):
    ACCEPTANCE[number] = (name, bool(ok), detail)
    print(f"[{number:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def _run(kind, seed=0, occupancy=False, **cfg):
    d, queries = make_benchmark(kind, seed)
    return run_pipeline(PipelineConfig(scenario=d, queries=queries, evaluate_occupancy=occupancy, **cfg))


@pytest.fixture(scope="module")
def static3():
    t0 = time.perf_counter()
    res = _run("static-3", occupancy=True)
    return res, time.perf_counter() - t0


# -- assignment --------------------------------------------------------------------


def test_assignment_matches_brute_force():
    rng = np.random.default_rng(2024)
    perms = {n: np.array(list(itertools.permutations(range(n)))) for n in range(1, 8)}
    mismatches, solve_time = 0, 0.0
    for k in range(1000):
        n = int(rng.integers(1, 8))
        # half integer-valued (many ties), half continuous
        c = rng.integers(0, 10, (n, n)).astype(float) if k % 2 else rng.random((n, n))
        t0 = time.perf_counter()
        pairs = solve_assignment(c)
        solve_time += time.perf_counter() - t0
        got = 0.0
        for i, j in sorted(pairs):
            got += c[i, j]
        best = np.inf
        for p in perms[n]:
            s = 0.0
            for i in range(n):
                s += c[i, p[i]]
            best = min(best, s)
        mismatches += len(pairs) != n or got != best
    record(1, "assignment optimality", mismatches == 0 and solve_time < 5.0,
           f"{mismatches} mismatches in 1000 matrices, solver time {solve_time:.2f} s")


# -- fusion theory --------------------------------------------------------------------


def test_theorem_witnesses(tmp_path):
    t0 = time.perf_counter()
    rows = []
    for theorem, case in ((1, "linear"), (2, "linear"), (2, "attention")):
        fusion, sampler, rep = find_witness(theorem, search_budget=100, seed=0, case=case, n_samples=100_000)
        path = save_witness(tmp_path / f"w{theorem}{case}.json", theorem, case, fusion, sampler, rep)
        replayed, same = replay_witness(json.loads(path.read_text()))
        ok = (rep.ineq_11_holds and rep.ineq_11_margin > 3 * rep.ineq_11_se and rep.n_samples == 100_000
              and same and replayed.ineq_11_holds)
        if theorem == 2:
            ok = ok and (rep.cond_case1 if case == "linear" else rep.cond_case2)
        rows.append((theorem, case, ok, rep.ineq_11_margin / rep.ineq_11_se))
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"T{t}/{c} margin {z:.1f} SE" for t, c, _, z in rows) + f"; {elapsed:.1f} s"
    record(2, "theorem witnesses", all(r[2] for r in rows) and elapsed < 60, detail)


def _random_sampler(rng):
    def beta():
        return tuple(float(v) for v in rng.uniform(0.5, 8.0, 2))

    return SamplerParams(n_y=int(rng.integers(1, 20)), p_member=float(rng.uniform(0, 1)),
                         model1_member=beta(), model1_other=beta(), model2_member=beta(), model2_other=beta())


def test_markov_consistency():
    rng = np.random.default_rng(77)
    checks = violations = 0
    for k in range(100):
        sampler = _random_sampler(rng)
        y1, y2 = sample_pair(sampler, 2000, seed=k)
        for y in (y1, y2):
            ybar = y.mean(axis=1)
            for t in np.round(np.arange(0.1, 1.0, 0.1), 1):
                q = recall_quality_rows(y, t)
                se = q.std(ddof=1) / math.sqrt(q.size)
                checks += 1
                violations += not q.mean() <= ybar.mean() / t + 3 * se
    record(3, "Markov consistency", violations == 0, f"{violations} violations in {checks} checks")


def test_linear_expectation_identity():
    rng = np.random.default_rng(5)
    worst = 0.0
    bad = 0
    for k in range(50):
        a, b = rng.uniform(0, 1.5, 2)
        c = rng.uniform(-0.3, 0.3)
        sampler = _random_sampler(rng)
        rep = estimate_statistics(sampler, FusionModel("linear", a, b, c, clamp_output=False), 0.5, 5000, seed=k)
        e1, e2 = rep.mean_y["Y1"][0], rep.mean_y["Y2"][0]
        lhs = rep.ineq_16_margin
        rhs = (2 * a - 1) * e1 + (2 * b - 1) * e2 + 2 * c
        gap = abs(lhs - rhs)
        bad += not gap <= 4 * rep.ineq_16_se + 1e-12
        worst = max(worst, gap / max(rep.ineq_16_se, 1e-300))
    record(4, "linear expectation identity", bad == 0, f"{bad}/50 outside 4 SE, worst {worst:.2e} SE")


# -- odometry -------------------------------------------------------------------------


def test_odometry_fusion_trend():
    ate = {src: _run("odometry-std", sources=src).metrics.ate_rmse
           for src in (("gnss", "icp", "imu"), ("gnss",), ("icp",))}
    fused, gnss, icp = ate[("gnss", "icp", "imu")], ate[("gnss",)], ate[("icp",)]
    zero = _run("odometry-zero").metrics.ate_rmse
    ok = fused <= 1.05 * min(gnss, icp) and zero <= 1e-3
    record(5, "odometry fusion", ok,
           f"fused {fused:.3f} m, gnss-only {gnss:.3f} m, icp-only {icp:.3f} m; zero-noise {zero:.2e} m")


def test_dynamic_masking_trend():
    wins, rows = 0, []
    for seed in SEEDS:
        kw = dict(sources=("icp", "imu"))
        with_mask = _run("dynamic-ate", seed, **kw).metrics.ate_rmse
        without = _run("dynamic-ate", seed, odometry={"remove_dynamic": False}, **kw).metrics.ate_rmse
        wins += with_mask <= without
        rows.append(f"{with_mask:.3f}/{without:.3f}")
    record(6, "dynamic masking", wins >= 4, f"{wins}/5 seeds with <= without (with/without m: {', '.join(rows)})")


# -- mapping and tracking ----------------------------------------------------------------


def test_occupancy_correctness(static3):
    res, elapsed = static3
    occ = res.metrics.occupancy_agreement
    record(7, "occupancy agreement", occ >= 0.99 and elapsed < 30, f"{occ:.4f} at 0.2 m voxels, {elapsed:.1f} s")


def test_tracking_identity(static3):
    m = static3[0].metrics
    crossing = _run("crossing").metrics.id_switches
    ok = m.id_switches == 0 and m.track_recall >= 0.95 and crossing <= 2
    record(8, "tracking", ok, f"static: {m.id_switches} switches, recall {m.track_recall:.3f}; "
                              f"crossing: {crossing} switches")


def test_place_retrieval_trend():
    wins, rows = 0, []
    for seed in SEEDS:
        full = _run("revisit", seed).metrics.place_recall_at1
        image = _run("revisit", seed, mapping={"place_modalities": ["image"]}).metrics.place_recall_at1
        wins += full >= image
        rows.append(f"{full:.3f}/{image:.3f}")
    record(9, "multimodal place retrieval", wins >= 4,
           f"{wins}/5 seeds full >= image-only (recall@1 full/image: {', '.join(rows)})")


def test_two_stage_grounding():
    d, queries = make_benchmark("relational-50", 0)
    graph = ev.ground_truth_graph(d["bodies"])
    two = ev.grounding_accuracy(graph, queries, "two-stage")
    one = ev.grounding_accuracy(graph, queries, "one-stage")
    record(10, "two-stage grounding", two >= one and two >= 0.9,
           f"two-stage {two:.2f}, one-stage {one:.2f} on {len(queries)} queries")


def test_dynamics_semantics():
    res = _run("removal", keyframe_stride=1)
    by_body = {n.true_id: n for n in res.map.graph.nodes.values()}
    box, plant = by_body.get(2), by_body.get(4)  # both vanish at t = 2.0; the plant is behind the camera
    gone = [s.t for s in res.snapshots if box is not None and s.t >= 2.0
            and box.node_id not in {n.node_id for n in s.nodes}]
    first = min(gone) if gone else math.inf
    frames = round((first - 2.0) * 10) + 1 if gone else None
    ok = box is not None and plant is not None and frames is not None and frames <= 5 \
        and not box.active and plant.active
    record(11, "dynamics semantics", ok,
           f"in-view node inactive on frame {frames} after removal; out-of-view node active="
           f"{None if plant is None else plant.active}")


# -- serialization and determinism ------------------------------------------------------------


def _cluster_ring():
    bodies = [box_body(1, (0, 0, -0.15), (20.1, 20.1, 0.05), label="floor")]
    for k in range(10):
        a = 2 * math.pi * k / 10
        x, y = 6.1 * math.cos(a), 6.1 * math.sin(a)
        bodies.append(box_body(2 + 2 * k, (x, y, 0.35), (0.6, 0.6, 0.35), label="table"))
        bodies.append(box_body(3 + 2 * k, (x + 0.2, y, 0.85), (0.15, 0.15, 0.15), label="cup"))
    pb = PathBuilder().turn(2 * math.pi)
    return scenario(bodies, duration=pb.t, robot_path=pb.waypoints())


def test_map_serialization(tmp_path):
    d = _cluster_ring()
    m = run_pipeline(PipelineConfig(scenario=d, evaluate_occupancy=False)).map
    # the exact object graph of the scene, so node and edge counts are known
    m.graph = ev.ground_truth_graph(d["bodies"])
    for k, n in enumerate(m.graph.nodes.values()):
        n.tracklet = [(0.1 * j, n.centroid + 0.01 * j) for j in range(3)]
        n.active = k % 7 != 3
        n.interactive_state = "open" if k % 5 == 0 else None
    sizes = dict(voxels=len(m.grid), nodes=len(m.graph.nodes), edges=len(m.graph.edges), places=len(m.places))
    path = save_map(m, tmp_path / "map.m3dm")
    exact = load_map(path).equals(m)
    raw = path.read_bytes()
    (tmp_path / "cut.m3dm").write_bytes(raw[:-100])
    (tmp_path / "future.m3dm").write_bytes(raw[:4] + (99).to_bytes(4, "little") + raw[8:])
    errors = []
    for name, exc in (("cut.m3dm", ChecksumError), ("future.m3dm", UnsupportedVersionError)):
        try:
            load_map(tmp_path / name)
        except exc:
            errors.append(name)
    big = sizes["voxels"] >= 10_000 and sizes["nodes"] >= 20 and sizes["edges"] >= 30 and sizes["places"] >= 10
    record(12, "map serialization", exact and big and len(errors) == 2,
           f"field-exact={exact} on {sizes}; errors raised for {errors}")


def test_run_determinism(tmp_path):
    outs = []
    for name in ("a", "b"):
        code = main(["run", "--benchmark", "static-3", "--seed", "3", "--out", str(tmp_path / name)])
        outs.append((code, (tmp_path / name / "map.m3dm").read_bytes(), (tmp_path / name / "metrics.json").read_bytes()))
    (ca, ma, ja), (cb, mb, jb) = outs
    same = ca == cb == 0 and ma == mb and ja == jb
    record(13, "run determinism", same, f"map files identical={ma == mb} ({len(ma)} bytes), metrics identical={ja == jb}")
