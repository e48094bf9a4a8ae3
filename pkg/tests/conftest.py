import numpy as np
import pytest


def box_body(bid, center, half, label="box", color=(0.8, 0.2, 0.2), yaw=0.0, **extra):
    b = {"id": bid, "label": label, "shape": {"box": list(half)}, "color": list(color),
         "motion": {"type": "static", "pose": {"t": list(center), "yaw": yaw}}}
    b.update(extra)
    return b


def sphere_body(bid, center, radius, label="ball", color=(0.2, 0.2, 0.8), **extra):
    b = {"id": bid, "label": label, "shape": {"sphere": radius}, "color": list(color),
         "motion": {"type": "static", "pose": {"t": list(center)}}}
    b.update(extra)
    return b


def scenario(bodies, duration=1.0, rate=10.0, seed=0, **extra):
    d = {"seed": seed, "duration_s": duration, "rate_hz": rate, "bodies": bodies}
    d.update(extra)
    return d


def surface_distance(spec, body_id, pose, p):
    """Signed distance from world point ``p`` to a body surface."""
    b = spec.body(body_id)
    local = pose[:3, :3].T @ (p - pose[:3, 3])
    if b.shape.kind == "sphere":
        return float(np.linalg.norm(local) - b.shape.radius)
    d = np.abs(local) - b.shape.half_extents
    return float(np.linalg.norm(np.maximum(d, 0.0)) + min(d.max(), 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Filled by test_acceptance: criterion number -> (name, passed, detail).
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{k:2d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}")
