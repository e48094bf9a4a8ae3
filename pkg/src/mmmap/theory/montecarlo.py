"""Monte Carlo statistics of fused recall quality and witness search.

Confidence rows come from a Beta mixture: every object of a row has a
latent bit "really belongs to the class", shared by both models, and each
model draws its confidence from one Beta law for members and another for
non-members. The shared bit couples the two models positively.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fusion import FusionModel, condition_case1, condition_case2, recall_quality_rows

CHUNK = 10_000  # rows per random sub-stream
MIN_SAMPLES = 1000
RHO_NOTE = ("rho is the Pearson correlation, pooled over all rows and positions, between the "
            "components of (s*Y1*Y1^T)*Y2 and the matching components of Y2")


class SamplerError(ValueError):
    pass


class WitnessNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerParams:
    n_y: int = 10  # objects per row
    p_member: float = 0.5
    model1_member: tuple = (5.0, 2.0)  # Beta(a, b) for members
    model1_other: tuple = (2.0, 5.0)
    model2_member: tuple = (5.0, 2.0)
    model2_other: tuple = (2.0, 5.0)
    constant: tuple | None = None  # (y1, y2): degenerate sampler

    def validate(self):
        if int(self.n_y) < 1:
            raise SamplerError("n_y must be >= 1")
        if not 0.0 <= self.p_member <= 1.0:
            raise SamplerError("p_member must lie in [0, 1]")
        for name in ("model1_member", "model1_other", "model2_member", "model2_other"):
            a, b = getattr(self, name)
            if not (a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b)):
                raise SamplerError(f"{name} Beta parameters must be finite and > 0")
        if self.constant is not None and not all(0.0 <= v <= 1.0 for v in self.constant):
            raise SamplerError("constant confidences must lie in [0, 1]")
        return self

    def to_json(self):
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    @classmethod
    def from_json(cls, d):
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def _stream(seed, chunk):
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chunk),))
    return np.random.Generator(np.random.Philox(ss))


def sample_pair(sampler, n_rows, seed):
    """``(Y1, Y2)`` of shape ``(n_rows, n_y)``.

    Rows are drawn in fixed chunks, each from its own counter-based stream,
    so the result does not depend on how chunks are distributed.
    """
    sampler.validate()
    shape = (n_rows, int(sampler.n_y))
    if sampler.constant is not None:
        return np.full(shape, float(sampler.constant[0])), np.full(shape, float(sampler.constant[1]))
    y1, y2 = np.empty(shape), np.empty(shape)
    for k, start in enumerate(range(0, n_rows, CHUNK)):
        stop = min(start + CHUNK, n_rows)
        rng = _stream(seed, k)
        m = rng.random((stop - start, shape[1])) < sampler.p_member
        for out, mem, oth in ((y1, sampler.model1_member, sampler.model1_other),
                              (y2, sampler.model2_member, sampler.model2_other)):
            a = rng.beta(*mem, size=m.shape)
            b = rng.beta(*oth, size=m.shape)
            out[start:stop] = np.where(m, a, b)
    return y1, y2


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


@dataclass
class TheoryReport:
    t: float
    n_samples: int
    seed: int
    fusion: dict
    sampler: dict
    mean_y: dict  # Y1, Y2, Y3 (clamped), Y3_raw -> [estimate, SE]
    mean_q: dict  # Y1, Y2, Y3 -> [estimate, SE]
    markov_bounds: dict  # Y1, Y2, Y3 -> E[Y]/t
    markov_ok: dict
    ineq_11_holds: bool
    ineq_11_margin: float  # 2E[Q3] - E[Q1] - E[Q2]
    ineq_11_se: float
    ineq_16_holds: bool
    ineq_16_margin: float  # 2E[Y3_raw] - E[Y1] - E[Y2]
    ineq_16_se: float
    cond_case1: bool | None = None
    cond_case2: bool | None = None
    case2_components: dict | None = None
    linear_identity_residual: float | None = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return asdict(self)


def estimate_statistics(sampler, fusion, t, n_samples=100_000, seed=0):
    """Monte Carlo estimates for one sampler and fusion model at threshold ``t``."""
    if not t > 0:
        raise ValueError("threshold t must be > 0")
    if int(n_samples) < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}")
    n = int(n_samples)
    y1, y2 = sample_pair(sampler, n, seed)
    y3, raw = fusion.apply(y1, y2)
    y3q = np.clip(raw, 0.0, 1.0)  # recall quality is defined on confidences
    rows = {"Y1": y1, "Y2": y2, "Y3": y3q}
    row_mean = {k: v.mean(axis=1) for k, v in rows.items()}
    row_mean["Y3_raw"] = raw.mean(axis=1)
    q = {k: recall_quality_rows(v, t) for k, v in rows.items()}
    mean_y = {k: list(_mean_se(v)) for k, v in row_mean.items()}
    mean_q = {k: list(_mean_se(v)) for k, v in q.items()}
    bounds = {k: row_mean[k].mean() / t for k in rows}
    markov_ok = {}
    for k in rows:
        d_mean, d_se = _mean_se(q[k] - row_mean[k] / t)
        markov_ok[k] = bool(d_mean <= 3.0 * d_se + 1e-12)
    m11, se11 = _mean_se(2 * q["Y3"] - q["Y1"] - q["Y2"])
    m16, se16 = _mean_se(2 * row_mean["Y3_raw"] - row_mean["Y1"] - row_mean["Y2"])
    rep = TheoryReport(
        t=float(t), n_samples=n, seed=int(seed), fusion=fusion.to_json(), sampler=sampler.to_json(),
        mean_y=mean_y, mean_q=mean_q, markov_bounds=bounds, markov_ok=markov_ok,
        ineq_11_holds=bool(m11 > 3.0 * se11), ineq_11_margin=m11, ineq_11_se=se11,
        ineq_16_holds=bool(m16 > 0), ineq_16_margin=m16, ineq_16_se=se16,
    )
    e1, e2 = mean_y["Y1"][0], mean_y["Y2"][0]
    if fusion.kind == "linear":
        rep.cond_case1 = condition_case1(fusion.alpha, fusion.beta, fusion.c)
        rep.linear_identity_residual = float(
            m16 - ((2 * fusion.alpha - 1) * e1 + (2 * fusion.beta - 1) * e2 + 2 * fusion.c))
    else:
        var1 = float(y1.var())
        a, b = raw.ravel(), y2.ravel()
        rho = float(np.corrcoef(a, b)[0, 1]) if a.std() > 0 and b.std() > 0 else 0.0
        if e1 > 0 and e2 > 0 and var1 > 0:
            chk = condition_case2(fusion.s, e1, e2, var1, rho)
            rep.cond_case2 = chk.holds
            rep.case2_components = {"s_threshold": chk.s_threshold, "s_ok": chk.s_ok,
                                    "rho": rho, "rho_ok": chk.rho_ok, "var1": var1}
        else:
            rep.cond_case2 = False
            rep.case2_components = {"rho": rho, "var1": var1, "degenerate": True}
        rep.notes.append(RHO_NOTE)
    if rep.ineq_16_holds and not rep.ineq_11_holds:
        rep.notes.append("mean-confidence inequality holds without the recall-quality inequality")
    return rep


# -- witness search ---------------------------------------------------------


def _random_sampler(rng):
    def beta_pair(lo_a, hi_a, lo_b, hi_b):
        return (round(float(rng.uniform(lo_a, hi_a)), 4), round(float(rng.uniform(lo_b, hi_b)), 4))

    return SamplerParams(
        n_y=int(rng.integers(4, 17)),
        p_member=round(float(rng.uniform(0.2, 0.8)), 4),
        model1_member=beta_pair(2, 8, 1, 4), model1_other=beta_pair(1, 4, 2, 8),
        model2_member=beta_pair(2, 8, 1, 4), model2_other=beta_pair(1, 4, 2, 8),
    )


def _random_fusion(rng, theorem, case, sampler, seed):
    if case == "linear":
        if theorem == 2:
            a, b = rng.uniform(0.5, 1.2, size=2)
            c = rng.uniform(0.0, 0.3)
            model = FusionModel("linear", round(float(a), 4), round(float(b), 4), round(float(c), 4))
            return model if condition_case1(model.alpha, model.beta, model.c) else None
        a, b = rng.uniform(0.0, 1.2, size=2)
        c = rng.uniform(-0.2, 0.3)
        return FusionModel("linear", round(float(a), 4), round(float(b), 4), round(float(c), 4))
    if theorem == 2:
        # pick s above the attention-condition threshold of this sampler
        probe = estimate_statistics(sampler, FusionModel("attention", s=1.0), 0.5, 20_000, seed)
        thr = probe.case2_components.get("s_threshold")
        if thr is None or not probe.case2_components.get("rho_ok"):
            return None
        return FusionModel("attention", s=round(float(thr * rng.uniform(1.05, 3.0)), 4))
    return FusionModel("attention", s=round(float(math.exp(rng.uniform(math.log(0.05), math.log(5.0)))), 4))


def find_witness(theorem, search_budget=100, seed=0, case="linear", n_samples=100_000,
                 screen_samples=5_000):
    """Random search for a configuration where fused recall quality beats the
    average of the inputs at a 3-SE margin.

    Returns ``(FusionModel, SamplerParams, TheoryReport)``. For theorem 2
    only fusions satisfying the matching sufficient condition are tried.
    Candidates are screened on ``screen_samples`` rows and confirmed on
    ``n_samples`` rows. Raises :class:`WitnessNotFound` when the budget runs out.
    """
    if theorem not in (1, 2):
        raise ValueError("theorem must be 1 or 2")
    if case not in ("linear", "attention"):
        raise ValueError("case must be linear or attention")
    if int(search_budget) < 1:
        raise ValueError("search budget must be >= 1")
    rng = np.random.default_rng(seed)
    for k in range(int(search_budget)):
        sampler = _random_sampler(rng)
        t = round(float(rng.uniform(0.3, 0.7)), 4)
        eval_seed = int(rng.integers(0, 2**31 - 1))
        fusion = _random_fusion(rng, theorem, case, sampler, eval_seed)
        if fusion is None:
            continue
        if not estimate_statistics(sampler, fusion, t, screen_samples, eval_seed).ineq_11_holds:
            continue
        rep = estimate_statistics(sampler, fusion, t, n_samples, eval_seed)
        if not rep.ineq_11_holds:
            continue
        if theorem == 2 and case == "attention" and not rep.cond_case2:
            continue
        rep.notes.append(f"found after {k + 1} candidate(s)")
        return fusion, sampler, rep
    raise WitnessNotFound(f"no witness for theorem {theorem} ({case}) within {search_budget} candidates")


def witness_record(theorem, case, fusion, sampler, report):
    return {
        "theorem": theorem,
        "case": case,
        "fusion": fusion.to_json(),
        "sampler": sampler.to_json(),
        "t": report.t,
        "n_samples": report.n_samples,
        "seed": report.seed,
        "report": report.to_json(),
    }


def save_witness(path, theorem, case, fusion, sampler, report):
    Path(path).write_text(json.dumps(witness_record(theorem, case, fusion, sampler, report),
                                     sort_keys=True, indent=1))
    return Path(path)


def replay_witness(source):
    """Re-run a stored witness; returns ``(report, verdict matches)``."""
    d = json.loads(Path(source).read_text()) if not isinstance(source, dict) else source
    fusion = FusionModel(**d["fusion"])
    sampler = SamplerParams.from_json(d["sampler"])
    rep = estimate_statistics(sampler, fusion, d["t"], d["n_samples"], d["seed"])
    stored = d["report"]
    same = (rep.ineq_11_holds == stored["ineq_11_holds"]
            and rep.ineq_11_margin == stored["ineq_11_margin"])
    return rep, bool(same)
