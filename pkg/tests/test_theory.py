from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mmmap.theory import (
    FusionModel,
    SamplerError,
    SamplerParams,
    condition_case1,
    condition_case2,
    estimate_statistics,
    find_witness,
    fuse_attention,
    fuse_linear,
    recall_quality,
    recall_quality_rows,
    replay_witness,
    sample_pair,
    save_witness,
)
from mmmap.theory.montecarlo import CHUNK, RHO_NOTE

# -- recall quality ---------------------------------------------------------------


def test_recall_quality_examples():
    assert recall_quality([0.9, 0.2, 0.8], 0.5) == pytest.approx(2 / 3)
    assert recall_quality([0.1, 0.2], 0.5) == 0.0


def test_recall_quality_inclusive_at_threshold():
    # the indicator counts y >= t, so a value equal to the threshold is recalled
    assert recall_quality([0.3], 0.3) == 1.0


@pytest.mark.parametrize("y,t", [([], 0.5), ([0.4], 0.0), ([0.4], -1.0)])
def test_recall_quality_errors(y, t):
    with pytest.raises(ValueError):
        recall_quality(y, t)


@settings(max_examples=100, deadline=None)
@given(rows=st.lists(st.lists(st.integers(0, 20), min_size=1, max_size=12).map(lambda r: r), min_size=1,
                     max_size=8).filter(lambda rs: len({len(r) for r in rs}) == 1),
       t_num=st.integers(1, 20))
def test_recall_quality_matches_exact_count(rows, t_num):
    # confidences on a twentieths grid so comparisons against t are exact in both routes
    t = Fraction(t_num, 20)
    Y = np.array([[v / 20 for v in r] for r in rows])
    got = recall_quality_rows(Y, t_num / 20)
    for r, q in zip(rows, got):
        want = Fraction(sum(Fraction(v, 20) >= t for v in r), len(r))
        assert Fraction(q).limit_denominator(1000) == want
        assert recall_quality([v / 20 for v in r], t_num / 20) == q


# -- fusion -----------------------------------------------------------------------


def test_linear_examples():
    np.testing.assert_allclose(fuse_linear([0.4], [0.8], 0.5, 0.5, 0.0), [0.6])
    y1 = np.array([0.1, 0.7, 0.3])
    np.testing.assert_array_equal(fuse_linear(y1, [0.9, 0.9, 0.9], 1.0, 0.0, 0.0), y1)
    out, raw = fuse_linear([1.0], [1.0], 0.9, 0.9, 0.2, clamp=True, return_raw=True)
    np.testing.assert_allclose(raw, [2.0])
    np.testing.assert_array_equal(out, [1.0])


def test_attention_examples():
    np.testing.assert_allclose(fuse_attention([1.0, 0.0], [0.5, 0.5], 1.0), [0.5, 0.0])
    np.testing.assert_allclose(fuse_attention([1.0], [0.3], 2.5), [0.75])


def test_attention_matches_matrix_product(rng):
    y1, y2 = rng.random(7), rng.random(7)
    np.testing.assert_allclose(fuse_attention(y1, y2, 1.7), (1.7 * np.outer(y1, y1)) @ y2, rtol=1e-12)


@pytest.mark.parametrize("s", [0.0, -1.0])
def test_attention_scale_must_be_positive(s):
    with pytest.raises(ValueError):
        fuse_attention([0.5], [0.5], s)


def test_length_mismatch():
    with pytest.raises(ValueError):
        fuse_linear([0.1, 0.2], [0.3], 1, 1, 0)
    with pytest.raises(ValueError):
        fuse_attention([0.1, 0.2], [0.3], 1.0)


def test_fusion_model_validation():
    with pytest.raises(ValueError):
        FusionModel("linear", alpha=1.0)
    with pytest.raises(ValueError):
        FusionModel("attention", s=0.0)
    with pytest.raises(ValueError):
        FusionModel("bilinear")
    out, raw = FusionModel("linear", 0.9, 0.9, 0.2).apply(np.ones(2), np.ones(2))
    assert np.all(out == 1.0) and np.allclose(raw, 2.0)


# -- sufficient conditions ---------------------------------------------------------


@pytest.mark.parametrize("abc,expected", [((0.6, 0.7, 0.1), True), ((0.5, 0.7, 0.1), False),
                                          ((0.6, 0.5, 0.1), False), ((0.6, 0.7, 0.0), False)])
def test_condition_case1(abc, expected):
    assert condition_case1(*abc) is expected


def test_condition_case2_examples():
    chk = condition_case2(15, 0.5, 0.5, 0.1, 0.3)
    assert chk.holds and chk.s_threshold == pytest.approx(14.0)
    assert not condition_case2(14, 0.5, 0.5, 0.1, 0.3)
    bad_rho = condition_case2(15, 0.5, 0.5, 0.1, -0.1)
    assert not bad_rho and bad_rho.s_ok and not bad_rho.rho_ok
    assert not condition_case2(15, 0.5, 0.5, 0.1, 0.0)


@pytest.mark.parametrize("args", [(1, 0.0, 0.5, 0.1, 0.3), (1, 0.5, -0.5, 0.1, 0.3), (1, 0.5, 0.5, 0.0, 0.3)])
def test_condition_case2_domain(args):
    with pytest.raises(ValueError):
        condition_case2(*args)


@settings(max_examples=100, deadline=None)
@given(m1=st.floats(0.01, 1), m2=st.floats(0.01, 1), v=st.floats(0.001, 0.25), rho=st.floats(-1, 1),
       scale=st.floats(0.1, 3))
def test_condition_case2_total(m1, m2, v, rho, scale):
    thr = 1 / (m1 * m2) + 1 / v
    chk = condition_case2(scale * thr, m1, m2, v, rho)
    assert chk.holds == (scale * thr > chk.s_threshold and rho > 0)


# -- sampler and estimates ---------------------------------------------------------

SAMPLER = SamplerParams(n_y=8, p_member=0.4, model1_member=(6, 2), model1_other=(2, 6),
                        model2_member=(4, 2), model2_other=(1.5, 4))


def test_sampler_validation():
    for bad in (SamplerParams(n_y=0), SamplerParams(p_member=1.5), SamplerParams(model1_member=(0, 1)),
                SamplerParams(constant=(0.5, 1.2))):
        with pytest.raises(SamplerError):
            sample_pair(bad, 10, 0)


def test_samples_are_chunk_stable():
    a1, a2 = sample_pair(SAMPLER, CHUNK + 2500, 7)
    b1, b2 = sample_pair(SAMPLER, CHUNK, 7)
    assert np.array_equal(a1[:CHUNK], b1) and np.array_equal(a2[:CHUNK], b2)
    assert np.all((a1 >= 0) & (a1 <= 1))


def _mixture_mean(p, member, other):
    return p * member[0] / sum(member) + (1 - p) * other[0] / sum(other)


def _mixture_recall(p, member, other, t):
    return p * stats.beta.sf(t, *member) + (1 - p) * stats.beta.sf(t, *other)


def test_estimates_match_closed_form_mixture():
    rep = estimate_statistics(SAMPLER, FusionModel("linear", 0.6, 0.7, 0.05), 0.5, 40_000, seed=3)
    s = SAMPLER
    for key, mem, oth in (("Y1", s.model1_member, s.model1_other), ("Y2", s.model2_member, s.model2_other)):
        est, se = rep.mean_y[key]
        assert abs(est - _mixture_mean(s.p_member, mem, oth)) <= 4 * se
        est, se = rep.mean_q[key]
        assert abs(est - _mixture_recall(s.p_member, mem, oth, 0.5)) <= 4 * se


def test_constant_sampler_boundary_case():
    rep = estimate_statistics(SamplerParams(constant=(0.8, 0.8)), FusionModel("linear", 0.6, 0.6, 0.1), 0.5,
                              1000, seed=0)
    assert rep.mean_y["Y3_raw"][0] == pytest.approx(1.06)
    assert rep.mean_y["Y3"][0] == 1.0
    assert all(rep.mean_q[k] == [1.0, 0.0] for k in ("Y1", "Y2", "Y3"))
    assert rep.ineq_11_margin == 0.0 and not rep.ineq_11_holds
    assert rep.ineq_16_holds


@pytest.mark.parametrize("t", [round(0.1 * k, 1) for k in range(1, 10)])
def test_markov_direction_holds(t):
    for fusion in (FusionModel("linear", 0.8, 0.6, 0.1), FusionModel("attention", s=0.7)):
        rep = estimate_statistics(SAMPLER, fusion, t, 5000, seed=11)
        assert all(rep.markov_ok.values())
        for k in ("Y1", "Y2", "Y3"):
            assert rep.mean_q[k][0] <= rep.markov_bounds[k] + 3 * rep.mean_q[k][1]
            assert rep.mean_q[k][1] >= 0 and rep.mean_y[k][1] >= 0


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0, 1.5), b=st.floats(0, 1.5), c=st.floats(-0.3, 0.3), seed=st.integers(0, 1000))
def test_linear_expectation_identity(a, b, c, seed):
    rep = estimate_statistics(SAMPLER, FusionModel("linear", a, b, c, clamp_output=False), 0.5, 2000, seed)
    e1, e2 = rep.mean_y["Y1"][0], rep.mean_y["Y2"][0]
    want = (2 * a - 1) * e1 + (2 * b - 1) * e2 + 2 * c
    assert abs(rep.ineq_16_margin - want) <= 4 * rep.ineq_16_se + 1e-12


def test_attention_report_components():
    rep = estimate_statistics(SAMPLER, FusionModel("attention", s=0.5), 0.5, 5000, seed=1)
    y1, y2 = sample_pair(SAMPLER, 5000, 1)
    raw = 0.5 * y1 * np.sum(y1 * y2, axis=1, keepdims=True)
    assert rep.case2_components["rho"] == pytest.approx(stats.pearsonr(raw.ravel(), y2.ravel())[0], abs=1e-12)
    assert rep.case2_components["var1"] == pytest.approx(y1.var())
    assert RHO_NOTE in rep.notes
    assert rep.cond_case2 is False  # s is far below the threshold here


def test_estimate_preconditions():
    f = FusionModel("linear", 0.6, 0.6, 0.1)
    with pytest.raises(ValueError):
        estimate_statistics(SAMPLER, f, 0.0, 5000)
    with pytest.raises(ValueError):
        estimate_statistics(SAMPLER, f, 0.5, 999)


def test_same_seed_same_report():
    f = FusionModel("attention", s=0.9)
    a = estimate_statistics(SAMPLER, f, 0.4, 3000, seed=5).to_json()
    b = estimate_statistics(SAMPLER, f, 0.4, 3000, seed=5).to_json()
    assert a == b
    assert estimate_statistics(SAMPLER, f, 0.4, 3000, seed=6).to_json() != a


# -- witnesses ---------------------------------------------------------------------


@pytest.mark.parametrize("theorem,case", [(1, "linear"), (2, "linear"), (1, "attention"), (2, "attention")])
def test_witness_found_and_replayable(theorem, case, tmp_path):
    fusion, sampler, rep = find_witness(theorem, search_budget=100, seed=0, case=case, n_samples=100_000)
    assert rep.ineq_11_holds and rep.n_samples == 100_000
    assert rep.ineq_11_margin > 3 * rep.ineq_11_se
    if theorem == 2 and case == "linear":
        assert condition_case1(fusion.alpha, fusion.beta, fusion.c) and fusion.clamp_output
    if theorem == 2 and case == "attention":
        assert rep.cond_case2
    path = save_witness(tmp_path / "w.json", theorem, case, fusion, sampler, rep)
    replayed, same = replay_witness(path)
    assert same and replayed.to_json() == rep.to_json() | {"notes": replayed.notes}


def test_witness_budget_must_be_positive():
    with pytest.raises(ValueError):
        find_witness(1, search_budget=0)
