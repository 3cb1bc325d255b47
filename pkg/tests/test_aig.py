import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiglab.aig import SATURATION_TOL, SWEEP_POWERS, AigScoreField, GammaSchedule, aig_sample, aig_score, gamma_eval
from aiglab.diffusion import NoiseSchedule, ScoreField
from aiglab.experiment import sample_net
from aiglab.gmm import GmmDistribution, toy_gmm_1d
from aiglab.linalg import SeededRng

SCHED = NoiseSchedule()
T = 1000
ALL_KINDS = ([GammaSchedule("power", p=p) for p in SWEEP_POWERS]
             + [GammaSchedule("heaviside", switch=s) for s in (0.25, 0.5, 1.0)]
             + [GammaSchedule("sigmoid", kappa=k) for k in (0.05, 0.1, 1.0)])


def test_power_examples():
    assert gamma_eval(GammaSchedule("power", p=1), T // 4) == pytest.approx(0.25, abs=1e-15)
    assert gamma_eval(GammaSchedule("power", p=2), T // 2) == 0.75


@pytest.mark.parametrize("g", ALL_KINDS, ids=repr)
def test_endpoints(g):
    assert abs(gamma_eval(g, 0)) <= SATURATION_TOL
    assert abs(gamma_eval(g, T) - 1) <= SATURATION_TOL
    if g.kind == "power":
        assert gamma_eval(g, 0) == 0.0 and gamma_eval(g, T) == 1.0


@pytest.mark.parametrize("g", ALL_KINDS, ids=repr)
def test_monotone_on_grid(g):
    vals = np.array([gamma_eval(g, t) for t in range(T + 1)])
    assert np.all(np.diff(vals) >= 0)
    assert np.all((vals >= 0) & (vals <= 1))


def test_heaviside_and_sigmoid_shapes():
    h = GammaSchedule("heaviside", switch=0.5)
    assert gamma_eval(h, 499) == 0.0 and gamma_eval(h, 500) == 1.0
    assert gamma_eval(GammaSchedule("sigmoid", kappa=0.05), 500) == 0.5


def test_schedule_validation():
    for kw in ({"kind": "power", "p": 0.0}, {"kind": "sigmoid", "kappa": 0.01},
               {"kind": "heaviside", "switch": 0.0}, {"kind": "cosine"}):
        with pytest.raises(ValueError):
            GammaSchedule(**kw)
    for t in (-1, T + 1):
        with pytest.raises(ValueError):
            gamma_eval(GammaSchedule(), t)


def two_fields():
    a = toy_gmm_1d().score_field(SCHED)
    b = GmmDistribution([0.9, 0.1], [[1.2], [-0.8]], [0.1, 0.3]).score_field(SCHED)
    return a, b


def test_endpoint_exactness():
    base, ft = two_fields()
    f = AigScoreField(base, ft, GammaSchedule("power", p=2))
    x = np.linspace(-2, 2, 11)[:, None]
    np.testing.assert_array_equal(aig_score(f, x, T), base(x, T))
    np.testing.assert_array_equal(aig_score(f, x, 0), ft(x, 0))


@settings(max_examples=60, deadline=None)
@given(t=st.integers(0, T), p=st.sampled_from(SWEEP_POWERS), xs=st.lists(st.floats(-3, 3), min_size=1, max_size=5))
def test_blend_is_convex_combination(t, p, xs):
    base, ft = two_fields()
    x = np.array(xs)[:, None]
    gamma = 1.0 - ((T - t) / T) ** p
    expected = gamma * toy_gmm_1d().perturbed_score(x, t, SCHED) + (1 - gamma) * ft(x, t)
    got = aig_score(AigScoreField(base, ft, GammaSchedule("power", p=p)), x, t)
    assert np.max(np.abs(got - expected)) == 0.0


def test_identical_fields_pass_through():
    base, _ = two_fields()
    f = AigScoreField(base, base, GammaSchedule("power", p=3))
    x = np.linspace(-2, 2, 9)[:, None]
    for t in (0, 37, 500, 1000):
        np.testing.assert_allclose(aig_score(f, x, t), base(x, t), rtol=1e-15, atol=1e-12)


def test_aig_sample_tags_origin():
    base, ft = two_fields()
    out = aig_sample(base, ft, GammaSchedule(), SCHED, 25, 10, SeededRng(0))
    assert out.origin == "aig" and out.points.shape == (10, 1)


def _stats_close(x, y):
    # means within 4 combined standard errors, variances within 10 %
    se = np.sqrt(x.var() / len(x) + y.var() / len(y))
    return abs(x.mean() - y.mean()) <= 4 * se + 1e-12 and abs(x.var() / y.var() - 1) <= 0.1


def test_limits_recover_base_and_finetuned(toy_models, toy_cfg):
    m = toy_models
    base_f, ft_f = m.base.score_field(SCHED), m.draft.score_field(SCHED)
    ref_base = m.base_samples.points[:, 0]
    ref_ft = sample_net(m.draft, toy_cfg, m.latents, "finetuned").points[:, 0]
    big = aig_sample(base_f, ft_f, GammaSchedule("power", p=1e4), SCHED, 25, 2000, SeededRng(0), x_T=m.latents)
    small = aig_sample(base_f, ft_f, GammaSchedule("power", p=1e-4), SCHED, 25, 2000, SeededRng(0), x_T=m.latents)
    assert _stats_close(big.points[:, 0], ref_base)
    assert np.mean(np.abs(small.points[:, 0] - ref_ft)) <= 0.01


def _p2_run(m):
    base_f, ft_f = m.base.score_field(SCHED), m.draft.score_field(SCHED)
    x = aig_sample(base_f, ft_f, GammaSchedule("power", p=2), SCHED, 25, 2000, SeededRng(0), x_T=m.latents)
    return x.points


def _gain(m, toy_cfg, pts):
    rb = np.mean(m.reward(m.base_samples.points))
    rd = np.mean(m.reward(sample_net(m.draft, toy_cfg, m.latents, "finetuned").points))
    return (np.mean(m.reward(pts)) - rb) / (rd - rb), rb


def test_p2_reaches_most_of_the_reward_gain(toy_models, toy_cfg):
    gain, _ = _gain(toy_models, toy_cfg, _p2_run(toy_models))
    assert gain >= 0.8


def test_reward_ceiling_with_a_populated_minor_mode(toy_models, toy_cfg):
    """With >=15 % of samples on the h=0.4 bump, mean reward is at most
    0.85 * 1 + 0.15 * 0.4 (plus the negligible cross-bump tail), which in this
    toy problem falls short of base + 0.8 * (DRaFT - base)."""
    m = toy_models
    _, rb = _gain(m, toy_cfg, m.base_samples.points)
    rd = np.mean(m.reward(sample_net(m.draft, toy_cfg, m.latents, "finetuned").points))
    tail = m.reward(np.array([[-1.0], [1.0]])) - np.array([0.4, 1.0])
    ceiling = 0.85 * 1.0 + 0.15 * 0.4 + tail.max()
    assert ceiling < rb + 0.8 * (rd - rb)


@pytest.mark.xfail(strict=True, reason="joint target exceeds the reward ceiling above")
def test_p2_keeps_both_modes_and_reward(toy_models, toy_cfg):
    pts = _p2_run(toy_models)
    gain, _ = _gain(toy_models, toy_cfg, pts)
    share = min(np.mean(pts[:, 0] > 0), np.mean(pts[:, 0] < 0))
    assert share >= 0.15 and gain >= 0.8
