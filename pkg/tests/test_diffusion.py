import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiglab.diffusion import (NoiseSchedule, SampleSet, ScoreField, ddim_step, ddim_step_jacobian_eps,
                              forward_diffuse, langevin_transition, reverse_sample, standard_normal_score)
from aiglab.errors import NumericalDivergenceError
from aiglab.gmm import GmmDistribution, toy_gmm_1d
from aiglab.linalg import SeededRng

SCHED = NoiseSchedule()


def test_schedule_endpoints_and_monotonicity():
    assert SCHED.alpha_bar[0] == 1.0 and SCHED.sigma[0] == 0.0
    assert np.all(np.diff(SCHED.alpha_bar) < 0)
    assert np.all(np.diff(SCHED.sigma) > 0)
    assert np.max(np.abs(SCHED.sigma**2 - (1 - SCHED.alpha_bar))) <= 1e-12
    assert SCHED.alpha_bar[-1] < 1e-4


def test_schedule_coefficients():
    np.testing.assert_allclose(SCHED.beta[1], 1e-4)
    np.testing.assert_allclose(SCHED.beta[-1], 0.02)
    np.testing.assert_array_equal(SCHED.drift_coeff, -SCHED.beta / 2)
    np.testing.assert_allclose(SCHED.diffusion_coeff ** 2, SCHED.beta, rtol=1e-15, atol=0)


def test_schedule_digest_depends_on_parameters():
    assert SCHED.digest() == NoiseSchedule().digest()
    assert SCHED.digest() != NoiseSchedule(beta_end=0.03).digest()


def test_strided_steps():
    assert SCHED.strided_steps(25)[:3] == [1000, 960, 920]
    assert SCHED.strided_steps(25)[-1] == 0 and len(SCHED.strided_steps(25)) == 26
    with pytest.raises(ValueError):
        SCHED.strided_steps(7)


def test_forward_at_zero_is_identity():
    x0 = np.array([[0.3], [-1.7]])
    np.testing.assert_array_equal(forward_diffuse(x0, 0, SCHED, SeededRng(0)), x0)


def test_forward_at_T_is_standard_normal():
    x = forward_diffuse(np.full((100_000, 1), 2.0), 1000, SCHED, SeededRng(1))
    assert abs(x.mean()) <= 0.02
    assert abs(x.var() - 1) <= 0.03


def test_forward_deterministic_and_range_checked():
    x0 = np.ones((3, 2))
    np.testing.assert_array_equal(forward_diffuse(x0, 500, SCHED, SeededRng(4)),
                                  forward_diffuse(x0, 500, SCHED, SeededRng(4)))
    for bad in (-1, 1001):
        with pytest.raises(ValueError):
            forward_diffuse(x0, bad, SCHED, SeededRng(0))


def ddim_gaussian_contraction(schedule, n_steps):
    # with score -x the DDIM map is x -> (sqrt(ab_t ab_t') + sigma_t sigma_t') x
    steps = schedule.strided_steps(n_steps)
    a, s = schedule.sqrt_alpha_bar, schedule.sigma
    return np.prod([a[t] * a[u] + s[t] * s[u] for t, u in zip(steps[:-1], steps[1:])])


@pytest.mark.parametrize("n_steps", [25, 100, 200])
def test_reverse_standard_normal_matches_contraction_oracle(n_steps):
    out = reverse_sample(standard_normal_score(), SCHED, n_steps, SeededRng(2), 5000).points
    x_T = SeededRng(2).normal((5000, 1))
    c = ddim_gaussian_contraction(SCHED, n_steps)
    np.testing.assert_allclose(out, c * x_T, rtol=1e-12)
    assert abs(out.mean()) <= 0.05
    if n_steps >= 100:
        assert abs(out.var() - 1) <= 0.1


def test_reverse_single_gaussian_mean():
    mu, s = 0.7, 0.3
    g = GmmDistribution([1.0], [[mu]], [s])
    out = reverse_sample(g.score_field(SCHED), SCHED, 25, SeededRng(5), 5000).points[:, 0]
    assert abs(out.mean() - mu) <= 3 * out.std() / np.sqrt(out.size)


def test_reverse_deterministic_single_sample():
    g = toy_gmm_1d().score_field(SCHED)
    a = reverse_sample(g, SCHED, 25, SeededRng(9), 1)
    b = reverse_sample(g, SCHED, 25, SeededRng(9), 1)
    np.testing.assert_array_equal(a.points, b.points)


def test_reverse_reports_diverging_step():
    bad = ScoreField(lambda x, t: np.full_like(x, np.inf if t == 960 else 0.0))
    with np.errstate(invalid="ignore"), pytest.raises(NumericalDivergenceError) as info:
        reverse_sample(bad, SCHED, 25, SeededRng(0), 4)
    assert info.value.step == 960


def test_toy_reverse_is_stable_under_step_doubling():
    field = toy_gmm_1d().score_field(SCHED)
    m25 = reverse_sample(field, SCHED, 25, SeededRng(3), 2000).points.mean()
    m50 = reverse_sample(field, SCHED, 50, SeededRng(3), 2000).points.mean()
    assert abs(m25 - m50) < 0.05


def test_ddim_jacobian_matches_finite_difference():
    x, eps, h = np.array([[0.4]]), np.array([[0.2]]), 1e-6
    fd = (ddim_step(x, eps + h, 600, 560, SCHED) - ddim_step(x, eps - h, 600, 560, SCHED)) / (2 * h)
    np.testing.assert_allclose(fd[0, 0], ddim_step_jacobian_eps(600, 560, SCHED), rtol=1e-8)


def test_langevin_standard_normal_stationary():
    x = np.full((4000, 1), 3.0)
    out = langevin_transition(x, 1000, 0, standard_normal_score(), SCHED, 1, 1.0, SeededRng(6))
    assert abs(out.var() - 1) <= 0.1


def test_langevin_argument_checks():
    x = np.zeros((2, 1))
    with pytest.raises(ValueError):
        langevin_transition(x, 100, 90, standard_normal_score(), SCHED, 0, 1.0, SeededRng(0))
    with pytest.raises(ValueError):
        langevin_transition(x, 100, 100, standard_normal_score(), SCHED, 1, 1.0, SeededRng(0))
    with pytest.raises(ValueError):
        langevin_transition(x, 100, 90, standard_normal_score(), SCHED, 1, 0.0, SeededRng(0))


def test_langevin_toy_from_900_covers_both_modes():
    g = toy_gmm_1d()
    rng = SeededRng(8)
    xt = forward_diffuse(g.sample(rng, 2000).points, 900, SCHED, rng)
    out = langevin_transition(xt, 900, 0, g.score_field(SCHED), SCHED, 1, 0.05, rng)
    assert abs(np.mean(out > 0) - 0.5) <= 0.07


def test_langevin_divergence():
    bad = ScoreField(lambda x, t: np.full_like(x, np.inf))
    with pytest.raises(NumericalDivergenceError):
        langevin_transition(np.zeros((1, 1)), 50, 0, bad, SCHED, 1, 1.0, SeededRng(0))


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 20), d=st.integers(1, 4), seed=st.integers(0, 2**63))
def test_sample_set_round_trip(tmp_path_factory, n, d, seed):
    pts = np.random.default_rng(seed % 2**32).normal(size=(n, d)) * 10.0 ** np.random.default_rng(1).integers(-5, 5)
    s = SampleSet(pts, origin="aig", seed=seed, n_steps=25, meta={"note": "x"})
    path = tmp_path_factory.mktemp("ss") / "s.csv"
    s.save(path)
    back = SampleSet.load(path)
    np.testing.assert_array_equal(back.points, pts)
    assert (back.origin, back.seed, back.n_steps) == ("aig", seed, 25)
    with open(path) as fh:
        assert fh.readline().strip() == ",".join(f"dim_{j}" for j in range(d))


def test_sample_set_rejects_empty_and_bad_origin():
    with pytest.raises(ValueError):
        SampleSet(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        SampleSet(np.zeros((1, 2)), origin="nonsense")
