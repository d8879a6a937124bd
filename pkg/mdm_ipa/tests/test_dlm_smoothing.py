import numpy as np
import pytest

from mdm_ipa.dlm.core import NodePrior, RegressionDesign, filter_series
from mdm_ipa.dlm.smoothing import filtered_intervals, smooth


@pytest.fixture
def chain_run(chain_data):
    def make_run(delta):
        design = RegressionDesign.from_data(chain_data, 1, parents=(0,))
        return filter_series(chain_data[:, 1], design, delta, NodePrior.weakly_informative(p=2))

    return make_run


def test_smooth_ends_at_filtered_posterior(chain_run):
    run = chain_run(0.9)
    smoothed = smooth(run, 0.9)
    np.testing.assert_allclose(smoothed.means[-1], run.final_state.m)
    np.testing.assert_allclose(smoothed.cstar[-1], run.final_state.cstar)
    assert smoothed.means.shape == run.means.shape
    assert smoothed.dof == run.final_state.n
    np.testing.assert_array_equal(smoothed.times, run.times)


def test_static_smoothing_is_constant(chain_run):
    run = chain_run(1.0)
    smoothed = smooth(run, 1.0)
    np.testing.assert_allclose(
        smoothed.means, np.broadcast_to(run.final_state.m, smoothed.means.shape)
    )


def test_smoothed_intervals_contain_means(chain_run):
    smoothed = smooth(chain_run(0.95), 0.95, level=0.9)
    assert np.all(smoothed.hpd_lo < smoothed.means)
    assert np.all(smoothed.means < smoothed.hpd_hi)
    wider = smooth(chain_run(0.95), 0.95, level=0.99)
    assert np.all(wider.hpd_hi - wider.hpd_lo > smoothed.hpd_hi - smoothed.hpd_lo)


def test_smoothing_narrows_intervals(chain_run):
    run = chain_run(0.9)
    smoothed = smooth(run, 0.9)
    filtered = filtered_intervals(run)
    smoothed_var = np.diagonal(smoothed.cstar, axis1=1, axis2=2)
    filtered_var = np.diagonal(filtered.cstar, axis1=1, axis2=2)
    assert np.all(smoothed_var <= filtered_var * (1 + 1e-9))
    assert np.all(smoothed_var[:-10] < filtered_var[:-10])


@pytest.mark.parametrize("level", [0.0, 1.0, 1.5])
def test_smooth_bad_level(chain_run, level):
    with pytest.raises(ValueError):
        smooth(chain_run(0.9), 0.9, level=level)


def test_smooth_needs_matching_delta(chain_run):
    with pytest.raises(ValueError):
        smooth(chain_run(0.9), 0.8)


def test_filtered_intervals(chain_run):
    run = chain_run(0.9)
    filtered = filtered_intervals(run, level=0.95)
    np.testing.assert_allclose(filtered.means, run.means)
    assert np.all(filtered.hpd_lo <= filtered.hpd_hi)
    assert filtered.dof == pytest.approx(run.final_state.n)


def test_smooth_matches_joint_gaussian_conditioning(rng):
    # the discount filter is a Kalman filter with W_t = C*_{t-1} (1 - delta) / delta
    # and unit observation variance, so smoothing is Gaussian conditioning on y
    T, delta = 12, 0.8
    x = rng.normal(size=T)
    y = 0.5 + 1.5 * x + rng.normal(scale=0.3, size=T)
    design = RegressionDesign.from_data(np.column_stack([x, y]), 1, parents=(0,))
    prior = NodePrior.weakly_informative(p=2)
    run = filter_series(y, design, delta, prior)
    smoothed = smooth(run, delta)

    previous = [prior.cstar0] + [state.cstar for state in run.states[:-1]]
    W = [cstar * (1.0 - delta) / delta for cstar in previous]
    cumulative = np.cumsum(W, axis=0)
    # covariance of theta_1..theta_T stacked in one 2T vector
    cov_theta = np.zeros((2 * T, 2 * T))
    for s in range(T):
        for t in range(T):
            block = prior.cstar0 + cumulative[min(s, t)]
            cov_theta[2 * s : 2 * s + 2, 2 * t : 2 * t + 2] = block
    F = np.zeros((T, 2 * T))
    for t in range(T):
        F[t, 2 * t : 2 * t + 2] = design.covariates[t]
    mean_theta = np.tile(prior.m0, T)
    cov_y = F @ cov_theta @ F.T + np.eye(T)
    gain = cov_theta @ F.T @ np.linalg.inv(cov_y)
    post_mean = mean_theta + gain @ (y - F @ mean_theta)
    post_cov = cov_theta - gain @ F @ cov_theta

    np.testing.assert_allclose(
        smoothed.means, post_mean.reshape(T, 2), rtol=1e-6, atol=1e-8
    )
    for t in range(T):
        block = post_cov[2 * t : 2 * t + 2, 2 * t : 2 * t + 2]
        np.testing.assert_allclose(smoothed.cstar[t], block, rtol=1e-6, atol=1e-8)
