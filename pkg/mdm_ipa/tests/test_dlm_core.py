import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mdm_ipa.dlm.core import (
    FilterState,
    NodePrior,
    PredictiveSummary,
    RegressionDesign,
    batch_lpl,
    filter_series,
    filter_step,
    log_predictive_density,
)
from mdm_ipa.util.exceptions import DataError


def random_regression(seed, T=60, p=3):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(T), rng.normal(size=(T, p - 1))])
    beta = rng.normal(size=p)
    y = X @ beta + rng.normal(scale=rng.uniform(0.2, 2.0), size=T)
    return y, X


def test_log_predictive_density_matches_student_t():
    pred = PredictiveSummary(f=1.5, Q=2.0, dof=4.0, e=0.0, log_density=0.0)
    expected = stats.t.logpdf(0.3, df=4.0, loc=1.5, scale=np.sqrt(2.0))
    assert np.isclose(log_predictive_density(pred, 0.3), expected)


@pytest.mark.parametrize("dof,Q", [(2.0, 2.0), (5.0, 0.5), (50.0, 3.0)])
def test_predictive_density_integrates_to_one(dof, Q):
    pred = PredictiveSummary(f=0.7, Q=Q, dof=dof, e=0.0, log_density=0.0)
    total, _ = integrate.quad(
        lambda y: np.exp(log_predictive_density(pred, y)), -np.inf, np.inf
    )
    assert abs(total - 1.0) < 1e-6


def test_filter_step_first_update():
    prior = NodePrior.weakly_informative(p=1)
    state, pred = filter_step(prior.initial_state(), 2.0, [1.0], delta=1.0)
    # R* = 3, Q* = 4, A = 0.75
    assert pred.f == 0.0
    assert np.isclose(pred.Q, 4.0 * prior.d0 / prior.n0)
    assert pred.dof == prior.n0
    assert np.isclose(state.m[0], 1.5)
    assert np.isclose(state.cstar[0, 0], 3.0 - 0.75**2 * 4.0)
    assert state.n == pytest.approx(prior.n0 + 1)
    assert state.d == pytest.approx(prior.d0 + 4.0 / 4.0)


def test_filter_step_inflation_widens_forecast():
    prior = NodePrior.weakly_informative(p=2)
    state = prior.initial_state()
    _, plain = filter_step(state, 1.0, [1.0, 0.5], delta=0.9)
    _, inflated = filter_step(state, 1.0, [1.0, 0.5], delta=0.9, inflation=100.0)
    assert inflated.Q > plain.Q


@pytest.mark.parametrize("delta", [0.0, -0.1, 1.01])
def test_filter_step_bad_delta(delta):
    prior = NodePrior.weakly_informative(p=1)
    with pytest.raises(ValueError):
        filter_step(prior.initial_state(), 1.0, [1.0], delta=delta)


def test_filter_step_non_finite():
    prior = NodePrior.weakly_informative(p=1)
    with pytest.raises(DataError):
        filter_step(prior.initial_state(), np.nan, [1.0], delta=0.9)
    with pytest.raises(DataError):
        filter_step(prior.initial_state(), 1.0, [1.0, 2.0], delta=0.9)


def test_filter_state_scale():
    state = FilterState(t=3, m=[0.0], cstar=[[1.0]], n=4.0, d=2.0)
    assert state.S == 0.5
    assert state.dim == 1


def test_prior_must_be_positive_definite():
    with pytest.raises(ValueError):
        NodePrior(m0=[0.0, 0.0], cstar0=[[1.0, 2.0], [2.0, 1.0]], n0=1.0, d0=1.0)
    with pytest.raises(ValueError):
        NodePrior(m0=[0.0], cstar0=[[1.0]], n0=0.0, d0=1.0)
    with pytest.raises(DataError):
        NodePrior(m0=[0.0, 0.0], cstar0=[[1.0]], n0=1.0, d0=1.0)


def test_regression_design_from_data():
    data = np.arange(12, dtype=float).reshape(4, 3)
    design = RegressionDesign.from_data(data, 2, parents=(1, 0))
    assert design.parents == (0, 1)
    assert design.dim == 3
    np.testing.assert_array_equal(design.covariates[:, 1], data[:, 0])

    lagged = RegressionDesign.from_data(data, 2, parents=(0,), lag=1)
    assert lagged.T == 3
    assert lagged.start == 1
    np.testing.assert_array_equal(lagged.covariates[:, -1], data[:-1, 2])


def test_regression_design_errors():
    data = np.ones((4, 3))
    with pytest.raises(ValueError):
        RegressionDesign.from_data(data, 1, parents=(1,))
    with pytest.raises(ValueError):
        RegressionDesign.from_data(data, 1, parents=(0,), lag=2)
    with pytest.raises(DataError):
        RegressionDesign(covariates=np.zeros((3, 1)))


def test_filter_series_run_properties(chain_data):
    design = RegressionDesign.from_data(chain_data, 1, parents=(0,))
    prior = NodePrior.weakly_informative(p=2)
    run = filter_series(chain_data[:, 1], design, 1.0, prior)
    T = chain_data.shape[0]
    assert run.T == T
    np.testing.assert_array_equal(run.times, np.arange(T))
    assert run.means.shape == (T, 2)
    assert np.isclose(run.lpl, run.log_densities.sum())
    assert run.final_state.n == pytest.approx(prior.n0 + T)
    np.testing.assert_allclose(run.std_errors, run.errors / np.sqrt(run.scales))
    # the coefficient on the parent is learned
    assert abs(run.final_state.m[1] - 0.8) < 0.25


def test_filter_series_errors():
    prior = NodePrior.weakly_informative(p=1)
    design = RegressionDesign(covariates=np.ones((5, 1)))
    with pytest.raises(DataError):
        filter_series(np.ones(3), design, 0.9, prior)
    with pytest.raises(DataError):
        filter_series(np.ones(5), design, 0.9, NodePrior.weakly_informative(p=2))
    with pytest.raises(DataError):
        filter_series([], RegressionDesign(covariates=np.ones((0, 1))), 0.9, prior)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_static_filter_matches_conjugate_regression(seed):
    y, X = random_regression(seed)
    p = X.shape[1]
    prior = NodePrior.weakly_informative(p=p)
    run = filter_series(y, RegressionDesign(covariates=X), 1.0, prior)

    precision0 = np.linalg.inv(prior.cstar0)
    precision = precision0 + X.T @ X
    cstar = np.linalg.inv(precision)
    m = cstar @ (precision0 @ prior.m0 + X.T @ y)
    d = prior.d0 + y @ y + prior.m0 @ precision0 @ prior.m0 - m @ precision @ m

    final = run.final_state
    np.testing.assert_allclose(final.m, m, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(final.cstar, cstar, rtol=1e-8, atol=1e-12)
    assert final.d == pytest.approx(d, rel=1e-8)
    assert final.n == pytest.approx(prior.n0 + len(y))


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2**32 - 1),
    delta=st.sampled_from([0.5, 0.73, 0.9, 1.0]),
)
def test_batch_lpl_matches_filter_series(seed, delta):
    y, X = random_regression(seed, T=40)
    prior = NodePrior.weakly_informative(p=X.shape[1])
    expected = filter_series(y, RegressionDesign(covariates=X), delta, prior).lpl
    lpl = batch_lpl(y, X, [delta], prior)
    assert lpl.shape == (1, 1)
    assert lpl[0, 0] == pytest.approx(expected, rel=1e-10)


def test_batch_lpl_stack_and_inflation(rng):
    T = 50
    y = rng.normal(size=T)
    designs = np.stack(
        [np.column_stack([np.ones(T), rng.normal(size=T)]) for _ in range(3)]
    )
    prior = NodePrior.weakly_informative(p=2)
    deltas = np.array([0.6, 0.8, 1.0])
    inflation = np.ones(T)
    inflation[20] = 100.0
    lpl = batch_lpl(y, designs, deltas, prior, inflation=inflation)
    assert lpl.shape == (3, 3)
    run = filter_series(
        y, RegressionDesign(covariates=designs[2]), 0.8, prior, inflation={20: 100.0}
    )
    assert lpl[2, 1] == pytest.approx(run.lpl, rel=1e-10)


def test_batch_lpl_errors():
    prior = NodePrior.weakly_informative(p=1)
    with pytest.raises(DataError):
        batch_lpl(np.ones(4), np.ones((3, 1)), [0.9], prior)
    with pytest.raises(DataError):
        batch_lpl([1.0, np.nan], np.ones((2, 1)), [0.9], prior)
    with pytest.raises(ValueError):
        batch_lpl(np.ones(3), np.ones((3, 1)), [1.5], prior)
