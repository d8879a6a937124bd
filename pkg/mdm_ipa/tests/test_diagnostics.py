import numpy as np
import pytest

from mdm_ipa.diagnostics.embellish import (
    ModelSpec,
    NodeSpec,
    apply_change_points,
    detect_change_points,
    fit_node,
    heteroscedastic_predictive,
    lag_augment,
    transformed_predictive,
)
from mdm_ipa.diagnostics.monitors import (
    BayesFactorSeries,
    acf,
    global_monitor,
    node_monitor,
    parent_child_monitor,
)
from mdm_ipa.dlm.core import PredictiveSummary, log_predictive_density
from mdm_ipa.scoring.local_scores import ScoreConfig, node_best_score
from mdm_ipa.util.exceptions import DataError

COARSE = ScoreConfig(delta_start=0.8, delta_end=1.0, delta_step=0.05)
CHAIN = ModelSpec.from_parents([(), (0,), (1,)])


@pytest.fixture
def ar_data(rng):
    """A single node that alternates in sign from one step to the next."""
    T = 150
    x = np.zeros(T)
    for t in range(1, T):
        x[t] = -0.8 * x[t - 1] + rng.normal()
    return x[:, None]


@pytest.fixture
def break_data(rng):
    """Node 2 follows 2 * node 1 up to time 60 and -2 * node 1 afterwards."""
    T = 120
    x0 = rng.normal(size=T)
    coef = np.where(np.arange(T) < 60, 2.0, -2.0)
    x1 = coef * x0 + rng.normal(scale=0.3, size=T)
    return np.column_stack([x0, x1])


def test_node_spec_validation():
    assert NodeSpec(parents=(2, 0)).parents == (0, 2)
    with pytest.raises(ValueError):
        NodeSpec(lag=2)
    with pytest.raises(ValueError):
        NodeSpec(transform="sqrt")
    with pytest.raises(ValueError):
        NodeSpec(change_points=(-1,))
    with pytest.raises(ValueError):
        NodeSpec(inflation=0.0)


def test_model_spec():
    assert CHAIN.n == 3
    assert CHAIN.to_dict()["3"]["parents"] == [2]
    changed = CHAIN.with_node(0, transform="log")
    assert changed.nodes[0].transform == "log"
    assert CHAIN.nodes[0].transform == "identity"
    with pytest.raises(ValueError):
        CHAIN.node(3)


def test_fit_node_matches_local_score(chain_data):
    fit = fit_node(CHAIN, chain_data, 1, cfg=COARSE)
    score, delta = node_best_score(1, 0b001, chain_data, COARSE)
    assert fit.delta == delta
    assert fit.lpl == pytest.approx(score, rel=1e-10)
    assert len(fit.times) == chain_data.shape[0]


def test_fit_node_own_parent(chain_data):
    with pytest.raises(ValueError):
        fit_node(NodeSpec(parents=(1,)), chain_data, 1, cfg=COARSE)


def test_lag_augment_improves_alternating_series(ar_data):
    spec = ModelSpec.from_parents([()])
    lagged = lag_augment(spec, 0)
    assert lagged.nodes[0].lag == 1
    with pytest.raises(ValueError):
        lag_augment(spec, 0, lag=2)
    plain_fit = fit_node(spec, ar_data, 0, cfg=COARSE, start=1)
    lagged_fit = fit_node(lagged, ar_data, 0, cfg=COARSE)
    np.testing.assert_array_equal(plain_fit.times, lagged_fit.times)
    assert lagged_fit.lpl > plain_fit.lpl + 10.0


def test_log_transform_adds_jacobian(rng):
    positive = np.exp(rng.normal(size=(80, 1)))
    logged = fit_node(NodeSpec(transform="log", delta=0.9), positive, 0, cfg=COARSE)
    direct = fit_node(NodeSpec(delta=0.9), np.log(positive), 0, cfg=COARSE)
    np.testing.assert_allclose(
        logged.log_densities, direct.log_densities - np.log(positive[:, 0])
    )
    with pytest.raises(DataError):
        fit_node(NodeSpec(transform="log"), positive - 2.0, 0, cfg=COARSE)


def test_transformed_predictive():
    pred = PredictiveSummary(f=0.2, Q=0.5, dof=6.0, e=0.0, log_density=0.0)
    assert transformed_predictive(pred, 1.3, "identity") == log_predictive_density(pred, 1.3)
    assert transformed_predictive(pred, 1.3) == pytest.approx(
        log_predictive_density(pred, np.log(1.3)) - np.log(1.3)
    )
    for y in (0.0, -1.0):
        with pytest.raises(ValueError):
            transformed_predictive(pred, y)
    with pytest.raises(ValueError):
        transformed_predictive(pred, 1.0, "sqrt")


def test_heteroscedastic_predictive(chain_data):
    run = fit_node(CHAIN, chain_data, 1, cfg=COARSE).run
    same = heteroscedastic_predictive(run, 0.0)
    np.testing.assert_allclose(same.log_densities, run.log_densities, rtol=1e-10)
    scaled = heteroscedastic_predictive(run, 2.0)
    factors = np.maximum(run.forecasts**2, 1e-8)
    np.testing.assert_allclose(scaled.scales, run.scales * factors)
    assert scaled.lpl == pytest.approx(scaled.log_densities.sum())
    np.testing.assert_array_equal(scaled.forecasts, run.forecasts)


def test_detect_change_points_threshold(break_data):
    spec = ModelSpec.from_parents([(), (0,)])
    null = spec.with_node(1, parents=())
    assert detect_change_points(spec, null, break_data, 1, threshold=0, cfg=COARSE) == []
    with pytest.raises(ValueError):
        detect_change_points(spec, null, break_data, 1, threshold=-1.0, cfg=COARSE)
    with pytest.raises(ValueError):
        detect_change_points(spec, null, break_data, 1, mode="sometimes", cfg=COARSE)


def test_detect_change_points_finds_break(break_data):
    spec = ModelSpec.from_parents([(), (0,)]).with_node(1, delta=0.95)
    null = spec.with_node(1, parents=())
    flags = detect_change_points(spec, null, break_data, 1, threshold=0.3, cfg=COARSE)
    assert any(60 <= t <= 70 for t in flags)
    assert not any(20 <= t < 60 for t in flags)


def test_change_points_raise_lpl(break_data):
    spec = ModelSpec.from_parents([(), (0,)]).with_node(1, delta=0.95)
    with_break = apply_change_points(spec, 1, [60], inflation=100.0)
    assert with_break.nodes[1].change_points == (60,)
    assert with_break.nodes[1].inflation == 100.0
    before = fit_node(spec, break_data, 1, cfg=COARSE)
    after = fit_node(with_break, break_data, 1, cfg=COARSE)
    assert after.lpl > before.lpl


def test_apply_change_points_default_inflation():
    spec = apply_change_points(CHAIN, 2, [9, 4])
    assert spec.nodes[2].change_points == (4, 9)
    assert spec.nodes[2].inflation > 1.0


def test_global_monitor(chain_data):
    other = CHAIN.with_node(2, parents=())
    fits_a = [fit_node(CHAIN, chain_data, r, cfg=COARSE) for r in range(3)]
    fits_b = [fit_node(other, chain_data, r, cfg=COARSE) for r in range(3)]
    series = global_monitor(fits_a, fits_b)
    assert series.nodes == (2,)
    assert series.final == pytest.approx(fits_a[2].lpl - fits_b[2].lpl)
    assert series.final > 0
    table = series.to_table()
    assert table.colnames == ["time", "log_bf", "cumulative"]
    assert table["time"][0] == 1


def test_global_monitor_mismatch(chain_data):
    fits = {r: fit_node(CHAIN, chain_data, r, cfg=COARSE) for r in range(3)}
    lagged = lag_augment(CHAIN, 2)
    with pytest.raises(DataError):
        global_monitor(fits, {**fits, 2: fit_node(lagged, chain_data, 2, cfg=COARSE)})
    with pytest.raises(DataError):
        global_monitor(fits, {0: fits[0]})
    with pytest.raises(DataError):
        global_monitor({}, {})


def test_bayes_factor_series_empty():
    series = BayesFactorSeries(per_step=np.array([]), times=np.array([], dtype=int))
    assert series.final == 0.0


def test_parent_child_monitor(chain_data):
    series = parent_child_monitor(2, 1, chain_data, CHAIN, cfg=COARSE)
    assert series.nodes == (2,)
    assert series.final > 0
    assert len(series.per_step) == chain_data.shape[0]
    with pytest.raises(ValueError):
        parent_child_monitor(2, 0, chain_data, CHAIN, cfg=COARSE)


def test_acf_constant_series():
    np.testing.assert_array_equal(acf(np.ones(10), 2), [1.0, 0.0, 0.0])


def test_node_monitor_flags_autocorrelation(ar_data):
    # a static mean model cannot follow the alternating series
    fit = fit_node(NodeSpec(delta=1.0), ar_data, 0, cfg=COARSE)
    report = node_monitor(fit, burn_in=10)
    assert "autocorrelation" in report.flags
    assert report.acf[0] == 1.0
    assert report.acf[1] < -report.band
    assert report.band == pytest.approx(2.0 / np.sqrt(len(ar_data) - 10))
    assert report.to_table().colnames == ["time", "std_error", "cusum"]
    assert set(report.to_dict()) == {
        "acf",
        "band",
        "skewness",
        "kurtosis",
        "exceedances",
        "lags",
        "flags",
    }
    assert 1 in report.lags
    assert report.exceedances == len(report.lags)
    assert report.to_dict()["lags"] == list(report.lags)
    assert all(abs(report.acf[k]) > report.band for k in report.lags)


def test_node_monitor_quiet_on_clean_series():
    clean = 0
    for seed in range(20):
        data = np.random.default_rng(seed).normal(loc=3.0, size=(300, 1))
        report = node_monitor(fit_node(NodeSpec(delta=1.0), data, 0, cfg=COARSE), burn_in=10)
        clean += report.flags == []
    # each check has a small false alarm rate of its own
    assert clean >= 14


def test_node_monitor_flags_drift(rng):
    data = rng.normal(size=(300, 1))
    data[100:] += 3.0
    report = node_monitor(fit_node(NodeSpec(delta=1.0), data, 0, cfg=COARSE), burn_in=10)
    assert "drift" in report.flags


def test_node_monitor_flags_heteroscedasticity(rng):
    T = 300
    x0 = rng.uniform(1.0, 10.0, size=T)
    # noise standard deviation proportional to the level
    x1 = 2.0 * x0 + 0.5 * x0 * rng.normal(size=T)
    spec = ModelSpec.from_parents([(), (0,)]).with_node(1, delta=1.0)
    report = node_monitor(fit_node(spec, np.column_stack([x0, x1]), 1, cfg=COARSE), burn_in=10)
    assert "heteroscedasticity" in report.flags


def test_node_monitor_flags_non_normality(rng):
    data = rng.exponential(size=(300, 1))
    report = node_monitor(fit_node(NodeSpec(delta=1.0), data, 0, cfg=COARSE), burn_in=10)
    assert "non-normality" in report.flags
    assert report.skewness > 0.5


def test_global_monitor_is_antisymmetric(chain_data):
    other = CHAIN.with_node(1, parents=()).with_node(2, parents=(0,))
    fits_a = {r: fit_node(CHAIN, chain_data, r, cfg=COARSE) for r in range(3)}
    fits_b = {r: fit_node(other, chain_data, r, cfg=COARSE) for r in range(3)}
    forward = global_monitor(fits_a, fits_b)
    backward = global_monitor(fits_b, fits_a)
    assert forward.nodes == backward.nodes == (1, 2)
    np.testing.assert_array_equal(backward.per_step, -forward.per_step)
    assert backward.final == -forward.final


def test_parent_child_monitor_matches_fixed_delta_scores(chain_data):
    single = ScoreConfig(delta_start=0.9, delta_end=0.9, delta_step=0.05)
    spec = CHAIN.with_node(2, delta=0.9)
    series = parent_child_monitor(2, 1, chain_data, spec, cfg=COARSE)
    with_parent, _ = node_best_score(2, [1], chain_data, single)
    without_parent, _ = node_best_score(2, [], chain_data, single)
    assert series.final == pytest.approx(with_parent - without_parent, rel=1e-10, abs=1e-8)
