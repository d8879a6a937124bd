import numpy as np
import pytest

from mdm_ipa.io.file_tools import read_json, read_series
from mdm_ipa.search.dag import Dag
from mdm_ipa.simulation.synthgen import (
    PRESETS,
    GeneratorSpec,
    eleven_node_spec,
    gen_three_node_chain,
    simulate_mdm,
    simulate_replication,
    three_node_chain_spec,
    write_dataset,
)
from mdm_ipa.util.exceptions import DataError


def single_node_spec(**kwargs):
    settings = dict(dag=Dag.empty(1), theta0=([0.0],), V=(1.0,), wstar=(0.0,), T=50)
    settings.update(kwargs)
    return GeneratorSpec(**settings)


def test_eleven_node_design():
    spec = eleven_node_spec()
    assert spec.n == 11
    assert spec.dag.parents_of(3) == (1, 7)
    np.testing.assert_array_equal(spec.theta0[3], [0.0, 0.25, 0.18])
    np.testing.assert_array_equal(spec.W(3), 0.05 * 0.005 * np.ones(3))
    assert (spec.T, spec.reps) == (230, 50)
    assert spec.to_dict()["edges"][0] == [2, 4]


def test_presets():
    assert set(PRESETS) == {"network11", "chain3"}
    chain = PRESETS["chain3"](T=200, wstar_level=0.01)
    assert chain.dag.edges == [(0, 1), (1, 2)]
    assert chain.V == (12.5, 6.3, 5.0)
    assert chain.reps == 100


def test_simulation_shapes():
    spec = three_node_chain_spec(T=40, reps=2)
    data, theta = simulate_replication(spec, 0)
    assert data.shape == (40, 3)
    assert [this.shape for this in theta] == [(40, 1), (40, 2), (40, 2)]


def test_simulation_is_reproducible():
    spec = three_node_chain_spec(T=30, reps=3, seed=7)
    first = simulate_mdm(spec, n_jobs=1)
    second = simulate_mdm(spec, n_jobs=2)
    for a, b in zip(first, second, strict=True):
        np.testing.assert_array_equal(a, b)
    # replications do not depend on the order they are simulated in
    np.testing.assert_array_equal(simulate_replication(spec, 2)[0], first[2])
    assert not np.array_equal(first[0], first[1])
    other = simulate_mdm(three_node_chain_spec(T=30, reps=1, seed=8), n_jobs=1)
    assert not np.array_equal(other[0], first[0])


def test_static_coefficients_are_recovered():
    spec = three_node_chain_spec(T=2000, wstar_level=0.0, reps=1, seed=3)
    data, theta = simulate_replication(spec, 0)
    np.testing.assert_array_equal(theta[1], np.broadcast_to([0.0, 0.3], (2000, 2)))
    slope = np.polyfit(data[:, 0], data[:, 1], 1)[0]
    assert abs(slope - 0.3) < 0.1


def test_coefficients_walk():
    spec = three_node_chain_spec(T=100, wstar_level=0.01, reps=1)
    _, theta = simulate_replication(spec, 0)
    assert np.all(np.diff(theta[1][:, 1]) != 0)


def test_jumps_shift_coefficients():
    spec = single_node_spec(jumps={0: ((20, 5.0),)})
    _, theta = simulate_replication(spec, 0)
    np.testing.assert_array_equal(theta[0][:20, 0], 0.0)
    np.testing.assert_array_equal(theta[0][20:, 0], 5.0)


def test_lag_coefficients():
    plain, _ = simulate_replication(single_node_spec(), 0)
    lagged, _ = simulate_replication(single_node_spec(lag_coefs=(0.5,)), 0)
    assert lagged[0, 0] == pytest.approx(plain[0, 0])
    np.testing.assert_allclose(lagged[1:, 0] - 0.5 * lagged[:-1, 0], plain[1:, 0], atol=1e-12)


def test_log_nodes():
    plain, _ = simulate_replication(single_node_spec(), 0)
    logged, _ = simulate_replication(single_node_spec(log_nodes=(0,)), 0)
    assert np.all(logged > 0)
    np.testing.assert_allclose(np.log(logged), plain)


@pytest.mark.parametrize(
    "changes",
    [
        {"theta0": ([0.0, 1.0],)},  # one coefficient too many
        {"V": (0.0,)},
        {"wstar": (-0.1,)},
        {"T": 0},
        {"reps": 0},
        {"V": (1.0, 1.0)},
    ],
)
def test_bad_generator_spec(changes):
    with pytest.raises(DataError):
        single_node_spec(**changes)


def test_cyclic_design():
    with pytest.raises(DataError):
        Dag.from_edges(2, [(0, 1), (1, 0)])


def test_write_dataset(tmp_path):
    spec = three_node_chain_spec(T=25, reps=2)
    replications = gen_three_node_chain(T=25, reps=2)
    files = write_dataset(spec, replications, tmp_path / "sim")
    assert [this.name for this in files] == ["rep001.csv", "rep002.csv"]
    data, names = read_series(files[1])
    np.testing.assert_allclose(data, replications[1], rtol=1e-12)
    assert names == ["node1", "node2", "node3"]
    manifest = read_json(tmp_path / "sim" / "manifest.json")
    assert manifest["files"] == ["rep001.csv", "rep002.csv"]
    assert manifest["spec"]["edges"] == [[1, 2], [2, 3]]
    assert manifest["spec"]["T"] == 25
