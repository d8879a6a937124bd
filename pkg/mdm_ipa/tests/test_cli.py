import numpy as np
import pytest

from mdm_ipa.cli import build_parser, main
from mdm_ipa.io.file_tools import (
    read_edge_list,
    read_json,
    read_scores,
    write_edge_list,
    write_series,
)
from mdm_ipa.search.dag import Dag

GRID = ["--delta-start", "0.8", "--delta-step", "0.05"]
CHAIN = Dag.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def chain_csv(tmp_path, chain_data):
    return write_series(tmp_path / "chain.csv", chain_data)


@pytest.fixture
def chain_scores(tmp_path, chain_csv):
    scores = tmp_path / "chain.scores"
    assert main(["score", str(chain_csv), "--out", str(scores), *GRID]) == 0
    return scores


def test_help(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_missing_command():
    assert main([]) == 2


def test_parser_defaults():
    args = build_parser().parse_args(["search", "x.scores", "--out", "x"])
    assert args.engine is None
    assert args.func.__name__ == "cmd_search"


def test_simulate(tmp_path):
    out = tmp_path / "sims"
    code = main(["simulate", "--preset", "chain3", "--T", "30", "--reps", "2",
                 "--wstar", "0.01", "--seed", "3", "--out", str(out)])  # fmt: skip
    assert code == 0
    assert sorted(this.name for this in out.iterdir()) == [
        "manifest.json",
        "rep001.csv",
        "rep002.csv",
    ]
    manifest = read_json(out / "manifest.json")
    assert manifest["spec"]["seed"] == 3
    assert manifest["spec"]["T"] == 30


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--preset", "network99"],
        ["simulate", "--preset", "network11", "--wstar", "0.01"],
        ["simulate"],
    ],
)
def test_simulate_usage_errors(tmp_path, argv):
    assert main([*argv, "--out", str(tmp_path / "sims")]) == 2


def test_score(chain_scores):
    table = read_scores(chain_scores)
    assert table.n == 3
    assert len(table) == 12
    assert set(np.unique(table["delta"])) <= {0.8, 0.85, 0.9, 0.95, 1.0}


def test_score_prune(tmp_path, chain_csv, chain_scores):
    pruned = tmp_path / "pruned.scores"
    assert main(["score", str(chain_csv), "--out", str(pruned), "--prune", *GRID]) == 0
    assert len(read_scores(pruned)) <= len(read_scores(chain_scores))


def test_score_bad_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1.0,2.0\n3.0,oops\n")
    assert main(["score", str(bad), "--out", str(tmp_path / "x.scores")]) == 3


def test_score_too_many_nodes(tmp_path, rng):
    wide = write_series(tmp_path / "wide.csv", rng.normal(size=(40, 15)))
    assert main(["score", str(wide), "--out", str(tmp_path / "x.scores"), *GRID]) == 4


def test_search_both_engines(tmp_path, chain_scores):
    prefix = tmp_path / "est" / "chain"
    assert main(["search", str(chain_scores), "--engine", "both", "--out", str(prefix)]) == 0
    dag = read_edge_list(prefix.with_suffix(".edges"))
    assert dag.skeleton() >= CHAIN.skeleton()
    report = read_json(prefix.with_suffix(".json"))
    assert report["engine"] == "ip"
    assert report["optimal"] is True
    assert prefix.with_suffix(".dot").read_text().startswith("digraph")


def test_search_limit_writes_incumbent(tmp_path, chain_scores):
    prefix = tmp_path / "limited"
    code = main(["search", str(chain_scores), "--max-branch-nodes", "0", "--out", str(prefix)])
    assert code == 4
    assert read_edge_list(prefix.with_suffix(".edges")) == Dag.empty(3)
    assert read_json(prefix.with_suffix(".json"))["optimal"] is False


def test_search_engine_from_config(tmp_path, chain_scores):
    config = tmp_path / "run.cfg"
    config.write_text("[run]\nengine = dp\n")
    prefix = tmp_path / "dp"
    argv = ["--config", str(config), "search", str(chain_scores), "--out", str(prefix)]
    assert main(argv) == 0
    assert read_json(prefix.with_suffix(".json"))["engine"] == "dp"
    # the flag wins over the file
    argv = [*argv[:-1], str(tmp_path / "ip"), "--engine", "ip"]
    assert main(argv) == 0
    assert read_json((tmp_path / "ip").with_suffix(".json"))["engine"] == "ip"


def test_missing_config_file(tmp_path, chain_scores):
    argv = ["--config", str(tmp_path / "nope.cfg"), "search", str(chain_scores)]
    assert main([*argv, "--out", str(tmp_path / "x")]) == 1


def test_diagnose(tmp_path, chain_csv):
    dag_file = write_edge_list(CHAIN, tmp_path / "chain.edges")
    out = tmp_path / "diag"
    code = main(["diagnose", str(chain_csv), "--dag", str(dag_file), "--node", "2",
                 "--embellish", "lag1,changepoints", "--out", str(out), *GRID])  # fmt: skip
    assert code == 0
    for name in ["node2_errors.csv", "node2_parent1.csv", "node2_embellished_bf.csv"]:
        assert (out / name).is_file()
    report = read_json(out / "diagnose.json")
    node = report["nodes"]["2"]
    assert set(node) >= {"delta", "lpl", "monitor", "parent_log_bf", "embellished"}
    assert node["parent_log_bf"]["1"] > 0
    assert node["embellished"]["applied"]["lag1"] is True
    assert isinstance(node["embellished"]["applied"]["changepoints"], list)
    assert report["model"]["2"]["lag"] == 1
    assert "1" not in report["nodes"]


def test_diagnose_all_nodes_skips_log_of_negative_data(tmp_path, chain_csv):
    dag_file = write_edge_list(CHAIN, tmp_path / "chain.edges")
    out = tmp_path / "diag"
    code = main(["diagnose", str(chain_csv), "--dag", str(dag_file), "--embellish", "log",
                 "--out", str(out), *GRID])  # fmt: skip
    assert code == 0
    report = read_json(out / "diagnose.json")
    assert set(report["nodes"]) == {"1", "2", "3"}
    assert report["nodes"]["1"]["embellished"]["applied"] == {}
    assert report["model"]["1"]["transform"] == "identity"


@pytest.mark.parametrize(
    "extra,code",
    [
        (["--embellish", "wavelets"], 2),
        (["--node", "4"], 1),
    ],
)
def test_diagnose_errors(tmp_path, chain_csv, extra, code):
    dag_file = write_edge_list(CHAIN, tmp_path / "chain.edges")
    argv = ["diagnose", str(chain_csv), "--dag", str(dag_file), "--out", str(tmp_path / "d")]
    assert main([*argv, *extra, *GRID]) == code


@pytest.fixture
def estimates(tmp_path):
    directory = tmp_path / "estimates"
    directory.mkdir()
    write_edge_list(CHAIN, directory / "rep1.edges")
    write_edge_list(Dag.from_edges(3, [(1, 0), (0, 2)]), directory / "rep2.edges")
    write_edge_list(Dag.empty(3), directory / "rep3.edges")
    return directory


def test_evaluate(tmp_path, estimates):
    truth = write_edge_list(CHAIN, tmp_path / "truth.edges")
    out = tmp_path / "metrics"
    assert main(["evaluate", str(estimates), "--true", str(truth), "--out", str(out)]) == 0
    summary = read_json(out / "summary.json")
    assert summary["Sens"]["mean"] == pytest.approx(0.5)
    assert summary["PPV"]["count"] == 2
    assert summary["PPV"]["skipped"] == 1
    lines = (out / "metrics.csv").read_text().splitlines()
    assert {"file", "TP", "FP", "TN", "FN", "Sens"} <= set(lines[0].split(","))
    assert len(lines) == 4


def test_evaluate_group(tmp_path, estimates):
    out = tmp_path / "group"
    code = main(["evaluate", str(estimates), "--group", "--alpha", "0.05", "--out", str(out)])
    assert code == 0
    report = read_json(out / "group.json")
    assert report["subjects"] == 3
    assert report["pi"] == pytest.approx(4 / 18)
    assert (out / "prevalence.csv").read_text().startswith("node1,node2,node3")


def test_evaluate_needs_truth(tmp_path, estimates):
    assert main(["evaluate", str(estimates), "--out", str(tmp_path / "m")]) == 2


def test_evaluate_no_estimates(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    truth = write_edge_list(CHAIN, tmp_path / "truth.edges")
    assert main(["evaluate", str(empty), "--true", str(truth), "--out", str(tmp_path / "m")]) == 1


def test_study_chain3(tmp_path):
    out = tmp_path / "study"
    assert main(["study", "--preset", "chain3", "--reps", "2", "--out", str(out),
                 "--delta-start", "0.9", "--delta-step", "0.1"]) == 0  # fmt: skip
    lines = (out / "selection.csv").read_text().splitlines()
    assert lines[0] == "T,wstar,reps,selected,gap_ratio"
    assert len(lines) == 7


def test_study_unknown_preset(tmp_path):
    assert main(["study", "--preset", "chain4", "--out", str(tmp_path / "s")]) == 2
