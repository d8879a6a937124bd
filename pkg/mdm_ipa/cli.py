"""
The ``mdm-ipa`` command line tool.

Sub-commands::

    mdm-ipa simulate --preset network11 --seed 1 --out sims/
    mdm-ipa score sims/rep001.csv --out rep001.scores
    mdm-ipa search rep001.scores --engine both --out rep001
    mdm-ipa diagnose sims/rep001.csv --dag rep001.edges --embellish lag1,changepoints
    mdm-ipa evaluate --true truth.edges est/*.edges --out metrics
    mdm-ipa study --preset network11 --reps 50 --out study/

Every option can also be given in the ``[run]`` section of the ``--config``
file (``max_parents = 3``); command line flags win over the file and the file
wins over the package configuration.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from astropy.table import Table

from mdm_ipa import __version__, log
from mdm_ipa.analysis.studies import run_study, selection_study, summarize_replications
from mdm_ipa.diagnostics.embellish import (
    ModelSpec,
    apply_change_points,
    detect_change_points,
    fit_node,
    lag_augment,
)
from mdm_ipa.diagnostics.monitors import global_monitor, node_monitor, parent_child_monitor
from mdm_ipa.io import file_tools
from mdm_ipa.metrics.group import fdr_significant, group_prevalence
from mdm_ipa.metrics.metrics import c_sensitivity, confusion, d_accuracy
from mdm_ipa.scoring.local_scores import ScoreConfig, compute_score_table
from mdm_ipa.search.dp import dp_exact_search
from mdm_ipa.search.ip import SearchOptions, ip_search
from mdm_ipa.simulation.synthgen import PRESETS, simulate_mdm, write_dataset
from mdm_ipa.util.config import load_config
from mdm_ipa.util.exceptions import (
    DataError,
    MDMError,
    NumericalError,
    ParseError,
    ResourceLimitError,
    SearchLimitReached,
)
from mdm_ipa.util.validation import validate

__all__ = ["main", "build_parser", "EXIT_CODES"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_RESOURCE = 4
EXIT_NUMERICAL = 5

# checked in order, subclasses first
EXIT_CODES = [
    (ParseError, EXIT_PARSE),
    (ResourceLimitError, EXIT_RESOURCE),
    (NumericalError, EXIT_NUMERICAL),
    (MDMError, EXIT_ERROR),
]

EMBELLISHMENTS = ("lag1", "changepoints", "log")

# fallbacks for options that neither the command line nor the [run] section set
RUN_DEFAULTS = {
    "seed": 0,
    "engine": "ip",
    "alpha": 0.05,
    "level": 0.95,
    "embellish": "",
}


def _run_option(args, config, name: str, convert=str):
    """The value of an option: flag, then ``[run]`` section, then fallback."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    if config.has_section("run") and name in config["run"]:
        return convert(config["run"][name])
    return RUN_DEFAULTS.get(name)


def _optional_int(text):
    return None if text in ("", "none", "None") else int(text)


def _score_config(args, config) -> ScoreConfig:
    return ScoreConfig.from_config(
        config,
        delta_start=_run_option(args, config, "delta_start", float),
        delta_end=_run_option(args, config, "delta_end", float),
        delta_step=_run_option(args, config, "delta_step", float),
        max_parents=_run_option(args, config, "max_parents", _optional_int),
    )


def _search_options(args, config) -> SearchOptions:
    return SearchOptions.from_config(
        config,
        max_branch_nodes=_run_option(args, config, "max_branch_nodes", int),
        time_limit=_run_option(args, config, "time_limit", float),
    )


def _output_dir(path) -> Path:
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def cmd_simulate(args, config) -> int:
    preset = _run_option(args, config, "preset")
    if preset not in PRESETS:
        raise _UsageError(f"Unknown preset {preset!r}, choose from {sorted(PRESETS)}.")
    kwargs = {"seed": _run_option(args, config, "seed", int)}
    for name, convert in [("T", int), ("reps", int)]:
        value = _run_option(args, config, name, convert)
        if value is not None:
            kwargs[name] = value
    wstar = _run_option(args, config, "wstar", float)
    if wstar is not None:
        if preset != "chain3":
            raise _UsageError("--wstar applies to the chain3 preset only.")
        kwargs["wstar_level"] = wstar
    spec = PRESETS[preset](**kwargs)
    replications = simulate_mdm(spec)
    files = write_dataset(spec, replications, _output_dir(args.out))
    print(f"Wrote {len(files)} replications of {spec.T} x {spec.n} to {args.out}")
    return EXIT_OK


def cmd_score(args, config) -> int:
    for this_warning in validate(args.input):
        log.warning(f"{args.input}: {this_warning}")
    data, _ = file_tools.read_series(args.input)
    cfg = _score_config(args, config)
    if args.prune:
        cfg = replace(cfg, prune=True)
    table = compute_score_table(data, cfg)
    file_tools.write_scores(table, args.out)
    print(f"Wrote {len(table)} scores of {table.n} nodes to {args.out}")
    return EXIT_OK


def _write_search_outputs(result, table, prefix: Path):
    file_tools.write_edge_list(result.dag, prefix.with_suffix(".edges"))
    file_tools.write_dot(result.dag, prefix.with_suffix(".dot"))
    file_tools.write_json(result.to_dict(table), prefix.with_suffix(".json"))


def cmd_search(args, config) -> int:
    table = file_tools.read_scores(args.scores)
    engine = _run_option(args, config, "engine")
    opts = _search_options(args, config)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    if engine not in ("dp", "ip", "both"):
        raise _UsageError(f"Unknown engine {engine!r}.")
    results = {}
    if engine in ("dp", "both"):
        results["dp"] = dp_exact_search(table)
    if engine in ("ip", "both"):
        try:
            results["ip"] = ip_search(table, opts)
        except SearchLimitReached as err:
            log.warning(f"{err} Writing the best network found so far.")
            _write_search_outputs(err.result, table, prefix)
            raise
    if engine == "both" and results["dp"].score != results["ip"].score:
        raise NumericalError(
            "Search engines disagree on the optimal score.",
            report={"dp": results["dp"].score, "ip": results["ip"].score},
        )
    result = results["ip"] if "ip" in results else results["dp"]
    _write_search_outputs(result, table, prefix)
    print(f"Optimal score {result.score!r} ({result.engine})")
    print(result.dag.to_edge_list())
    return EXIT_OK


def _parse_embellishments(text: str) -> list:
    names = [this.strip() for this in text.split(",") if this.strip()]
    for name in names:
        if name not in EMBELLISHMENTS:
            raise _UsageError(f"Unknown embellishment {name!r}, choose from {EMBELLISHMENTS}.")
    return names


def _embellish_node(spec, data, r, names, threshold, cfg) -> tuple:
    """Apply the requested embellishments to node ``r`` in turn."""
    applied = {}
    for name in names:
        if name == "lag1":
            spec = lag_augment(spec, r)
            applied[name] = True
        elif name == "log":
            if np.any(data[:, r] <= 0):
                log.warning(f"Node {r + 1} has non-positive values, log transform skipped.")
                continue
            spec = spec.with_node(r, transform="log")
            applied[name] = True
        elif name == "changepoints":
            null_spec = spec.with_node(r, parents=())
            times = detect_change_points(spec, null_spec, data, r, threshold=threshold, cfg=cfg)
            spec = apply_change_points(spec, r, times)
            applied[name] = [t + 1 for t in times]
    return spec, applied


def cmd_diagnose(args, config) -> int:
    data, _ = file_tools.read_series(args.input)
    n = data.shape[1]
    dag = file_tools.read_edge_list(args.dag, n=n)
    if dag.n != n:
        raise DataError(f"Network has {dag.n} nodes, data have {n}.")
    if args.node is not None and not (1 <= args.node <= n):
        raise DataError(f"Node {args.node} is outside 1..{n}.")
    nodes = [args.node - 1] if args.node is not None else list(range(n))
    names = _parse_embellishments(_run_option(args, config, "embellish"))
    threshold = _run_option(args, config, "threshold", float)
    cfg = _score_config(args, config)
    out = _output_dir(args.out)

    spec = ModelSpec.from_dag(dag)
    embellished = spec
    report = {}
    for r in nodes:
        fit = fit_node(spec, data, r, cfg=cfg)
        monitor = node_monitor(fit)
        file_tools.write_table(monitor.to_table(), out / f"node{r + 1}_errors.csv")
        node_report = {"delta": fit.delta, "lpl": fit.lpl, "monitor": monitor.to_dict()}
        for parent in dag.parents_of(r):
            series = parent_child_monitor(r, parent, data, spec, cfg)
            file_tools.write_table(series.to_table(), out / f"node{r + 1}_parent{parent + 1}.csv")
            node_report.setdefault("parent_log_bf", {})[str(parent + 1)] = series.final
        if names:
            embellished, applied = _embellish_node(
                embellished, data, r, names, threshold, cfg
            )
            start = embellished.node(r).lag
            before = fit_node(spec, data, r, cfg=cfg, start=start)
            after = fit_node(embellished, data, r, cfg=cfg, start=start)
            node_report["embellished"] = {
                "applied": applied,
                "delta": after.delta,
                "lpl": after.lpl,
                "lpl_change": after.lpl - before.lpl,
                "monitor": node_monitor(after).to_dict(),
            }
            bf = global_monitor({r: after}, {r: before})
            file_tools.write_table(bf.to_table(), out / f"node{r + 1}_embellished_bf.csv")
        report[str(r + 1)] = node_report
        flags = ", ".join(monitor.flags) or "none"
        print(f"Node {r + 1}: delta={fit.delta:.2f} flags: {flags}")
    file_tools.write_json(
        {"nodes": report, "model": embellished.to_dict()}, out / "diagnose.json"
    )
    return EXIT_OK


def _estimate_files(paths) -> list:
    files = []
    for this_path in map(Path, paths):
        if this_path.is_dir():
            files.extend(sorted(this_path.glob("*.edges")))
        else:
            files.append(this_path)
    if not files:
        raise DataError("No estimated networks given.")
    return files


def cmd_evaluate(args, config) -> int:
    files = _estimate_files(args.estimates)
    estimates = [file_tools.read_edge_list(this_file) for this_file in files]
    out = _output_dir(args.out)
    if args.group:
        prev = group_prevalence(estimates)
        mask = fdr_significant(prev, alpha=_run_option(args, config, "alpha", float))
        names = [f"node{j + 1}" for j in range(prev.phat.shape[1])]
        file_tools.write_table(Table(prev.phat, names=names), out / "prevalence.csv")
        significant = [[int(i) + 1, int(j) + 1] for i, j in zip(*np.nonzero(mask))]
        file_tools.write_json(
            {"subjects": prev.subjects, "pi": prev.pi, "significant": significant},
            out / "group.json",
        )
        print(f"{len(significant)} edges significant over {prev.subjects} subjects")
        return EXIT_OK
    if args.true is None:
        raise _UsageError("--true is required unless --group is given.")
    truth = file_tools.read_edge_list(args.true)
    rows = []
    for this_file, estimate in zip(files, estimates):
        counts = confusion(truth, estimate)
        rows.append(
            {
                "file": this_file.name,
                "TP": counts.TP,
                "FP": counts.FP,
                "TN": counts.TN,
                "FN": counts.FN,
                **c_sensitivity(counts),
                "d_accuracy": d_accuracy(truth, estimate),
            }
        )
    file_tools.write_table(Table(rows=rows), out / "metrics.csv")
    summary = summarize_replications(rows)
    file_tools.write_json(summary, out / "summary.json")
    for name, values in summary.items():
        print(f"{name}: {values['mean']:.3f} (se {values['std_error']:.3f})")
    return EXIT_OK


def cmd_study(args, config) -> int:
    preset = _run_option(args, config, "preset")
    seed = _run_option(args, config, "seed", int)
    reps = _run_option(args, config, "reps", int)
    cfg = _score_config(args, config)
    out = _output_dir(args.out)
    if preset == "chain3":
        kwargs = {"seed": seed, "cfg": cfg}
        if reps is not None:
            kwargs["reps"] = reps
        table = selection_study(**kwargs)
        file_tools.write_table(table, out / "selection.csv")
        table.pprint(max_lines=-1)
        return EXIT_OK
    if preset != "network11":
        raise _UsageError(f"Unknown preset {preset!r}, choose from {sorted(PRESETS)}.")
    kwargs = {"seed": seed}
    if reps is not None:
        kwargs["reps"] = reps
    spec = PRESETS[preset](**kwargs)
    rows = run_study(
        spec,
        cfg,
        _search_options(args, config),
        engine=_run_option(args, config, "engine"),
        level=_run_option(args, config, "level", float),
    )
    file_tools.write_table(rows, out / "replications.csv")
    summary = summarize_replications(rows)
    file_tools.write_json(summary, out / "summary.json")
    for name, values in summary.items():
        print(f"{name}: {values['mean']:.3f} (se {values['std_error']:.3f})")
    return EXIT_OK


class _UsageError(MDMError):
    pass


def _add_scoring_options(parser):
    parser.add_argument(
        "--max-parents", dest="max_parents", type=int, help="Largest parent set scored."
    )
    parser.add_argument(
        "--delta-start", dest="delta_start", type=float, help="Smallest discount factor."
    )
    parser.add_argument(
        "--delta-end", dest="delta_end", type=float, help="Largest discount factor."
    )
    parser.add_argument(
        "--delta-step", dest="delta_step", type=float, help="Discount factor grid step."
    )


def _add_search_options(parser):
    parser.add_argument(
        "--engine", choices=["dp", "ip", "both"], help="Search engine (default ip)."
    )
    parser.add_argument(
        "--max-branch-nodes",
        dest="max_branch_nodes",
        type=int,
        help="Branch-and-bound node limit.",
    )
    parser.add_argument(
        "--time-limit", dest="time_limit", type=float, help="Search time limit in seconds."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        "mdm-ipa",
        description="Learn optimal multiregression dynamic model networks from time series.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--config", type=Path, help="INI file with a [run] section and package sections."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages.")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Simulate a synthetic dataset.")
    simulate.add_argument("--preset", help=f"One of {sorted(PRESETS)}.")
    simulate.add_argument("--T", dest="T", type=int, help="Series length.")
    simulate.add_argument("--reps", type=int, help="Number of replications.")
    simulate.add_argument("--wstar", type=float, help="State noise level (chain3).")
    simulate.add_argument("--seed", type=int, help="Random seed (default 0).")
    simulate.add_argument("--out", required=True, help="Output directory.")
    simulate.set_defaults(func=cmd_simulate)

    score = commands.add_parser("score", help="Compute the local score file of a dataset.")
    score.add_argument("input", help="Time series CSV file.")
    score.add_argument("--out", required=True, help="Score file to write.")
    score.add_argument("--prune", action="store_true", help="Drop parent sets beaten by a subset.")
    _add_scoring_options(score)
    score.set_defaults(func=cmd_score)

    search = commands.add_parser("search", help="Find the optimal network of a score file.")
    search.add_argument("scores", help="Score file.")
    search.add_argument("--out", required=True, help="Output prefix for .edges, .dot and .json.")
    _add_search_options(search)
    search.set_defaults(func=cmd_search)

    diagnose = commands.add_parser("diagnose", help="Monitor and embellish a fitted network.")
    diagnose.add_argument("input", help="Time series CSV file.")
    diagnose.add_argument("--dag", required=True, help="Edge list of the network.")
    diagnose.add_argument("--node", type=int, help="Only this node (1-based).")
    diagnose.add_argument("--embellish", help=f"Comma separated, from {','.join(EMBELLISHMENTS)}.")
    diagnose.add_argument("--threshold", type=float, help="Change point Bayes factor threshold.")
    diagnose.add_argument("--out", required=True, help="Output directory.")
    _add_scoring_options(diagnose)
    diagnose.set_defaults(func=cmd_diagnose)

    evaluate = commands.add_parser("evaluate", help="Compare estimated networks with the truth.")
    evaluate.add_argument("estimates", nargs="+", help="Edge list files or directories of them.")
    evaluate.add_argument("--true", help="Edge list of the true network.")
    evaluate.add_argument(
        "--group", action="store_true", help="Edge prevalence and FDR significance."
    )
    evaluate.add_argument("--alpha", type=float, help="False discovery rate (default 0.05).")
    evaluate.add_argument("--out", required=True, help="Output directory.")
    evaluate.set_defaults(func=cmd_evaluate)

    study = commands.add_parser("study", help="Run a replication study end to end.")
    study.add_argument("--preset", help=f"One of {sorted(PRESETS)}.")
    study.add_argument("--reps", type=int, help="Number of replications.")
    study.add_argument("--seed", type=int, help="Random seed (default 0).")
    study.add_argument("--level", type=float, help="Interval probability (default 0.95).")
    study.add_argument("--out", required=True, help="Output directory.")
    _add_scoring_options(study)
    _add_search_options(study)
    study.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    """Run the command line tool and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code
    if args.verbose:
        log.setLevel("DEBUG")
    try:
        config = load_config(extra_file=args.config)
        return args.func(args, config)
    except _UsageError as err:
        parser.print_usage(sys.stderr)
        print(f"mdm-ipa: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except MDMError as err:
        log.error(str(err))
        for error_class, code in EXIT_CODES:
            if isinstance(err, error_class):
                return code
    except (OSError, ValueError) as err:
        log.error(str(err))
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
