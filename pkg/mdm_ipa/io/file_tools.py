"""
Provides readers and writers for time series, score files, DAGs and reports.

Node indices are 1-based in every file and 0-based in memory.
"""

import json
from pathlib import Path

import numpy as np
from astropy.io import ascii
from astropy.table import Table

from mdm_ipa import log
from mdm_ipa.scoring.local_scores import ScoreTable
from mdm_ipa.search.dag import Dag
from mdm_ipa.util.exceptions import DataError, ParseError
from mdm_ipa.util.util import mask_to_parents, parents_to_mask

__all__ = [
    "read_series",
    "write_series",
    "read_scores",
    "write_scores",
    "read_edge_list",
    "write_edge_list",
    "write_dot",
    "write_json",
    "read_json",
    "write_table",
]


def read_series(filename: Path) -> tuple:
    """
    Read a time series CSV file.

    The first row holds the column names (one per node), every further row
    one time point.

    Parameters
    ----------
    filename : Path
        A CSV file.

    Returns
    -------
    data, names : np.ndarray, list of str
        The ``T x n`` data matrix and the column names.

    Raises
    ------
    ParseError
        If a cell is not a number; the 1-based line and column are reported.
    DataError
        If the file has no data rows or a cell is missing.
    """
    this_path = Path(filename)
    lines = this_path.read_text().splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("Series file has no header row.", line=1)
    try:
        table = ascii.read(lines, format="csv", guess=False)
    except (ascii.InconsistentTableError, ValueError) as err:
        raise ParseError(f"Cannot parse {this_path}: {err}")
    if len(table) == 0:
        raise DataError(f"Series file {this_path} has no data rows.")
    columns = []
    for j, name in enumerate(table.colnames):
        column = table[name]
        mask = np.ma.getmaskarray(column)
        if np.any(mask):
            row = int(np.flatnonzero(mask)[0])
            raise DataError(
                f"Missing value in column {name!r} at line {row + 2} of {this_path}."
            )
        try:
            values = np.asarray(column, dtype=float)
        except (TypeError, ValueError):
            for row, value in enumerate(column):
                try:
                    float(value)
                except (TypeError, ValueError):
                    raise ParseError(
                        f"Non-numeric value {value!r}.", line=row + 2, column=j + 1
                    )
            raise ParseError(f"Column {name!r} is not numeric.", column=j + 1)
        if not np.all(np.isfinite(values)):
            row = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DataError(
                f"Non-finite value in column {name!r} at line {row + 2} of {this_path}."
            )
        columns.append(values)
    log.debug(f"Read {len(table)} x {len(columns)} series from {this_path}")
    return np.column_stack(columns), list(table.colnames)


def write_series(filename: Path, data, names=None, overwrite: bool = True) -> Path:
    """
    Write a ``T x n`` data matrix as CSV with header ``node1..nodeN``.

    Returns
    -------
    filename : Path
    """
    data = np.asarray(data, dtype=float)
    if names is None:
        names = [f"node{j + 1}" for j in range(data.shape[1])]
    table = Table(data, names=names)
    table.write(filename, format="ascii.csv", overwrite=overwrite)
    return Path(filename)


def write_scores(table: ScoreTable, filename: Path) -> Path:
    """
    Write a score table in the plain-text score-file format.

    The first line is the number of nodes. Each node then has a header line
    ``r k`` giving the node and its number of entries, followed by ``k``
    lines ``score |S| parents... delta=<value>``, best entry first.

    Returns
    -------
    filename : Path
    """
    lines = [str(table.n)]
    for node in range(table.n):
        entries = table.for_node(node)
        order = sorted(
            range(len(entries)),
            key=lambda i: (-entries["score"][i], int(entries["parents"][i])),
        )
        lines.append(f"{node + 1} {len(entries)}")
        for i in order:
            parents = mask_to_parents(int(entries["parents"][i]))
            fields = [repr(float(entries["score"][i])), str(len(parents))]
            fields += [str(this + 1) for this in parents]
            fields.append(f"delta={float(entries['delta'][i])!r}")
            lines.append(" ".join(fields))
    Path(filename).write_text("\n".join(lines) + "\n")
    return Path(filename)


def _parse_int(token: str, line: int, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"Expected an integer {what}, got {token!r}.", line=line)


def _parse_float(token: str, line: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"Expected a number for {what}, got {token!r}.", line=line)
    if not np.isfinite(value):
        raise ParseError(f"Non-finite {what} {token!r}.", line=line)
    return value


def read_scores(filename: Path) -> ScoreTable:
    """
    Read a score file written by `write_scores`.

    Entries without a ``delta=`` token get a discount factor of 1.

    Parameters
    ----------
    filename : Path

    Returns
    -------
    table : ScoreTable

    Raises
    ------
    ParseError
        For malformed lines, duplicate entries or out-of-range parents, with
        the 1-based line number.
    """
    lines = [
        (i + 1, this_line.split())
        for i, this_line in enumerate(Path(filename).read_text().splitlines())
    ]
    lines = [(number, fields) for number, fields in lines if fields]
    if not lines:
        raise ParseError("Score file is empty.", line=1)
    number, fields = lines[0]
    if len(fields) != 1:
        raise ParseError("First line must hold the number of nodes.", line=number)
    n = _parse_int(fields[0], number, "node count")
    if n < 1:
        raise ParseError(f"Node count must be positive, got {n}.", line=number)

    entries = []
    seen_nodes = set()
    seen_entries = set()
    position = 1
    while position < len(lines):
        number, fields = lines[position]
        if len(fields) != 2:
            raise ParseError("Expected a node header 'r k'.", line=number)
        node = _parse_int(fields[0], number, "node") - 1
        count = _parse_int(fields[1], number, "entry count")
        if not (0 <= node < n):
            raise ParseError(f"Node {node + 1} is outside 1..{n}.", line=number)
        if node in seen_nodes:
            raise ParseError(f"Node {node + 1} appears twice.", line=number)
        if count < 0:
            raise ParseError(f"Negative entry count {count}.", line=number)
        seen_nodes.add(node)
        if position + 1 + count > len(lines):
            raise ParseError(
                f"Node {node + 1} announces {count} entries but the file ends.",
                line=number,
            )
        for number, fields in lines[position + 1 : position + 1 + count]:
            entries.append(_parse_entry(number, fields, node, n, seen_entries))
        position += count + 1

    try:
        return ScoreTable.from_entries(n, entries)
    except DataError as err:
        raise ParseError(str(err), line=lines[-1][0])


def _parse_entry(number: int, fields: list, node: int, n: int, seen: set) -> tuple:
    delta = 1.0
    if fields and fields[-1].startswith("delta="):
        delta = _parse_float(fields[-1][len("delta=") :], number, "delta")
        if not (0.0 < delta <= 1.0):
            raise ParseError(f"Discount factor {delta} outside (0, 1].", line=number)
        fields = fields[:-1]
    if len(fields) < 2:
        raise ParseError("Expected 'score |S| parents...'.", line=number)
    score = _parse_float(fields[0], number, "score")
    size = _parse_int(fields[1], number, "parent count")
    if len(fields) - 2 != size:
        raise ParseError(
            f"Parent count {size} does not match {len(fields) - 2} listed parents.",
            line=number,
        )
    parents = [_parse_int(this, number, "parent") - 1 for this in fields[2:]]
    for this_parent in parents:
        if not (0 <= this_parent < n) or this_parent == node:
            raise ParseError(
                f"Parent {this_parent + 1} of node {node + 1} is out of range.",
                line=number,
            )
    if len(set(parents)) != len(parents):
        raise ParseError("A parent is listed twice.", line=number)
    mask = parents_to_mask(parents)
    if (node, mask) in seen:
        raise ParseError(
            f"Duplicate entry for node {node + 1} with parents {fields[2:]}.",
            line=number,
        )
    seen.add((node, mask))
    return node, mask, score, delta


def write_edge_list(dag: Dag, filename: Path) -> Path:
    """Write a DAG as ``i -> j`` lines, preceded by a ``# nodes: n`` comment."""
    text = f"# nodes: {dag.n}\n"
    if dag.edges:
        text += dag.to_edge_list() + "\n"
    Path(filename).write_text(text)
    return Path(filename)


def read_edge_list(filename: Path, n: int = None) -> Dag:
    """
    Read a DAG from ``i -> j`` lines.

    Parameters
    ----------
    filename : Path
    n : int, optional
        The number of nodes, required unless the file has a ``# nodes: n`` line.

    Returns
    -------
    dag : Dag
    """
    edges = []
    for number, this_line in enumerate(Path(filename).read_text().splitlines(), 1):
        this_line = this_line.strip()
        if not this_line:
            continue
        if this_line.startswith("#"):
            key, _, value = this_line[1:].partition(":")
            if key.strip() == "nodes" and n is None:
                n = _parse_int(value.strip(), number, "node count")
            continue
        parent, arrow, child = this_line.partition("->")
        if not arrow:
            raise ParseError("Expected an edge 'i -> j'.", line=number)
        edges.append(
            (
                _parse_int(parent.strip(), number, "node") - 1,
                _parse_int(child.strip(), number, "node") - 1,
            )
        )
    if n is None:
        raise ParseError("Number of nodes is unknown, pass n or add '# nodes: n'.")
    return Dag.from_edges(n, edges)


def write_dot(dag: Dag, filename: Path, name: str = "mdm") -> Path:
    Path(filename).write_text(dag.to_dot(name=name) + "\n")
    return Path(filename)


def _to_builtin(value):
    """Convert numpy values for the JSON encoder; NaN becomes null."""
    if isinstance(value, np.ndarray):
        return [_to_builtin(this) for this in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return None if not np.isfinite(value) else float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(key): _to_builtin(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(this) for this in value]
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: dict, filename: Path) -> Path:
    """Write a report or manifest as indented JSON with sorted keys."""
    Path(filename).write_text(
        json.dumps(_to_builtin(data), indent=2, sort_keys=True) + "\n"
    )
    return Path(filename)


def read_json(filename: Path) -> dict:
    return json.loads(Path(filename).read_text())


def write_table(table: Table, filename: Path) -> Path:
    """Write a metrics or plot table as CSV."""
    table.write(filename, format="ascii.csv", overwrite=True)
    return Path(filename)
