"""File formats: price and return tables, parameter files, configs, graph exports.

All matrices are written with 17 significant digits so that reading a file
back reproduces the doubles bit for bit.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, fields
from pathlib import Path

import networkx as nx
import numpy as np

from .ecme import GHHMM
from .gh import GhParams
from .hmm import ChainParams


class InputError(ValueError):
    """Malformed or missing input; maps to exit code 2 on the command line."""


def fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# tables


@dataclass
class ReturnsTable:
    """Log-returns in percent, one row per date, one column per asset."""

    dates: list
    names: list
    values: np.ndarray
    n_dropped: int = 0


def _read_rows(path):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path} is empty")
    return rows[0], rows[1:]


def _parse_date(text, row):
    try:
        return _dt.date.fromisoformat(text.strip())
    except ValueError:
        raise InputError(f"row {row}: cannot parse date {text!r}") from None


def ingest_prices(path) -> ReturnsTable:
    """Percent log-returns ``100 (log p_t - log p_{t-1})`` from a price CSV.

    The header is ``date,<name1>,...,<nameD>`` with ISO-8601 dates. Rows with
    any empty cell are dropped before differencing and counted in
    ``n_dropped``. Dates must be strictly increasing.
    """
    header, body = _read_rows(path)
    if len(header) < 2 or header[0].strip().lower() != "date":
        raise InputError("price file header must be 'date,<name1>,...'")
    names = [h.strip() for h in header[1:]]
    dates, prices = [], []
    dropped = 0
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"row {i}: expected {len(header)} cells, found {len(row)}")
        date = _parse_date(row[0], i)
        cells = [c.strip() for c in row[1:]]
        if any(c == "" or c.lower() in ("na", "nan") for c in cells):
            dropped += 1
            continue
        vals = []
        for j, c in enumerate(cells):
            try:
                v = float(c)
            except ValueError:
                raise InputError(f"row {i}, column {names[j]!r}: cannot parse {c!r}") from None
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"row {i}, column {names[j]!r}: prices must be positive")
            vals.append(v)
        dates.append(date)
        prices.append(vals)
    if len(prices) < 3:
        raise InputError("need at least 3 complete price rows")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise InputError("dates must be strictly increasing")
    logp = np.log(np.array(prices))
    return ReturnsTable(dates[1:], names, 100.0 * np.diff(logp, axis=0), dropped)


def write_table(path, index_name, index, columns, matrix):
    """CSV with a header row, an index column and a numeric matrix."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([index_name, *columns])
        for key, row in zip(index, matrix):
            w.writerow([str(key), *(fmt(x) for x in row)])


def read_table(path):
    """Inverse of :func:`write_table`; returns ``(index, columns, matrix)``."""
    header, body = _read_rows(path)
    index, values = [], []
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise InputError(f"{path}, row {i}: expected {len(header)} cells")
        index.append(row[0])
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError:
            raise InputError(f"{path}, row {i}: non-numeric cell") from None
    matrix = np.array(values, dtype=float).reshape(len(values), len(header) - 1)
    return index, header[1:], matrix


def read_returns(path) -> ReturnsTable:
    """Returns CSV as written by :func:`write_returns` or the simulator."""
    index, names, matrix = read_table(path)
    if matrix.shape[0] < 2:
        raise InputError("need at least 2 observations")
    if not np.all(np.isfinite(matrix)):
        raise InputError("returns contain non-finite values")
    return ReturnsTable(index, names, matrix)


def write_returns(path, table: ReturnsTable):
    write_table(path, "date", table.dates, table.names, table.values)


def write_states(path, index, columns: dict):
    """Integer state sequences, 1-based, one column per decoder."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["date", *columns])
        cols = [np.asarray(c) for c in columns.values()]
        for i, key in enumerate(index):
            w.writerow([str(key), *(int(c[i]) + 1 for c in cols)])


def read_states(path) -> dict:
    """Inverse of :func:`write_states`; returns 0-based arrays by column name."""
    index, names, matrix = read_table(path)
    return {n: matrix[:, j].astype(int) - 1 for j, n in enumerate(names)}


# ---------------------------------------------------------------------------
# parameter files


def _vec(x):
    return " ".join(fmt(v) for v in np.ravel(x))


def write_params(path, model: GHHMM, names=None):
    """Plain-text parameter file.

    Layout::

        regimegraph-params 1
        K <K>
        d <d>
        names <name1> ... <named>
        pi <K values>
        trans
        <K rows>
        state <k>
        lambda <value>
        chi <value>
        psi <value>
        mu <d values>
        sigma
        <d rows>
        theta
        <d rows>

    with one ``state`` block per state (1-based). Blank lines and lines
    starting with ``#`` are ignored on reading.
    """
    d = model.d
    names = list(names) if names is not None else [f"y{i + 1}" for i in range(d)]
    lines = ["regimegraph-params 1", f"K {model.K}", f"d {d}", "names " + " ".join(names),
             "pi " + _vec(model.chain.pi), "trans"]
    lines += [_vec(r) for r in model.chain.trans]
    for k, p in enumerate(model.emissions):
        lines += [f"state {k + 1}", f"lambda {fmt(p.lam)}", f"chi {fmt(p.chi)}",
                  f"psi {fmt(p.psi)}", "mu " + _vec(p.mu), "sigma"]
        lines += [_vec(r) for r in p.sigma]
        lines.append("theta")
        lines += [_vec(r) for r in p.theta]
    Path(path).write_text("\n".join(lines) + "\n")


def read_params(path):
    """Read a parameter file; returns ``(model, names)``."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def take(key):
        nonlocal pos
        if pos >= len(lines):
            raise InputError(f"{path}: unexpected end of file, expected {key!r}")
        parts = lines[pos].split()
        if parts[0] != key:
            raise InputError(f"{path}: expected {key!r}, found {parts[0]!r}")
        pos += 1
        return parts[1:]

    def floats(parts, n=None):
        try:
            out = np.array([float(x) for x in parts])
        except ValueError:
            raise InputError(f"{path}: non-numeric value near line {pos}") from None
        if n is not None and out.size != n:
            raise InputError(f"{path}: expected {n} values near line {pos}")
        return out

    def count(key):
        parts = take(key)
        try:
            n = int(parts[0])
        except (ValueError, IndexError):
            raise InputError(f"{path}: {key!r} needs a positive integer") from None
        if n < 1:
            raise InputError(f"{path}: {key!r} needs a positive integer")
        return n

    def matrix(key, n):
        nonlocal pos
        take(key)
        if pos + n > len(lines):
            raise InputError(f"{path}: {key!r} matrix is truncated")
        rows = [floats(lines[pos + i].split(), n) for i in range(n)]
        pos += n
        return np.array(rows)

    take("regimegraph-params")
    K = count("K")
    d = count("d")
    names = take("names")
    if len(names) != d:
        raise InputError(f"{path}: expected {d} names")
    pi = floats(take("pi"), K)
    trans = matrix("trans", K)
    emissions = []
    for k in range(K):
        take("state")
        lam = floats(take("lambda"), 1)[0]
        chi = floats(take("chi"), 1)[0]
        psi = floats(take("psi"), 1)[0]
        mu = floats(take("mu"), d)
        sigma = matrix("sigma", d)
        theta = matrix("theta", d)
        try:
            emissions.append(GhParams(mu, sigma, lam, chi, psi, theta=theta))
        except ValueError as exc:
            raise InputError(f"{path}, state {k + 1}: {exc}") from None
    try:
        chain = ChainParams(pi, trans)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    return GHHMM(tuple(emissions), chain), names


# ---------------------------------------------------------------------------
# graphs


def partial_correlations(theta) -> np.ndarray:
    """``-Theta_il / sqrt(Theta_ii Theta_ll)`` with a unit diagonal."""
    theta = np.asarray(theta, dtype=float)
    dg = np.sqrt(np.diag(theta))
    pc = -theta / np.outer(dg, dg)
    np.fill_diagonal(pc, 1.0)
    return pc


def state_graph(theta, names) -> nx.Graph:
    """Undirected graph with an edge wherever the precision entry is nonzero."""
    theta = np.asarray(theta)
    pc = partial_correlations(theta)
    g = nx.Graph()
    g.add_nodes_from(names)
    rows, cols = np.nonzero(np.triu(theta != 0, 1))
    for i, l in zip(rows, cols):
        g.add_edge(names[i], names[l], partial_correlation=float(pc[i, l]),
                   sign=int(np.sign(pc[i, l])))
    return g


def write_edge_list(path, model: GHHMM, names):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["state", "node_i", "node_l", "partial_correlation", "sign"])
        for k, p in enumerate(model.emissions):
            pc = partial_correlations(p.theta)
            rows, cols = np.nonzero(np.triu(p.theta != 0, 1))
            for i, l in zip(rows, cols):
                w.writerow([k + 1, names[i], names[l], fmt(pc[i, l]), int(np.sign(pc[i, l]))])


def read_edge_list(path) -> list:
    header, body = _read_rows(path)
    return [(int(r[0]) - 1, r[1], r[2], float(r[3]), int(r[4])) for r in body]


def write_centrality(path, model: GHHMM, names):
    """Degree and normalized degree centrality of every node in every state."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["state", "node", "degree", "degree_centrality"])
        for k, p in enumerate(model.emissions):
            g = state_graph(p.theta, names)
            cent = nx.degree_centrality(g)
            for n in names:
                w.writerow([k + 1, n, g.degree[n], fmt(cent[n])])


def _dot_id(name):
    return '"' + str(name).replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_dot(path, model: GHHMM, names):
    """One undirected DOT subgraph per state; edge labels carry partial correlations."""
    out = ["graph regimes {"]
    for k, p in enumerate(model.emissions):
        g = state_graph(p.theta, names)
        out.append(f"  subgraph cluster_state{k + 1} {{")
        out.append(f'    label="state {k + 1}";')
        for n in names:
            out.append(f"    {_dot_id(f's{k + 1}:{n}')} [label={_dot_id(n)}];")
        for a, b, data in g.edges(data=True):
            style = "solid" if data["sign"] >= 0 else "dashed"
            out.append(f"    {_dot_id(f's{k + 1}:{a}')} -- {_dot_id(f's{k + 1}:{b}')} "
                       f'[label="{data["partial_correlation"]:.3f}", style={style}];')
        out.append("  }")
    out.append("}")
    Path(path).write_text("\n".join(out) + "\n")


def write_graphml(path, model: GHHMM, names):
    """All state graphs in one GraphML file, nodes prefixed by state."""
    g = nx.Graph()
    for k, p in enumerate(model.emissions):
        sg = state_graph(p.theta, names)
        mapping = {n: f"s{k + 1}:{n}" for n in names}
        sg = nx.relabel_nodes(sg, mapping)
        nx.set_node_attributes(sg, k + 1, "state")
        nx.set_node_attributes(sg, {mapping[n]: n for n in names}, "name")
        g = nx.union(g, sg)
    nx.write_graphml(g, path)


def write_scores(path, scores):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["K", "rho", "loglik", "df_total", "bic", "mmdl"])
        for s in scores:
            w.writerow([s.K, fmt(s.rho), fmt(s.loglik), s.df_total, fmt(s.bic), fmt(s.mmdl)])


# ---------------------------------------------------------------------------
# configuration


def parse_int_range(text) -> list:
    """``"2"``, ``"1-3"`` or ``"1,2,4"`` to a sorted list of integers."""
    text = str(text).strip()
    try:
        if "," in text:
            vals = [int(x) for x in text.split(",") if x.strip()]
        elif "-" in text[1:]:
            lo, hi = text.split("-", 1)
            vals = list(range(int(lo), int(hi) + 1))
        else:
            vals = [int(text)]
    except ValueError:
        raise InputError(f"cannot parse integer range {text!r}") from None
    if not vals or min(vals) < 1:
        raise InputError(f"state counts must be positive: {text!r}")
    return sorted(set(vals))


def parse_rho_grid(text) -> np.ndarray:
    """Tuning grid from ``"0.1"``, ``"0.1,0.2"``, ``"lo:hi:n"``, ``"log:lo:hi:n"``
    or ``"lin:lo:hi:n"``. The bare three-part form is log-spaced."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            spacing = "log"
            if parts[0] in ("log", "lin", "linear"):
                spacing = "log" if parts[0] == "log" else "linear"
                parts = parts[1:]
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
            if not (0 < lo <= hi) or n < 1:
                raise ValueError
            return np.geomspace(lo, hi, n) if spacing == "log" else np.linspace(lo, hi, n)
        vals = np.array([float(x) for x in text.split(",") if x.strip()])
    except (ValueError, IndexError):
        raise InputError(f"cannot parse rho grid {text!r}") from None
    if vals.size == 0 or np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise InputError(f"rho values must be finite and non-negative: {text!r}")
    return vals


@dataclass
class RunConfig:
    """Settings shared by the command-line workflows.

    Every field can be set in a ``key = value`` file; command-line flags
    override the file. ``k`` is a state count or range, ``rho`` a grid spec
    (see :func:`parse_rho_grid`); an empty ``rho`` means an unpenalized fit.
    """

    scenario: int = 1
    preset: str = "gaussian"
    k: str = "2"
    rho: str = ""
    T: int = 1000
    d: int = 10
    seed: int = 0
    replicates: int = 10
    weighting_mode: str = "uniform"
    tol: float = 1e-8
    max_iter: int = 1000
    n_starts: int = 10
    screen_iter: int = 0
    shape_target: str = "observed"
    df_mode: str = "printed"
    renormalize_det: bool = True
    data_kind: str = "returns"
    workers: int = 1
    params: str = ""
    data: str = ""
    out: str = "."


_BOOL = {"true": True, "yes": True, "1": True, "on": True,
         "false": False, "no": False, "0": False, "off": False}


def _coerce(name, value, kind):
    try:
        if kind is bool:
            return _BOOL[str(value).strip().lower()]
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except (KeyError, ValueError):
        raise InputError(f"config key {name!r}: cannot parse {value!r}") from None
    return str(value).strip()


def _field_types():
    kinds = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: kinds.get(f.type, str) for f in fields(RunConfig)}


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Build a :class:`RunConfig` from a key-value file and overrides."""
    types = _field_types()
    values = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise InputError(f"no such config file: {p}")
        for n, raw in enumerate(p.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{p}, line {n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lower().replace("-", "_")
            if key == "t":
                key = "T"
            if key not in types:
                raise InputError(f"{p}, line {n}: unknown key {key!r}")
            values[key] = _coerce(key, value, types[key])
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value, types[key])
    return RunConfig(**values)
