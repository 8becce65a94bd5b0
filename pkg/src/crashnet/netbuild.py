"""Threshold networks over partial correlations, plus DOT/GraphML I/O."""

from __future__ import annotations

import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .costats import offdiagonal
from .errors import DataError


@dataclass
class ThresholdNetwork:
    nodes: tuple
    adjacency: np.ndarray
    theta: float = float("nan")
    weights: np.ndarray | None = None
    retained_isolated: bool = True
    dropped: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        a = np.asarray(self.adjacency, dtype=bool)
        n = len(self.nodes)
        if a.shape != (n, n):
            raise DataError(f"adjacency shape {a.shape} does not match {n} nodes")
        if a.diagonal().any():
            raise DataError("self-loops are not allowed")
        if not np.array_equal(a, a.T):
            raise DataError("adjacency must be symmetric")
        self.adjacency = a

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    def index(self, node) -> int:
        try:
            return self.nodes.index(node)
        except ValueError:
            raise DataError(f"unknown node {node!r}") from None

    def edges(self) -> list[tuple]:
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return [(self.nodes[a], self.nodes[b]) for a, b in zip(i, j)]

    def neighbours(self) -> list[list[int]]:
        return [list(np.flatnonzero(row)) for row in self.adjacency]


def _values(pcorr):
    return np.asarray(getattr(pcorr, "values", pcorr), dtype=np.float64)


def percentile_threshold(pcorr, pct: float = 75.0) -> float:
    """Nearest-rank percentile of ``|C*|`` over distinct asset pairs.

    ``pcorr`` may be a single matrix or a sequence of matrices, whose
    off-diagonal magnitudes are then pooled.
    """
    if not 0 < pct <= 100:
        raise DataError(f"percentile {pct} outside (0, 100]")
    mats = pcorr if isinstance(pcorr, (list, tuple)) else [pcorr]
    pool = np.sort(np.concatenate([np.abs(offdiagonal(_values(m))) for m in mats]))
    if pool.size == 0:
        raise DataError("percentile_threshold needs at least 2 assets")
    rank = math.ceil(Fraction(repr(float(pct))) * pool.size / 100)
    return float(pool[max(rank, 1) - 1])


def build_network(
    pcorr,
    theta: float,
    drop_isolated: bool = False,
    signed: bool = False,
) -> ThresholdNetwork:
    """Edge between p and q iff ``|C*_pq| >= theta`` (``C*_pq >= theta`` when
    ``signed``). With ``drop_isolated`` degree-0 nodes are removed."""
    if not 0.0 <= theta <= 1.0:
        raise DataError(f"theta {theta} outside [0, 1]")
    values = _values(pcorr)
    nodes = tuple(getattr(pcorr, "symbols", range(values.shape[0])))
    score = values if signed else np.abs(values)
    adj = score >= theta
    np.fill_diagonal(adj, False)
    adj = adj & adj.T
    dropped: tuple = ()
    if drop_isolated:
        keep = adj.any(axis=1)
        dropped = tuple(n for n, k in zip(nodes, keep) if not k)
        nodes = tuple(n for n, k in zip(nodes, keep) if k)
        adj = adj[np.ix_(keep, keep)]
        values = values[np.ix_(keep, keep)]
    return ThresholdNetwork(nodes, adj, float(theta), values.copy(), not drop_isolated, dropped)


def _sorted_order(net: ThresholdNetwork) -> list[int]:
    return sorted(range(net.n_nodes), key=lambda i: str(net.nodes[i]))


def _dot_id(name) -> str:
    return '"' + str(name).replace("\\", "\\\\").replace('"', '\\"') + '"'


def write_dot(net: ThresholdNetwork, path) -> Path:
    order = _sorted_order(net)
    lines = ["graph threshold_network {", f"  graph [theta={_dot_id(repr(net.theta))}];"]
    for i in order:
        lines.append(f"  {_dot_id(net.nodes[i])} [label={_dot_id(net.nodes[i])}];")
    for a_pos, i in enumerate(order):
        for j in order[a_pos + 1:]:
            if net.adjacency[i, j]:
                attr = ""
                if net.weights is not None:
                    attr = f" [weight={_dot_id(repr(float(net.weights[i, j])))}]"
                lines.append(f"  {_dot_id(net.nodes[i])} -- {_dot_id(net.nodes[j])}{attr};")
    lines.append("}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_DOT_TOKEN = re.compile(r'"((?:[^"\\]|\\.)*)"|([A-Za-z0-9_.\-]+)')


def _unquote(match) -> str:
    if match.group(1) is not None:
        return re.sub(r"\\(.)", r"\1", match.group(1))
    return match.group(2)


def read_dot(path) -> ThresholdNetwork:
    """Read an undirected DOT graph (node statements, ``a -- b`` edges and
    ``a -- b -- c`` chains). Attributes other than ``weight`` and the graph
    ``theta`` are ignored."""
    text = Path(path).read_text(encoding="utf-8")
    text = re.sub(r"//[^\n]*|#[^\n]*|/\*.*?\*/", "", text, flags=re.S)
    m = re.search(r"\bgraph\b[^{]*\{(.*)\}", text, flags=re.S)
    if not m or re.search(r"\bdigraph\b", text):
        raise DataError(f"{path}: expected an undirected 'graph {{...}}'")
    body = m.group(1)
    theta = float("nan")
    nodes: list[str] = []
    seen: set[str] = set()
    edges: list[tuple[str, str, float]] = []

    def add(n):
        if n not in seen:
            seen.add(n)
            nodes.append(n)

    for stmt in re.split(r";|\n", body):
        stmt = stmt.strip()
        if not stmt:
            continue
        attrs = ""
        if "[" in stmt:
            stmt, attrs = stmt.split("[", 1)
            stmt = stmt.strip()
        head = stmt.split()[0] if stmt.split() else ""
        if head in ("graph", "node", "edge"):
            t = re.search(r'theta\s*=\s*"?([^",\]\s]+)"?', attrs)
            if head == "graph" and t:
                theta = float(t.group(1))
            continue
        if "=" in stmt and "--" not in stmt:
            continue
        parts = [p.strip() for p in stmt.split("--")]
        names = []
        for p in parts:
            tok = _DOT_TOKEN.fullmatch(p)
            if tok is None:
                raise DataError(f"{path}: cannot parse DOT statement {stmt!r}")
            names.append(_unquote(tok))
        w = re.search(r'weight\s*=\s*"?([^",\]\s]+)"?', attrs)
        weight = float(w.group(1)) if w else float("nan")
        for n in names:
            add(n)
        for a, b in zip(names, names[1:]):
            edges.append((a, b, weight))
    return _from_edges(nodes, edges, theta)


def _from_edges(nodes, edges, theta) -> ThresholdNetwork:
    pos = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    adj = np.zeros((n, n), dtype=bool)
    weights = np.full((n, n), np.nan)
    np.fill_diagonal(weights, 1.0)
    for a, b, w in edges:
        if a == b:
            raise DataError(f"self-loop on {a!r}")
        i, j = pos[a], pos[b]
        adj[i, j] = adj[j, i] = True
        weights[i, j] = weights[j, i] = w
    return ThresholdNetwork(tuple(nodes), adj, theta, weights)


GRAPHML_NS = "http://graphml.graphdrawing.org/xmlns"


def write_graphml(net: ThresholdNetwork, path) -> Path:
    ET.register_namespace("", GRAPHML_NS)
    q = lambda tag: f"{{{GRAPHML_NS}}}{tag}"  # noqa: E731
    root = ET.Element(q("graphml"))
    ET.SubElement(root, q("key"), id="label", attrib={"for": "node", "attr.name": "label", "attr.type": "string"})
    ET.SubElement(root, q("key"), id="weight", attrib={"for": "edge", "attr.name": "weight", "attr.type": "double"})
    ET.SubElement(root, q("key"), id="theta", attrib={"for": "graph", "attr.name": "theta", "attr.type": "double"})
    g = ET.SubElement(root, q("graph"), id="threshold_network", edgedefault="undirected")
    ET.SubElement(g, q("data"), key="theta").text = repr(net.theta)
    order = _sorted_order(net)
    for i in order:
        node = ET.SubElement(g, q("node"), id=str(net.nodes[i]))
        ET.SubElement(node, q("data"), key="label").text = str(net.nodes[i])
    k = 0
    for a_pos, i in enumerate(order):
        for j in order[a_pos + 1:]:
            if net.adjacency[i, j]:
                e = ET.SubElement(g, q("edge"), id=f"e{k}", source=str(net.nodes[i]), target=str(net.nodes[j]))
                if net.weights is not None:
                    ET.SubElement(e, q("data"), key="weight").text = repr(float(net.weights[i, j]))
                k += 1
    tree = ET.ElementTree(root)
    ET.indent(tree)
    path = Path(path)
    tree.write(path, encoding="utf-8", xml_declaration=True)
    return path


def read_graphml(path) -> ThresholdNetwork:
    try:
        root = ET.parse(path).getroot()
    except ET.ParseError as exc:
        raise DataError(f"{path}: {exc}") from None
    ns = {"g": GRAPHML_NS}
    g = root.find("g:graph", ns)
    if g is None:
        raise DataError(f"{path}: no <graph> element")
    keys = {k.get("id"): k.get("attr.name") for k in root.findall("g:key", ns)}
    theta = float("nan")
    for d in g.findall("g:data", ns):
        if keys.get(d.get("key")) == "theta":
            theta = float(d.text)
    nodes = [n.get("id") for n in g.findall("g:node", ns)]
    edges = []
    for e in g.findall("g:edge", ns):
        w = float("nan")
        for d in e.findall("g:data", ns):
            if keys.get(d.get("key")) == "weight":
                w = float(d.text)
        edges.append((e.get("source"), e.get("target"), w))
    return _from_edges(nodes, edges, theta)


def read_network(path) -> ThresholdNetwork:
    suffix = Path(path).suffix.lower()
    if suffix in (".dot", ".gv"):
        return read_dot(path)
    if suffix in (".graphml", ".xml"):
        return read_graphml(path)
    raise DataError(f"{path}: unknown network format (expected .dot or .graphml)")


def networks_at(pcorrs: Sequence, pct: float, **kwargs) -> tuple[float, list[ThresholdNetwork]]:
    """One pooled percentile threshold applied to several matrices."""
    theta = percentile_threshold(list(pcorrs), pct)
    return theta, [build_network(p, theta, **kwargs) for p in pcorrs]
