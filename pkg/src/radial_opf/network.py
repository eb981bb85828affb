"""Radial network model, file ingestion and tree-path primitives.

Node ids are dense integers with the substation (slack bus) at 0. Ids are
assigned in breadth-first order from the root, so ``parent[j] < j`` for every
non-root node and a plain ascending loop is a forward sweep. Every line is
identified by its downstream (child) node: line ``j`` is ``(parent[j], j)``.
Per-line arrays therefore have length ``N + 1`` with slot 0 unused.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Optional, Union

import numpy as np

Line = tuple[int, int]
Source = Union[str, os.PathLike, bytes, IO]


class NetworkError(ValueError):
    """Raised for malformed or non-radial network data."""


@dataclass(frozen=True, eq=False)
class Network:
    """Single-phase equivalent radial distribution network in per-unit.

    Attributes
    ----------
    names : external node names, indexed by node id (``names[0]`` is the root)
    parent : parent node id per node, ``parent[0] == -1``
    r, x : series resistance / reactance of the line into each node (slot 0 is 0)
    p_nom, q_nom : nominal net injections per node (negative for loads, slot 0 is 0)
    controllable : whether the node's injection is a decision variable (slot 0 False)
    v0 : squared voltage magnitude at the root
    """

    names: tuple[str, ...]
    parent: np.ndarray
    r: np.ndarray
    x: np.ndarray
    p_nom: np.ndarray
    q_nom: np.ndarray
    controllable: np.ndarray
    v0: float
    children: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self):
        n1 = len(self.names)
        for name in ("parent", "r", "x", "p_nom", "q_nom", "controllable"):
            arr = np.array(getattr(self, name))
            if arr.shape != (n1,):
                raise NetworkError(f"{name} must have length {n1}, got shape {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.v0 > 0:
            raise NetworkError("nonpositive v0")
        if self.parent[0] != -1:
            raise NetworkError("node 0 must be the root")
        for j in range(1, n1):
            if not 0 <= self.parent[j] < j:
                raise NetworkError(f"node {j}: parent must precede it in breadth-first order")
        if np.any(self.r[1:] < 0) or np.any(self.x[1:] < 0):
            raise NetworkError("negative line impedance")
        zero = (self.r[1:] == 0) & (self.x[1:] == 0)
        if np.any(zero):
            j = int(np.flatnonzero(zero)[0]) + 1
            raise NetworkError(f"line {self.line(j)} has zero impedance")
        kids: list[list[int]] = [[] for _ in range(n1)]
        for j in range(1, n1):
            kids[int(self.parent[j])].append(j)
        object.__setattr__(self, "children", tuple(tuple(k) for k in kids))

    @property
    def n(self) -> int:
        """Number of non-root nodes N."""
        return len(self.names) - 1

    @property
    def lines(self) -> list[Line]:
        return [(int(self.parent[j]), j) for j in range(1, self.n + 1)]

    @property
    def z2(self) -> np.ndarray:
        """Squared impedance magnitude |z|^2 = r^2 + x^2 per line."""
        return self.r**2 + self.x**2

    def line(self, j: int) -> Line:
        return (int(self.parent[j]), j)

    def node_id(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown node name {name!r}") from None

    def check_node(self, h: int) -> int:
        if not (isinstance(h, (int, np.integer)) and 0 <= h <= self.n):
            raise KeyError(f"unknown node id {h!r}")
        return int(h)

    def replace(self, **changes) -> "Network":
        fields = dict(
            names=self.names,
            parent=self.parent,
            r=self.r,
            x=self.x,
            p_nom=self.p_nom,
            q_nom=self.q_nom,
            controllable=self.controllable,
            v0=self.v0,
        )
        fields.update(changes)
        return Network(**fields)


@dataclass(frozen=True)
class InjectionBox:
    """Per-node bounds on controllable injections, length-N arrays over nodes 1..N.

    Non-controllable nodes carry a degenerate interval at their nominal value,
    which keeps them fixed under projection.
    """

    p_min: np.ndarray
    p_max: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    controllable: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("p_min", "p_max", "q_min", "q_max"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        ctrl = self.controllable
        if ctrl is None:
            ctrl = (self.p_min < self.p_max) | (self.q_min < self.q_max)
        ctrl = np.array(ctrl, dtype=bool)
        ctrl.setflags(write=False)
        object.__setattr__(self, "controllable", ctrl)
        if np.any(self.p_min > self.p_max) or np.any(self.q_min > self.q_max):
            raise ValueError("injection box has lower bound above upper bound")


@dataclass(frozen=True, eq=False)
class PathIndex:
    """Common-path resistance/reactance and path-membership indicators.

    ``R[j, h]`` and ``X[j, h]`` are indexed by node id including the root
    (row/column 0 is identically zero). ``on_path[j, h]`` is True iff node
    ``j`` lies on the path from ``h`` to the root, ``h`` itself included.
    """

    R: np.ndarray
    X: np.ndarray
    on_path: np.ndarray


# --------------------------------------------------------------------------
# tree primitives


def path_to_root(net: Network, h: int) -> list[Line]:
    """Lines on the unique path between the root and ``h``, ordered root first."""
    h = net.check_node(h)
    path = []
    while h != 0:
        path.append(net.line(h))
        h = int(net.parent[h])
    path.reverse()
    return path


def downstream_lines(net: Network, xi: int) -> set[Line]:
    """All lines in the subtree rooted at ``xi`` (including the lines leaving ``xi``)."""
    xi = net.check_node(xi)
    out = set()
    stack = list(net.children[xi])
    while stack:
        k = stack.pop()
        out.add(net.line(k))
        stack.extend(net.children[k])
    return out


def subtree_nodes(net: Network, xi: int) -> list[int]:
    """Node ids in the subtree rooted at ``xi``, ``xi`` first, ascending order."""
    xi = net.check_node(xi)
    out = [xi]
    stack = list(net.children[xi])
    while stack:
        k = stack.pop()
        out.append(k)
        stack.extend(net.children[k])
    return sorted(out)


def build_path_index(net: Network) -> PathIndex:
    """Build R, X and the path indicators by one forward sweep.

    Row ``j`` is its parent's row plus ``2 r_j`` on the columns whose root path
    contains ``j``, so every entry is accumulated root-first along the path.
    """
    n1 = net.n + 1
    on_path = np.zeros((n1, n1), dtype=bool)
    R = np.zeros((n1, n1))
    X = np.zeros((n1, n1))
    # on_path[:, h] is the ancestor-or-self set of h; fill column-wise via rows of anc
    anc = np.zeros((n1, n1), dtype=bool)
    for j in range(1, n1):
        anc[j] = anc[net.parent[j]]
        anc[j, j] = True
    on_path[:] = anc.T
    on_path[0, :] = True
    for j in range(1, n1):
        i = net.parent[j]
        R[j] = R[i] + 2.0 * net.r[j] * on_path[j]
        X[j] = X[i] + 2.0 * net.x[j] * on_path[j]
    for a in (R, X, on_path):
        a.setflags(write=False)
    return PathIndex(R=R, X=X, on_path=on_path)


# --------------------------------------------------------------------------
# ingestion


def _num(value: Any, what: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise NetworkError(f"malformed file: {what} is not a number ({value!r})") from None
    if not np.isfinite(out):
        raise NetworkError(f"malformed file: {what} is not finite")
    return out


def _bool(value: Any) -> bool:
    if isinstance(value, str):
        v = value.strip().lower()
        if v in ("1", "true", "yes", "y", "t"):
            return True
        if v in ("0", "false", "no", "n", "f", ""):
            return False
        raise NetworkError(f"malformed file: cannot read {value!r} as a boolean")
    return bool(value)


def network_from_records(
    nodes: list[dict], lines: list[dict], v0: float, root: str | None = None
) -> Network:
    """Validate raw node/line records and build a densely indexed Network.

    Lines may be listed in any order; each must point away from the root.
    The root may be omitted from ``nodes`` (its injection is the slack).
    """
    v0 = _num(v0, "v0_squared_pu")
    if v0 <= 0:
        raise NetworkError("nonpositive v0")

    node_data: dict[str, dict] = {}
    for rec in nodes:
        try:
            name = str(rec["name"])
        except (KeyError, TypeError):
            raise NetworkError("malformed file: node record without a name") from None
        if name in node_data:
            raise NetworkError(f"malformed file: duplicate node {name!r}")
        node_data[name] = dict(
            p=_num(rec.get("p_nom_pu", 0.0), f"p_nom_pu of {name}"),
            q=_num(rec.get("q_nom_pu", 0.0), f"q_nom_pu of {name}"),
            ctrl=_bool(rec.get("controllable", False)),
        )

    edges: list[tuple[str, str, float, float]] = []
    for rec in lines:
        try:
            a, b = str(rec["from"]), str(rec["to"])
        except (KeyError, TypeError):
            raise NetworkError("malformed file: line record needs 'from' and 'to'") from None
        if a == b:
            raise NetworkError(f"cycle detected: self-loop at {a!r}")
        r = _num(rec.get("r_pu"), f"r_pu of line {a}-{b}")
        x = _num(rec.get("x_pu"), f"x_pu of line {a}-{b}")
        edges.append((a, b, r, x))

    all_names = list(node_data)
    for a, b, _, _ in edges:
        for nm in (a, b):
            if nm not in node_data and nm not in all_names:
                all_names.append(nm)

    # union-find over undirected edges catches cycles and parallel lines
    uf = {nm: nm for nm in all_names}

    def find(a):
        while uf[a] != a:
            uf[a] = uf[uf[a]]
            a = uf[a]
        return a

    seen: set[tuple[str, str]] = set()
    for a, b, _, _ in edges:
        if (a, b) in seen:
            raise NetworkError(f"duplicate line {a!r} -> {b!r}")
        seen.add((a, b))
        ra, rb = find(a), find(b)
        if ra == rb:
            raise NetworkError(f"cycle detected at line {a!r} -> {b!r}")
        uf[ra] = rb

    incoming: dict[str, list[int]] = {nm: [] for nm in all_names}
    for e, (a, b, _, _) in enumerate(edges):
        incoming[b].append(e)
    if root is None:
        roots = [nm for nm in all_names if not incoming[nm]]
        if len(edges) == 0 or len(roots) == 0:
            raise NetworkError("malformed file: network has no lines or no root")
        # several parentless names means some node is cut off (or a line is reversed)
        connected_root = [nm for nm in roots if any(a == nm for a, _, _, _ in edges)]
        if len(roots) > 1:
            isolated = [nm for nm in roots if nm not in connected_root]
            if isolated:
                raise NetworkError(f"disconnected node {isolated[0]!r}")
            raise NetworkError(
                f"malformed file: several candidate roots {connected_root}; lines must point away from the root"
            )
        root = roots[0]
    elif root not in incoming:
        raise NetworkError(f"malformed file: root {root!r} is not a known node")

    for nm in all_names:
        if find(nm) != find(root):
            raise NetworkError(f"disconnected node {nm!r}")
    for nm, inc in incoming.items():
        if nm == root and inc:
            raise NetworkError(f"malformed file: line {edges[inc[0]][0]!r} -> {nm!r} points into the root")
        if nm != root and len(inc) != 1:
            raise NetworkError(f"malformed file: node {nm!r} has {len(inc)} incoming lines")

    out_edges: dict[str, list[int]] = {nm: [] for nm in all_names}
    for e, (a, _, _, _) in enumerate(edges):
        out_edges[a].append(e)

    order = [root]
    line_of: dict[str, int] = {}
    queue = deque([root])
    while queue:
        a = queue.popleft()
        for e in out_edges[a]:
            b = edges[e][1]
            line_of[b] = e
            order.append(b)
            queue.append(b)
    ids = {nm: k for k, nm in enumerate(order)}

    n1 = len(order)
    parent = np.full(n1, -1, dtype=int)
    r = np.zeros(n1)
    x = np.zeros(n1)
    p = np.zeros(n1)
    q = np.zeros(n1)
    ctrl = np.zeros(n1, dtype=bool)
    for nm, k in ids.items():
        if k == 0:
            continue
        a, _, rr, xx = edges[line_of[nm]]
        parent[k] = ids[a]
        r[k], x[k] = rr, xx
        if nm in node_data:
            p[k], q[k], ctrl[k] = node_data[nm]["p"], node_data[nm]["q"], node_data[nm]["ctrl"]
    return Network(
        names=tuple(order), parent=parent, r=r, x=x, p_nom=p, q_nom=q, controllable=ctrl, v0=v0
    )


def parse_network(source: Source) -> Network:
    """Read a network from a JSON file path, JSON bytes/text stream, or a CSV directory.

    A directory must contain ``nodes.csv`` and ``lines.csv`` (columns as in the
    JSON records) and ``meta.json`` holding ``v0_squared_pu``.
    """
    if isinstance(source, (str, os.PathLike)) and Path(source).is_dir():
        return _parse_csv_dir(Path(source))
    try:
        if isinstance(source, (bytes, bytearray)):
            doc = json.loads(source.decode())
        elif isinstance(source, (str, os.PathLike)):
            with open(source, encoding="utf-8") as fh:
                doc = json.load(fh)
        else:
            doc = json.load(source)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise NetworkError(f"malformed file: {exc}") from None
    if not isinstance(doc, dict) or "lines" not in doc or "v0_squared_pu" not in doc:
        raise NetworkError("malformed file: expected keys 'v0_squared_pu', 'nodes', 'lines'")
    if not isinstance(doc["lines"], list) or not isinstance(doc.get("nodes", []), list):
        raise NetworkError("malformed file: 'nodes' and 'lines' must be lists")
    return network_from_records(doc.get("nodes", []), doc["lines"], doc["v0_squared_pu"], doc.get("root"))


def _read_csv(text: str) -> list[dict]:
    return [dict(row) for row in csv.DictReader(io.StringIO(text))]


def parse_network_csv(nodes_csv: str, lines_csv: str, v0_squared_pu: float, root: str | None = None) -> Network:
    """Build a Network from CSV text of the node and line tables."""
    return network_from_records(_read_csv(nodes_csv), _read_csv(lines_csv), v0_squared_pu, root)


def _parse_csv_dir(path: Path) -> Network:
    try:
        meta = json.loads((path / "meta.json").read_text())
        return parse_network_csv(
            (path / "nodes.csv").read_text(),
            (path / "lines.csv").read_text(),
            meta["v0_squared_pu"],
            meta.get("root"),
        )
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise NetworkError(f"malformed file: {exc}") from None


def network_to_dict(net: Network) -> dict:
    """Inverse of :func:`parse_network` for JSON serialization."""
    return {
        "v0_squared_pu": net.v0,
        "root": net.names[0],
        "nodes": [
            {
                "name": net.names[k],
                "p_nom_pu": float(net.p_nom[k]),
                "q_nom_pu": float(net.q_nom[k]),
                "controllable": bool(net.controllable[k]),
            }
            for k in range(1, net.n + 1)
        ],
        "lines": [
            {"from": net.names[i], "to": net.names[j], "r_pu": float(net.r[j]), "x_pu": float(net.x[j])}
            for i, j in net.lines
        ],
    }
