"""Hierarchical evaluation of the dual-weighted sensitivity sums.

The non-root nodes are split into K regional subtrees, each run by a
regional controller (RC), plus a set of unclustered backbone nodes handled
by the central controller (CC). Per iteration:

1. every RC k reports one scalar ``S_k = sum_{j in N_k} (1 - |z_ij|^2 l_ij / v_i) w_j``
   (``w = mu_hi - mu_lo``, i the parent of j);
2. for each subtree the CC returns the part of alpha/beta that originates
   outside the subtree: the other subtrees enter through
   ``R[n_k, n_k'] * S_k'`` and the backbone nodes through the improved
   sensitivities evaluated at the subtree root n_k;
3. each RC adds the in-subtree terms and hands alpha_h, beta_h to its nodes;
4. the CC sends alpha_h, beta_h directly to every backbone node.

The result equals the centralized ``(dv/du)^T w`` exactly in real arithmetic.
Message passing is simulated in-process; the log keeps only payload sizes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Optional, Sequence, Union

import numpy as np

from .gradients import improved_block
from .network import Network, PathIndex, build_path_index
from .opf import DualState, OpfProblem, Trajectory, iterate, project_box
from .powerflow import InjectionVector, PowerFlowState

TAGS = ("rc->cc", "cc->rc", "rc->node", "cc->node")


class ClusteringError(ValueError):
    """Malformed clustering file or a clustering rejected before iteration."""


@dataclass(frozen=True)
class Subtree:
    root: int
    nodes: tuple[int, ...]


@dataclass(frozen=True)
class Clustering:
    """Subtrees and backbone (unclustered) nodes, by node id.

    Node lists are kept as given so that overlaps and duplicates survive
    parsing and can be reported by :func:`validate_clustering`.
    """

    subtrees: tuple[Subtree, ...]
    unclustered: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.subtrees)

    def root_parents(self, net: Network) -> tuple[int, ...]:
        return tuple(int(net.parent[s.root]) for s in self.subtrees)

    @classmethod
    def all_unclustered(cls, net: Network) -> "Clustering":
        return cls((), tuple(range(1, net.n + 1)))

    @classmethod
    def from_sets(cls, subtrees: Sequence[tuple[int, Sequence[int]]], unclustered: Sequence[int]) -> "Clustering":
        return cls(
            tuple(Subtree(int(r), tuple(sorted(int(j) for j in nodes))) for r, nodes in subtrees),
            tuple(sorted(int(j) for j in unclustered)),
        )


# --------------------------------------------------------------------------
# parsing and validation


def clustering_from_dict(net: Network, doc: dict) -> Clustering:
    if not isinstance(doc, dict) or not isinstance(doc.get("subtrees"), list):
        raise ClusteringError("malformed clustering: expected a 'subtrees' list")
    unclustered = doc.get("unclustered", [])
    if not isinstance(unclustered, list):
        raise ClusteringError("malformed clustering: 'unclustered' must be a list")

    def ident(name) -> int:
        try:
            return net.node_id(str(name))
        except (KeyError, ValueError):
            raise ClusteringError(f"unknown node {name!r} in clustering") from None

    subtrees = []
    for k, entry in enumerate(doc["subtrees"]):
        if not isinstance(entry, dict) or "root" not in entry or not isinstance(entry.get("nodes"), list):
            raise ClusteringError(f"malformed clustering: subtree {k} needs 'root' and 'nodes'")
        subtrees.append(Subtree(ident(entry["root"]), tuple(ident(nm) for nm in entry["nodes"])))
    return Clustering(tuple(subtrees), tuple(ident(nm) for nm in unclustered))


def parse_clustering(source: Union[str, os.PathLike, bytes, IO[str]], net: Network) -> Clustering:
    """Read ``{"subtrees": [{"root": name, "nodes": [names]}], "unclustered": [names]}``."""
    try:
        if isinstance(source, (bytes, bytearray)):
            doc = json.loads(source.decode())
        elif isinstance(source, (str, os.PathLike)):
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        else:
            doc = json.load(source)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ClusteringError(f"malformed clustering: {exc}") from None
    return clustering_from_dict(net, doc)


def clustering_to_dict(net: Network, clustering: Clustering) -> dict:
    return {
        "subtrees": [
            {"root": net.names[s.root], "nodes": [net.names[j] for j in s.nodes]} for s in clustering.subtrees
        ],
        "unclustered": [net.names[j] for j in clustering.unclustered],
    }


@dataclass(frozen=True)
class Violation:
    kind: str  # invalid-node | coverage | overlap | connectivity | assumption-2
    message: str
    node: Optional[str] = None
    subtree: Optional[int] = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "clustering ok"
        return "\n".join(f"{v.kind}: {v.message}" for v in self.violations)


def validate_clustering(net: Network, clustering: Clustering) -> ValidationReport:
    """Check partition, subtree connectivity, and that backbone paths avoid subtrees.

    Never raises on a bad clustering; every violation found is reported.
    """
    out: list[Violation] = []
    name = lambda j: net.names[j] if 0 <= j <= net.n else str(j)  # noqa: E731

    owner: dict[int, list[int]] = {}  # node -> parts containing it; -1 is the backbone
    parts = [(k, s.nodes) for k, s in enumerate(clustering.subtrees)] + [(-1, clustering.unclustered)]
    for k, nodes in parts:
        for j in nodes:
            if not 1 <= j <= net.n:
                what = "the network root" if j == 0 else "not a network node"
                out.append(Violation("invalid-node", f"node {name(j)} is {what}", name(j), None if k < 0 else k))
                continue
            owner.setdefault(j, []).append(k)

    for j in range(1, net.n + 1):
        holders = owner.get(j, [])
        if not holders:
            out.append(Violation("coverage", f"node {name(j)} belongs to no part", name(j)))
        elif len(holders) > 1:
            labels = ", ".join("backbone" if k < 0 else f"subtree {k}" for k in holders)
            out.append(Violation("overlap", f"node {name(j)} appears in {labels}", name(j)))

    def part_of(j: int) -> Optional[int]:
        holders = owner.get(j, [])
        return holders[0] if len(holders) == 1 else None

    for k, s in enumerate(clustering.subtrees):
        members = set(s.nodes)
        if s.root not in members:
            out.append(Violation("connectivity", f"subtree {k} does not contain its root {name(s.root)}", name(s.root), k))
        for j in sorted(members):
            if j == s.root or not 1 <= j <= net.n:
                continue
            if int(net.parent[j]) not in members:
                out.append(
                    Violation(
                        "connectivity",
                        f"node {name(j)} in subtree {k} is not connected to root {name(s.root)} inside the subtree",
                        name(j),
                        k,
                    )
                )

    # Every ancestor (root excluded) of a subtree root or backbone node must be a backbone node.
    starts = [(s.root, k) for k, s in enumerate(clustering.subtrees) if 1 <= s.root <= net.n]
    starts += [(j, None) for j in clustering.unclustered if 1 <= j <= net.n]
    for start, k in starts:
        a = int(net.parent[start])
        while a > 0:
            pk = part_of(a)
            if pk is not None and pk >= 0:
                who = f"root {name(start)} of subtree {k}" if k is not None else f"backbone node {name(start)}"
                out.append(
                    Violation(
                        "assumption-2",
                        f"path from {who} to the network root passes node {name(a)} of subtree {pk}",
                        name(start),
                        k,
                    )
                )
                break
            a = int(net.parent[a])
    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------
# messages


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    size: int
    tag: str


@dataclass
class MessageLog:
    """Messages per iteration. The pattern depends only on the clustering, so
    identical rounds share one tuple."""

    rounds: list[tuple[Message, ...]] = field(default_factory=list)

    def add_round(self, messages: Sequence[Message]) -> None:
        msgs = tuple(messages)
        if self.rounds and self.rounds[-1] == msgs:
            msgs = self.rounds[-1]
        self.rounds.append(msgs)

    def extend(self, other: "MessageLog") -> None:
        for r in other.rounds:
            self.add_round(r)

    @property
    def iterations(self) -> int:
        return len(self.rounds)

    def counts(self, iteration: int) -> dict[str, int]:
        """Message count per tag in round ``iteration`` (1-based)."""
        c = {t: 0 for t in TAGS}
        for m in self.rounds[iteration - 1]:
            c[m.tag] += 1
        return c

    def scalars(self, iteration: int) -> int:
        return sum(m.size for m in self.rounds[iteration - 1])

    def records(self):
        """Yield ``(iteration, message)`` in send order."""
        for t, r in enumerate(self.rounds, start=1):
            for m in r:
                yield t, m


def _rc(k: int) -> str:
    return f"rc{k}"


# --------------------------------------------------------------------------
# the three pieces


def _flow_free(state: PowerFlowState) -> PowerFlowState:
    """Same voltages, no flows or losses: the improved formula then reduces to R, X."""
    z = np.zeros_like(state.P)
    return replace(state, P=z, Q=z, l=z)


def rc_weighted_dual_sum(
    net: Network, clustering: Clustering, k: int, duals: DualState, state: PowerFlowState
) -> float:
    """RC k's report ``sum_{j in N_k} (1 - |z_ij|^2 l_ij / v_i)(mu_hi_j - mu_lo_j)``."""
    nodes = np.asarray(clustering.subtrees[k].nodes, dtype=int)
    vi = state.v[net.parent[nodes]]
    if np.any(vi <= 0):
        raise ValueError("nonpositive parent voltage in state")
    weights = 1.0 - net.z2[nodes] * state.l[nodes] / vi
    w = duals.net[nodes - 1]
    total = 0.0
    for a, b in zip(weights, w):  # ascending node order
        total += float(a * b)
    return total


def cc_cross_subtree_term(
    net: Network,
    clustering: Clustering,
    k_dest: int,
    rc_sums: Sequence[float],
    idx: Optional[PathIndex] = None,
) -> tuple[float, float]:
    """Contribution of the other subtrees to any node of subtree ``k_dest`` (alpha, beta parts)."""
    if len(rc_sums) != clustering.k:
        raise ValueError("need one regional sum per subtree")
    idx = idx or build_path_index(net)
    nk = clustering.subtrees[k_dest].root
    a = b = 0.0
    for kk, s in enumerate(clustering.subtrees):
        if kk == k_dest:
            continue
        a += float(idx.R[nk, s.root]) * rc_sums[kk]
        b += float(idx.X[nk, s.root]) * rc_sums[kk]
    return a, b


def cc_subtree_term_for_node(
    clustering: Clustering, h: int, rc_sums: Sequence[float], idx: PathIndex
) -> tuple[float, float]:
    """Contribution of all subtrees to backbone node ``h``."""
    a = b = 0.0
    for kk, s in enumerate(clustering.subtrees):
        a += float(idx.R[h, s.root]) * rc_sums[kk]
        b += float(idx.X[h, s.root]) * rc_sums[kk]
    return a, b


def cc_backbone_term(
    net: Network,
    clustering: Clustering,
    state: PowerFlowState,
    duals: DualState,
    *,
    node: Optional[int] = None,
    subtree: Optional[int] = None,
    idx: Optional[PathIndex] = None,
) -> tuple[float, float]:
    """``sum_{j in N_0} (dv_j/dp_h, dv_j/dq_h) w_j`` for a backbone node or a subtree.

    For a subtree destination every h in it sees the same value, obtained by
    evaluating the sensitivities at the subtree root.
    """
    if (node is None) == (subtree is None):
        raise ValueError("give exactly one of node or subtree")
    h = clustering.subtrees[subtree].root if subtree is not None else int(node)
    rows = np.asarray(clustering.unclustered, dtype=int)
    if rows.size == 0:
        return 0.0, 0.0
    idx = idx or build_path_index(net)
    dp, dq = improved_block(net, idx, state, rows, [h])
    w = duals.net[rows - 1]
    a = b = 0.0
    for j in range(rows.size):
        a += float(dp[j, 0] * w[j])
        b += float(dq[j, 0] * w[j])
    return a, b


# --------------------------------------------------------------------------
# assembly and the full algorithm


def _ordered_column_sums(block: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``block.T @ w`` with rows summed in ascending order."""
    out = np.zeros(block.shape[1])
    for j in range(block.shape[0]):
        out += block[j] * w[j]
    return out


def assemble_alpha_beta(
    net: Network,
    clustering: Clustering,
    state: PowerFlowState,
    duals: DualState,
    idx: Optional[PathIndex] = None,
    mode: str = "improved",
) -> tuple[np.ndarray, np.ndarray, MessageLog]:
    """Hierarchical alpha_h, beta_h for all nodes plus the round's message log.

    ``mode="linear"`` evaluates the same decomposition with flows and losses
    zeroed, which reproduces the linear-model products.
    """
    if mode == "linear":
        state = _flow_free(state)
    elif mode != "improved":
        raise ValueError(f"hierarchical evaluation supports 'improved' and 'linear', not {mode!r}")
    idx = idx or build_path_index(net)
    n = net.n
    alpha = np.zeros(n)
    beta = np.zeros(n)
    w = duals.net
    msgs: list[Message] = []

    # step 4: regional reports
    rc_sums = []
    for k in range(clustering.k):
        rc_sums.append(rc_weighted_dual_sum(net, clustering, k, duals, state))
        msgs.append(Message(_rc(k), "cc", 1, "rc->cc"))

    # step 5: central terms for each subtree, then the in-subtree terms at the RC
    for k, s in enumerate(clustering.subtrees):
        ca, cb = cc_cross_subtree_term(net, clustering, k, rc_sums, idx)
        ba, bb = cc_backbone_term(net, clustering, state, duals, subtree=k, idx=idx)
        msgs.append(Message("cc", _rc(k), 2, "cc->rc"))
        nodes = np.asarray(s.nodes, dtype=int)
        dp, dq = improved_block(net, idx, state, nodes, nodes)
        wk = w[nodes - 1]
        alpha[nodes - 1] = _ordered_column_sums(dp, wk) + (ca + ba)
        beta[nodes - 1] = _ordered_column_sums(dq, wk) + (cb + bb)
        for h in nodes:
            msgs.append(Message(_rc(k), net.names[h], 2, "rc->node"))

    # step 6: backbone nodes are served by the CC directly
    rows = np.asarray(clustering.unclustered, dtype=int)
    if rows.size:
        dp, dq = improved_block(net, idx, state, rows, rows)
        own_a = _ordered_column_sums(dp, w[rows - 1])
        own_b = _ordered_column_sums(dq, w[rows - 1])
        for m, h in enumerate(rows):
            sa, sb = cc_subtree_term_for_node(clustering, int(h), rc_sums, idx)
            alpha[h - 1] = own_a[m] + sa
            beta[h - 1] = own_b[m] + sb
            msgs.append(Message("cc", net.names[h], 2, "cc->node"))

    log = MessageLog()
    log.add_round(msgs)
    return alpha, beta, log


def require_valid(net: Network, clustering: Clustering) -> None:
    report = validate_clustering(net, clustering)
    if not report.ok:
        raise ClusteringError(f"invalid clustering:\n{report}")


def run_hierarchical(
    prob: OpfProblem,
    clustering: Clustering,
    u0: Optional[InjectionVector] = None,
    mode: str = "improved",
) -> tuple[Trajectory, MessageLog]:
    """The primal-dual loop with alpha/beta assembled by the CC/RC hierarchy."""
    net = prob.network
    require_valid(net, clustering)
    if u0 is None:
        u0 = project_box(InjectionVector.nominal(net), prob.box)
    log = MessageLog()

    def terms(u, state, duals):
        a, b, round_log = assemble_alpha_beta(net, clustering, state, duals, prob.path_index, mode)
        log.extend(round_log)
        return a, b

    traj = iterate(prob, u0, terms)
    # a round whose feedback solve failed produced no iterate
    del log.rounds[traj.iterations :]
    return traj, log
