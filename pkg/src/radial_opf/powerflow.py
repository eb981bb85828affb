"""DistFlow (nonlinear) and LinDistFlow (linear) power flow on radial feeders.

All per-node and per-line arrays use the network's padded layout: index 0 is
the root, line ``j`` is the line into node ``j``. The nonlinear solver is the
stand-in for field measurements in the feedback loop, so its states are what
the optimizer "measures".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .network import Network

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_SWEEPS = 500
COLLAPSE_FRACTION = 0.25


class PowerFlowError(RuntimeError):
    pass


class ConvergenceError(PowerFlowError):
    """Sweeps did not reach the residual tolerance."""


class VoltageCollapseError(PowerFlowError):
    """A squared voltage fell to or below ``COLLAPSE_FRACTION * v0`` during the sweeps."""


@dataclass(frozen=True)
class InjectionVector:
    """Net injections u = (p, q) over nodes 1..N (length-N arrays)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        q = np.array(self.q, dtype=float)
        if p.ndim != 1 or p.shape != q.shape:
            raise ValueError("p and q must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("injections must be finite")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def nominal(cls, net: Network) -> "InjectionVector":
        return cls(net.p_nom[1:], net.q_nom[1:])

    @classmethod
    def zeros(cls, n: int) -> "InjectionVector":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_stacked(cls, u: np.ndarray) -> "InjectionVector":
        n = len(u) // 2
        return cls(u[:n], u[n:])

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])

    def __add__(self, other: "InjectionVector") -> "InjectionVector":
        return InjectionVector(self.p + other.p, self.q + other.q)

    def __len__(self) -> int:
        return len(self.p)


@dataclass(frozen=True)
class PowerFlowState:
    """Solved (or linearized) operating point.

    v has length N+1 (root included); P, Q, l are per line, indexed by the
    downstream node (slot 0 is 0).
    """

    v: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    l: np.ndarray
    residual: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class LossAggregates:
    """Active (g) and reactive (eta) line losses downstream of every node, root included."""

    g: np.ndarray
    eta: np.ndarray


def _padded(net: Network, u: InjectionVector) -> tuple[np.ndarray, np.ndarray]:
    if len(u) != net.n:
        raise ValueError(f"injection vector has length {len(u)}, network has {net.n} nodes")
    p = np.zeros(net.n + 1)
    q = np.zeros(net.n + 1)
    p[1:] = u.p
    q[1:] = u.q
    return p, q


def _backward(net: Network, p, q, l):
    # P_ij = -p_j + sum_k P_jk + r_ij l_ij, leaves first
    P = np.zeros(net.n + 1)
    Q = np.zeros(net.n + 1)
    parent = net.parent
    for j in range(net.n, 0, -1):
        P[j] += -p[j] + net.r[j] * l[j]
        Q[j] += -q[j] + net.x[j] * l[j]
        i = parent[j]
        if i > 0:
            P[i] += P[j]
            Q[i] += Q[j]
    return P, Q


def _forward(net: Network, P, Q, l, z2):
    v = np.empty(net.n + 1)
    v[0] = net.v0
    parent = net.parent
    for j in range(1, net.n + 1):
        v[j] = v[parent[j]] - 2.0 * (net.r[j] * P[j] + net.x[j] * Q[j]) + z2[j] * l[j]
    return v


def distflow_residuals(net: Network, u: InjectionVector, state: PowerFlowState) -> dict[str, np.ndarray]:
    """Per-line residuals of the four DistFlow equations evaluated on ``state``."""
    p, q = _padded(net, u)
    v, P, Q, l = state.v, state.P, state.Q, state.l
    child_P = np.zeros(net.n + 1)
    child_Q = np.zeros(net.n + 1)
    np.add.at(child_P, net.parent[1:], P[1:])
    np.add.at(child_Q, net.parent[1:], Q[1:])
    j = np.arange(1, net.n + 1)
    i = net.parent[1:]
    return {
        "P": P[j] - (-p[j] + child_P[j] + net.r[j] * l[j]),
        "Q": Q[j] - (-q[j] + child_Q[j] + net.x[j] * l[j]),
        "v": v[j] - (v[i] - 2.0 * (net.r[j] * P[j] + net.x[j] * Q[j]) + net.z2[j] * l[j]),
        "l": l[j] * v[i] - (P[j] ** 2 + Q[j] ** 2),
        "root": np.array([v[0] - net.v0]),
    }


def max_residual(net: Network, u: InjectionVector, state: PowerFlowState) -> float:
    res = distflow_residuals(net, u, state)
    return float(max(np.max(np.abs(a)) if a.size else 0.0 for a in res.values()))


def solve_nonlinear(
    net: Network,
    u: InjectionVector,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> PowerFlowState:
    """Backward-forward sweep solution of the DistFlow equations from a flat start.

    Each sweep accumulates flows given the current currents, updates voltages
    root-first, then recomputes squared currents. Stops once every DistFlow
    residual is within ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    p, q = _padded(net, u)
    z2 = net.z2
    l = np.zeros(net.n + 1)
    v_floor = COLLAPSE_FRACTION * net.v0
    i = net.parent[1:]
    res = np.inf
    for sweep in range(1, max_sweeps + 1):
        P, Q = _backward(net, p, q, l)
        v = _forward(net, P, Q, l, z2)
        if np.any(v <= v_floor):
            bad = int(np.flatnonzero(v <= v_floor)[0])
            raise VoltageCollapseError(
                f"squared voltage {v[bad]:.4g} at node {net.names[bad]!r} fell below {v_floor:.4g}"
            )
        l = np.zeros(net.n + 1)
        l[1:] = (P[1:] ** 2 + Q[1:] ** 2) / v[i]
        state = PowerFlowState(v=v, P=P, Q=Q, l=l, residual=np.inf, iterations=sweep)
        res = max_residual(net, u, state)
        if res <= tol:
            return PowerFlowState(v=v, P=P, Q=Q, l=l, residual=res, iterations=sweep)
    raise ConvergenceError(f"no convergence after {max_sweeps} sweeps (max residual {res:.3g})")


def solve_linear(net: Network, u: InjectionVector) -> PowerFlowState:
    """LinDistFlow: one backward sweep for flows, one forward sweep for voltages; l is zero."""
    p, q = _padded(net, u)
    l = np.zeros(net.n + 1)
    P, Q = _backward(net, p, q, l)
    v = _forward(net, P, Q, l, net.z2)
    return PowerFlowState(v=v, P=P, Q=Q, l=l, residual=0.0, iterations=1)


def loss_aggregates(net: Network, state: PowerFlowState) -> LossAggregates:
    """Downstream losses g_j = sum r l and eta_j = sum x l over lines below node j."""
    g = np.zeros(net.n + 1)
    eta = np.zeros(net.n + 1)
    for k in range(net.n, 0, -1):
        j = net.parent[k]
        g[j] += net.r[k] * state.l[k] + g[k]
        eta[j] += net.x[k] * state.l[k] + eta[k]
    return LossAggregates(g=g, eta=eta)


def linear_voltage_error(net: Network, state: PowerFlowState) -> np.ndarray:
    """Over-estimate of squared voltage by the linear model, per node (root included).

    Accumulates ``2 (r g + x eta) + |z|^2 l`` over the lines on each node's root
    path, where g and eta are the losses downstream of the line's far end.
    """
    agg = loss_aggregates(net, state)
    z2 = net.z2
    err = np.zeros(net.n + 1)
    for j in range(1, net.n + 1):
        err[j] = err[net.parent[j]] + (
            2.0 * (net.r[j] * agg.g[j] + net.x[j] * agg.eta[j]) + z2[j] * state.l[j]
        )
    return err


lemma1_voltage_error = linear_voltage_error
