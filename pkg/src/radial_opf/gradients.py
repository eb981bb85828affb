"""Voltage sensitivities dv/du: linear model, improved evaluation, finite differences.

Sensitivity matrices are N x N over non-root nodes: entry ``[j-1, h-1]`` is
the derivative of v_j with respect to p_h (or q_h).

The improved evaluation keeps the linear-model structure but corrects each
row j with the measured flow on the line (i, j) into j::

    dv_j/dp_h = R_jh - (|z_ij|^2 l_ij / v_i) R_ih - (2 |z_ij|^2 P_ij / v_i) 1(j on path of h)
    dv_j/dq_h = X_jh - (|z_ij|^2 l_ij / v_i) X_ih - (2 |z_ij|^2 Q_ij / v_i) 1(j on path of h)

where i is the parent of j and the state-dependent factors come from the
nonlinear (measured) operating point.
"""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from .network import Network, PathIndex
from .powerflow import (
    DEFAULT_TOL,
    InjectionVector,
    PowerFlowState,
    solve_nonlinear,
)

Mode = Literal["linear", "improved", "finite-difference"]
DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class SensitivityMatrices:
    dv_dp: np.ndarray
    dv_dq: np.ndarray
    mode: Mode
    state: Optional[PowerFlowState] = None


@dataclass(frozen=True)
class CurrentSensitivities:
    """Rows are lines (indexed by downstream node 1..N), columns are nodes 1..N."""

    dl_dp: np.ndarray
    dl_dq: np.ndarray


def linear_sensitivity(idx: PathIndex) -> SensitivityMatrices:
    return SensitivityMatrices(dv_dp=idx.R[1:, 1:].copy(), dv_dq=idx.X[1:, 1:].copy(), mode="linear")


def _parent_voltage(net: Network, state: PowerFlowState, rows: np.ndarray) -> np.ndarray:
    vi = state.v[net.parent[rows]]
    if np.any(vi <= 0):
        raise ValueError("nonpositive parent voltage in state")
    return vi


def current_sensitivity(net: Network, idx: PathIndex, state: PowerFlowState) -> CurrentSensitivities:
    """Approximate dl_ij/du_h with linear-model flow and voltage derivatives."""
    j = np.arange(1, net.n + 1)
    i = net.parent[j]
    vi = _parent_voltage(net, state, j)[:, None]
    ind = idx.on_path[1:, 1:].astype(float)
    dl_dp = -(2.0 * state.P[j][:, None] * ind + state.l[j][:, None] * idx.R[i, 1:]) / vi
    dl_dq = -(2.0 * state.Q[j][:, None] * ind + state.l[j][:, None] * idx.X[i, 1:]) / vi
    return CurrentSensitivities(dl_dp=dl_dp, dl_dq=dl_dq)


def improved_block(
    net: Network,
    idx: PathIndex,
    state: PowerFlowState,
    rows: Sequence[int],
    cols: Sequence[int],
) -> tuple[np.ndarray, np.ndarray]:
    """Improved dv_j/dp_h and dv_j/dq_h for node ids ``rows`` x ``cols``.

    Only the line into each row node and the common-path quantities of the
    requested columns are touched, which is what a regional controller holds.
    """
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    if rows.size == 0 or cols.size == 0:
        return np.zeros((rows.size, cols.size)), np.zeros((rows.size, cols.size))
    i = net.parent[rows]
    vi = _parent_voltage(net, state, rows)
    z2 = net.z2[rows]
    loss_w = (z2 * state.l[rows] / vi)[:, None]
    flow_p = (2.0 * z2 * state.P[rows] / vi)[:, None]
    flow_q = (2.0 * z2 * state.Q[rows] / vi)[:, None]
    ind = idx.on_path[np.ix_(rows, cols)]
    dp = idx.R[np.ix_(rows, cols)] - loss_w * idx.R[np.ix_(i, cols)] - flow_p * ind
    dq = idx.X[np.ix_(rows, cols)] - loss_w * idx.X[np.ix_(i, cols)] - flow_q * ind
    return dp, dq


def improved_sensitivity(net: Network, idx: PathIndex, state: PowerFlowState) -> SensitivityMatrices:
    nodes = np.arange(1, net.n + 1)
    dp, dq = improved_block(net, idx, state, nodes, nodes)
    return SensitivityMatrices(dv_dp=dp, dv_dq=dq, mode="improved", state=state)


def finite_difference_sensitivity(
    net: Network,
    u: InjectionVector,
    step: float = DEFAULT_FD_STEP,
    solver: Optional[Callable[[Network, InjectionVector], PowerFlowState]] = None,
    executor: Optional[Executor] = None,
) -> SensitivityMatrices:
    """Central differences of the voltage map, one column per injection coordinate.

    ``solver`` defaults to the nonlinear solve at the default tolerance; pass
    :func:`solve_linear` to difference the linear model instead. Columns are
    independent, so an ``executor`` may evaluate them concurrently; the output
    is assembled by coordinate and does not depend on scheduling.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if solver is None:
        solver = lambda n_, u_: solve_nonlinear(n_, u_, tol=DEFAULT_TOL)  # noqa: E731
    n = net.n
    base = u.stacked()

    def column(k: int) -> np.ndarray:
        e = np.zeros(2 * n)
        e[k] = step
        hi = solver(net, InjectionVector.from_stacked(base + e)).v[1:]
        lo = solver(net, InjectionVector.from_stacked(base - e)).v[1:]
        return (hi - lo) / (2.0 * step)

    ks = range(2 * n)
    cols = list(executor.map(column, ks)) if executor is not None else [column(k) for k in ks]
    J = np.column_stack(cols)
    state = solver(net, u)
    return SensitivityMatrices(dv_dp=J[:, :n], dv_dq=J[:, n:], mode="finite-difference", state=state)
