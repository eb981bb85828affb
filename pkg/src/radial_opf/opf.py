"""Voltage-constrained OPF and its primal-dual gradient solution.

The iteration is feedback based: the voltages entering the dual update and
the flows entering the improved sensitivities come from the nonlinear power
flow at the current decision (the "measurement"). Only the sensitivity
evaluation changes between modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Optional

import numpy as np

from .gradients import (
    DEFAULT_FD_STEP,
    SensitivityMatrices,
    finite_difference_sensitivity,
    improved_sensitivity,
    linear_sensitivity,
)
from .network import InjectionBox, Network, PathIndex, build_path_index
from .powerflow import (
    DEFAULT_TOL,
    InjectionVector,
    PowerFlowError,
    PowerFlowState,
    solve_nonlinear,
)

logger = logging.getLogger(__name__)

GradientMode = Literal["linear", "improved", "finite-difference"]
MODE_ALIASES = {"fd": "finite-difference"}


@dataclass(frozen=True, eq=False)
class OpfProblem:
    """OPF instance. Voltage limits are squared magnitudes over nodes 1..N.

    The objective is ``sum_h w_h ((p_h - p*_h)^2 + (q_h - q*_h)^2)``.
    """

    network: Network
    box: InjectionBox
    v_min: np.ndarray
    v_max: np.ndarray
    p_target: np.ndarray
    q_target: np.ndarray
    weights: np.ndarray
    epsilon: float = 1e-4
    step_u: float = 2e-3
    step_mu: float = 1e-3
    delta: float = 1e-6
    max_iter: int = 5000
    solver_tol: float = DEFAULT_TOL
    fd_step: float = DEFAULT_FD_STEP
    path_index: PathIndex = field(init=False, repr=False)

    def __post_init__(self):
        n = self.network.n
        for name in ("v_min", "v_max", "p_target", "q_target", "weights"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.box.p_min) != n:
            raise ValueError("injection box does not match the network size")
        if not np.all(self.v_min < self.v_max):
            raise ValueError("voltage limits need v_min < v_max")
        for name in ("epsilon", "step_u", "step_mu", "delta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "path_index", build_path_index(self.network))

    def with_options(self, **changes) -> "OpfProblem":
        return replace(self, **changes)

    @property
    def n(self) -> int:
        return self.network.n


@dataclass(frozen=True)
class DualState:
    mu_lo: np.ndarray
    mu_hi: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "DualState":
        return cls(np.zeros(n), np.zeros(n))

    @property
    def net(self) -> np.ndarray:
        """mu_hi - mu_lo, the weight on the voltage sensitivities in the primal step."""
        return self.mu_hi - self.mu_lo


@dataclass
class Trajectory:
    """Iteration history. Record t holds u(t), mu(t) and the voltages measured at u(t)
    for t = 1..T, with ``step_norm[t-1] = ||u(t) - u(t-1)||``."""

    u0: InjectionVector
    v0: np.ndarray
    u: list[InjectionVector] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    mu_lo: list[np.ndarray] = field(default_factory=list)
    mu_hi: list[np.ndarray] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    violation: list[float] = field(default_factory=list)
    step_norm: list[float] = field(default_factory=list)
    dual_step_norm: list[float] = field(default_factory=list)
    termination: str = "running"
    error: Optional[str] = None

    def append(self, u, v, duals: DualState, objective, violation, step_norm, dual_step_norm):
        self.u.append(u)
        self.v.append(v)
        self.mu_lo.append(duals.mu_lo)
        self.mu_hi.append(duals.mu_hi)
        self.objective.append(objective)
        self.violation.append(violation)
        self.step_norm.append(step_norm)
        self.dual_step_norm.append(dual_step_norm)

    @property
    def iterations(self) -> int:
        return len(self.u)

    @property
    def converged(self) -> bool:
        return self.termination == "converged"

    @property
    def final_u(self) -> InjectionVector:
        return self.u[-1] if self.u else self.u0

    @property
    def final_v(self) -> np.ndarray:
        """Squared voltages over nodes 0..N at the final decision."""
        return self.v[-1] if self.v else self.v0


# --------------------------------------------------------------------------
# building blocks


def objective_and_gradient(prob: OpfProblem, u: InjectionVector) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective value and its gradient (d/dp, d/dq) per node."""
    dp = u.p - prob.p_target
    dq = u.q - prob.q_target
    value = float(np.sum(prob.weights * (dp**2 + dq**2)))
    return value, 2.0 * prob.weights * dp, 2.0 * prob.weights * dq


def project_box(u: InjectionVector, box: InjectionBox) -> InjectionVector:
    return InjectionVector(np.clip(u.p, box.p_min, box.p_max), np.clip(u.q, box.q_min, box.q_max))


def voltage_gradient_terms(sens: SensitivityMatrices, duals: DualState) -> tuple[np.ndarray, np.ndarray]:
    """(dv/dp)^T (mu_hi - mu_lo) and (dv/dq)^T (mu_hi - mu_lo)."""
    w = duals.net
    return sens.dv_dp.T @ w, sens.dv_dq.T @ w


def primal_update(
    prob: OpfProblem, u: InjectionVector, alpha: np.ndarray, beta: np.ndarray
) -> InjectionVector:
    """Projected gradient step given the dual-weighted sensitivity sums alpha, beta."""
    _, gp, gq = objective_and_gradient(prob, u)
    raw = InjectionVector(u.p - prob.step_u * (gp + alpha), u.q - prob.step_u * (gq + beta))
    return project_box(raw, prob.box)


def primal_step(
    prob: OpfProblem, u: InjectionVector, duals: DualState, sens: SensitivityMatrices
) -> InjectionVector:
    alpha, beta = voltage_gradient_terms(sens, duals)
    return primal_update(prob, u, alpha, beta)


def dual_step(prob: OpfProblem, duals: DualState, v_measured: np.ndarray) -> DualState:
    """Projected dual ascent with regularization; ``v_measured`` is over nodes 1..N."""
    v = np.asarray(v_measured, dtype=float)
    s, eps = prob.step_mu, prob.epsilon
    mu_lo = np.maximum(duals.mu_lo + s * (prob.v_min - v - eps * duals.mu_lo), 0.0)
    mu_hi = np.maximum(duals.mu_hi + s * (v - prob.v_max - eps * duals.mu_hi), 0.0)
    return DualState(mu_lo, mu_hi)


def regularized_lagrangian(prob: OpfProblem, u: InjectionVector, duals: DualState, v: np.ndarray) -> float:
    f, _, _ = objective_and_gradient(prob, u)
    v = np.asarray(v, dtype=float)
    mu_sq = float(duals.mu_lo @ duals.mu_lo + duals.mu_hi @ duals.mu_hi)
    return (
        f
        + float(duals.mu_lo @ (prob.v_min - v))
        + float(duals.mu_hi @ (v - prob.v_max))
        - 0.5 * prob.epsilon * mu_sq
    )


def max_violation(prob: OpfProblem, v: np.ndarray) -> float:
    """Largest bound violation of squared voltages over nodes 1..N (0 if feasible)."""
    v = np.asarray(v, dtype=float)
    return float(max(0.0, np.max(prob.v_min - v), np.max(v - prob.v_max)))


def measure(prob: OpfProblem, u: InjectionVector) -> PowerFlowState:
    """Feedback: actuate ``u`` and read back the network state."""
    return solve_nonlinear(prob.network, u, tol=prob.solver_tol)


# --------------------------------------------------------------------------
# iteration

GradientTerms = Callable[[InjectionVector, PowerFlowState, DualState], tuple[np.ndarray, np.ndarray]]


def iterate(
    prob: OpfProblem,
    u0: InjectionVector,
    gradient_terms: GradientTerms,
    on_iteration: Optional[Callable[[int], None]] = None,
) -> Trajectory:
    """Run the primal-dual loop with a pluggable source of alpha/beta.

    ``gradient_terms(u, state, duals)`` returns the dual-weighted sensitivity
    sums at the current measured ``state``.
    """
    box = prob.box
    if np.any(u0.p < box.p_min) or np.any(u0.p > box.p_max) or np.any(u0.q < box.q_min) or np.any(u0.q > box.q_max):
        raise ValueError("initial point lies outside the injection box")
    state = measure(prob, u0)
    traj = Trajectory(u0=u0, v0=state.v)
    u, duals = u0, DualState.zeros(prob.n)
    for t in range(1, prob.max_iter + 1):
        alpha, beta = gradient_terms(u, state, duals)
        u_next = primal_update(prob, u, alpha, beta)
        duals_next = dual_step(prob, duals, state.v[1:])
        step = float(np.linalg.norm(u_next.stacked() - u.stacked()))
        dual_step_norm = float(
            np.linalg.norm(np.concatenate([duals_next.mu_lo - duals.mu_lo, duals_next.mu_hi - duals.mu_hi]))
        )
        duals = duals_next
        try:
            state = measure(prob, u_next)
        except PowerFlowError as exc:
            traj.termination = "solver_failure"
            traj.error = str(exc)
            logger.warning("feedback solve failed at iteration %d: %s", t, exc)
            return traj
        u = u_next
        traj.append(
            u,
            state.v,
            duals,
            objective_and_gradient(prob, u)[0],
            max_violation(prob, state.v[1:]),
            step,
            dual_step_norm,
        )
        if on_iteration is not None:
            on_iteration(t)
        # a zero primal step alone is not stationarity: u0 is often the unconstrained
        # optimum, so the projected dual gradient must vanish as well
        if step < prob.delta and dual_step_norm < prob.delta * prob.step_mu:
            traj.termination = "converged"
            return traj
    traj.termination = "max_iter"
    return traj


def sensitivity_provider(prob: OpfProblem, mode: str) -> Callable[[InjectionVector, PowerFlowState], SensitivityMatrices]:
    mode = MODE_ALIASES.get(mode, mode)
    if mode == "linear":
        fixed = linear_sensitivity(prob.path_index)
        return lambda u, state: fixed
    if mode == "improved":
        return lambda u, state: improved_sensitivity(prob.network, prob.path_index, state)
    if mode == "finite-difference":
        solver = lambda net, uu: solve_nonlinear(net, uu, tol=prob.solver_tol)  # noqa: E731
        return lambda u, state: finite_difference_sensitivity(prob.network, u, prob.fd_step, solver=solver)
    raise ValueError(f"unknown gradient mode {mode!r}")


def run_centralized(prob: OpfProblem, mode: str, u0: Optional[InjectionVector] = None) -> Trajectory:
    """Centralized primal-dual iteration; sensitivities refreshed every step (constant in linear mode)."""
    if u0 is None:
        u0 = project_box(InjectionVector.nominal(prob.network), prob.box)
    sens_at = sensitivity_provider(prob, mode)

    def terms(u, state, duals):
        return voltage_gradient_terms(sens_at(u, state), duals)

    return iterate(prob, u0, terms)
