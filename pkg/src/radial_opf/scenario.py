"""Experiment protocol: load scaling, injection boxes, OPF configuration and scenario runs.

The defaults reproduce the curtailment study: root voltage 1.05 p.u., safe
band [0.95, 1.05] p.u., load nodes may shed up to 70% of their nominal
demand, and the objective penalizes deviation from nominal demand.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .hierarchy import ClusteringError, MessageLog, parse_clustering, run_hierarchical, validate_clustering
from .network import InjectionBox, Network, NetworkError, parse_network
from .opf import OpfProblem, Trajectory, max_violation, objective_and_gradient, project_box, run_centralized
from .powerflow import InjectionVector, PowerFlowError, solve_nonlinear

logger = logging.getLogger(__name__)

MODES = ("none", "linear", "improved", "fd")
SHIPPED_FEEDERS = ("ieee37_style", "ieee123_style")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INVALID = 3
EXIT_SOLVER_FAILURE = 4


@dataclass
class OpfConfig:
    """User-facing OPF settings. Voltages are magnitudes in p.u.; they are squared internally."""

    v_min_pu: float = 0.95
    v_max_pu: float = 1.05
    step_u: float = 2e-3
    step_mu: float = 1e-3
    epsilon: float = 1e-4
    delta: float = 1e-6
    max_iter: int = 5000
    box_upper_fraction: float = 0.3
    solver_tol: float = 1e-10
    fd_step: float = 1e-5
    mode: Optional[str] = None
    load_scale: Optional[float] = None

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "OpfConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "OpfConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def scale_loads(net: Network, factor: float) -> Network:
    """Multiply every nominal injection by ``factor``; topology and impedances are unchanged."""
    if not factor > 0:
        raise ValueError("load scaling factor must be positive")
    if factor == 1:
        return net
    return net.replace(p_nom=net.p_nom * factor, q_nom=net.q_nom * factor)


def derive_injection_box(net: Network, upper_fraction: float = 0.3) -> InjectionBox:
    """Curtailment box ``nominal <= u <= upper_fraction * nominal`` at load nodes.

    A node is controllable when its file flag is set and its nominal active
    power is a strict load (p < 0). A coordinate whose nominal value is not
    negative is pinned at that value. Everything else is pinned at nominal.
    """
    if not 0 <= upper_fraction < 1:
        raise ValueError("upper_fraction must lie in [0, 1)")
    p = net.p_nom[1:].astype(float)
    q = net.q_nom[1:].astype(float)
    ctrl = net.controllable[1:] & (p < 0)
    p_max = np.where(ctrl & (p < 0), upper_fraction * p, p)
    q_max = np.where(ctrl & (q < 0), upper_fraction * q, q)
    return InjectionBox(p_min=p.copy(), p_max=p_max, q_min=q.copy(), q_max=q_max, controllable=ctrl)


def build_problem(net: Network, config: OpfConfig | None = None) -> OpfProblem:
    """OPF instance for ``net`` (already load-scaled) under the curtailment protocol."""
    cfg = config or OpfConfig()
    box = derive_injection_box(net, cfg.box_upper_fraction)
    n = net.n
    return OpfProblem(
        network=net,
        box=box,
        v_min=np.full(n, cfg.v_min_pu**2),
        v_max=np.full(n, cfg.v_max_pu**2),
        p_target=net.p_nom[1:].copy(),
        q_target=net.q_nom[1:].copy(),
        weights=box.controllable.astype(float),
        epsilon=cfg.epsilon,
        step_u=cfg.step_u,
        step_mu=cfg.step_mu,
        delta=cfg.delta,
        max_iter=cfg.max_iter,
        solver_tol=cfg.solver_tol,
        fd_step=cfg.fd_step,
    )


# --------------------------------------------------------------------------
# shipped data


def shipped_path(name: str) -> Path:
    """Path of a shipped data file, e.g. ``ieee123_style.json``."""
    return Path(str(resources.files("radial_opf") / "data" / name))


def resolve_input(path_or_name: str, suffix: str = ".json") -> Path:
    """A real path wins; otherwise a shipped stem such as ``ieee37_style`` (or ``..._clustering``)."""
    p = Path(path_or_name)
    if p.exists():
        return p
    cand = shipped_path(p.name if p.suffix else p.name + suffix)
    return cand if cand.exists() else p


# --------------------------------------------------------------------------
# scenario runs


@dataclass
class Scenario:
    network: str
    mode: str
    out: str
    clustering: Optional[str] = None
    hierarchical: bool = False
    load_scale: float = 1.0
    config: OpfConfig = field(default_factory=OpfConfig)


@dataclass
class ScenarioResult:
    exit_code: int
    summary: dict
    trajectory: Optional[Trajectory] = None
    messages: Optional[MessageLog] = None


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fail(message: str, code: int) -> ScenarioResult:
    logger.error(message)
    return ScenarioResult(code, {"error": message, "exit_code": code})


def run_scenario(s: Scenario) -> ScenarioResult:
    """Run one scenario and write its CSV/JSON outputs into ``s.out``."""
    if s.mode not in MODES:
        return _fail(f"unknown mode {s.mode!r}; choose from {', '.join(MODES)}", EXIT_INVALID)
    if s.hierarchical and s.mode not in ("linear", "improved"):
        return _fail("hierarchical runs need mode 'linear' or 'improved'", EXIT_INVALID)
    if s.hierarchical and not s.clustering:
        return _fail("hierarchical runs need a clustering file", EXIT_INVALID)
    try:
        net = scale_loads(parse_network(resolve_input(s.network)), s.load_scale)
        clustering = None
        if s.clustering:
            clustering = parse_clustering(resolve_input(s.clustering), net)
            report = validate_clustering(net, clustering)
            if not report.ok:
                return _fail(f"invalid clustering:\n{report}", EXIT_INVALID)
        prob = build_problem(net, s.config)
    except (NetworkError, ClusteringError, ValueError, OSError) as exc:
        return _fail(str(exc), EXIT_INVALID)

    out = Path(s.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traj: Optional[Trajectory] = None
    log: Optional[MessageLog] = None
    try:
        if s.mode == "none":
            u = InjectionVector.nominal(net)
            v = solve_nonlinear(net, u, tol=prob.solver_tol).v
        elif s.hierarchical:
            traj, log = run_hierarchical(prob, clustering, mode=s.mode)
        else:
            traj = run_centralized(prob, s.mode)
    except PowerFlowError as exc:
        return _fail(f"power flow failed: {exc}", EXIT_SOLVER_FAILURE)
    wall = time.perf_counter() - t0

    if traj is not None:
        u, v = traj.final_u, traj.final_v
        code = {"converged": EXIT_OK, "max_iter": EXIT_NOT_CONVERGED}.get(traj.termination, EXIT_SOLVER_FAILURE)
    else:
        code = EXIT_OK

    mag = np.sqrt(v)
    _write_csv(out / "voltages_final.csv", ["node", "voltage_pu"], ([nm, _fmt(m)] for nm, m in zip(net.names, mag)))
    _write_trajectory(out / "trajectory.csv", prob, u if traj is None else None, v, traj)
    if log is not None:
        _write_csv(
            out / "messages.csv",
            ["iteration", "sender", "receiver", "tag", "size"],
            ([t, m.sender, m.receiver, m.tag, m.size] for t, m in log.records()),
        )

    below = mag[1:] < s.config.v_min_pu
    summary = {
        "network": str(s.network),
        "mode": s.mode,
        "hierarchical": s.hierarchical,
        "load_scale": s.load_scale,
        "nodes": net.n,
        "min_voltage": float(mag[1:].min()),
        "min_voltage_node": net.names[1 + int(np.argmin(mag[1:]))],
        "max_voltage": float(mag[1:].max()),
        "nodes_below_min": int(below.sum()),
        "max_violation_sq": max_violation(prob, v[1:]),
        "objective": objective_and_gradient(prob, u)[0],
        "iterations": 0 if traj is None else traj.iterations,
        "iterations_to_delta": (traj.iterations if traj is not None and traj.converged else None),
        "termination": "no-control" if traj is None else traj.termination,
        "error": None if traj is None else traj.error,
        "wall_time_s": wall,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "exit_code": code,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return ScenarioResult(code, summary, traj, log)


def _write_trajectory(path: Path, prob: OpfProblem, u_fixed, v_fixed, traj: Optional[Trajectory]) -> None:
    """One row per iterate; row 0 is the starting point."""
    names = prob.network.names[1:]
    header = ["iteration", "step_norm", "objective", "max_violation_sq"] + [f"v_{nm}" for nm in names]

    def row(t, step, u, v):
        return [t, _fmt(step), _fmt(objective_and_gradient(prob, u)[0]), _fmt(max_violation(prob, v[1:]))] + [
            _fmt(x) for x in v[1:]
        ]

    if traj is None:
        rows = [row(0, 0.0, u_fixed, v_fixed)]
    else:
        rows = [row(0, 0.0, traj.u0, traj.v0)]
        rows += [row(t + 1, traj.step_norm[t], traj.u[t], traj.v[t]) for t in range(traj.iterations)]
    _write_csv(path, header, rows)
