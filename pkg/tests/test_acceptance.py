"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v``. The
printed lines appear live even under output capture.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from radial_opf.gradients import finite_difference_sensitivity, improved_sensitivity, linear_sensitivity
from radial_opf.hierarchy import Clustering, assemble_alpha_beta, parse_clustering, run_hierarchical, validate_clustering
from radial_opf.network import build_path_index
from radial_opf.opf import DualState, run_centralized
from radial_opf.powerflow import (
    InjectionVector,
    lemma1_voltage_error,
    max_residual,
    solve_linear,
    solve_nonlinear,
)
from radial_opf.scenario import OpfConfig, build_problem, shipped_path

from conftest import make_net, random_tree, shipped, tune_min_voltage
from oracles import distflow_nlp, three_node_instance
from test_hierarchy import random_clustering

VMIN = 0.95


@pytest.fixture
def report(capsys):
    def emit(criterion: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}", flush=True)
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def random_instances():
    rng = np.random.default_rng(20240601)
    nets = []
    for _ in range(50):
        n = int(rng.integers(5, 51))
        target = float(rng.uniform(0.90, 0.98))
        nets.append(tune_min_voltage(random_tree(rng, n, v0=1.0), target))
    return nets


@pytest.fixture(scope="module")
def study123():
    """Scenario runs on the 123-node-style feeder at twice the nominal load."""
    net = shipped("ieee123_style", 2.0)
    prob = build_problem(net, OpfConfig())
    out = {"net": net, "prob": prob}
    out["none"] = solve_nonlinear(net, InjectionVector.nominal(net)).v
    for mode in ("linear", "improved"):
        t0 = time.perf_counter()
        traj = run_centralized(prob, mode)
        out[mode] = traj
        out[mode + "_seconds"] = time.perf_counter() - t0
    return out


def min_v(v):
    return float(np.sqrt(np.min(v[1:])))


# 1 ----------------------------------------------------------------------------


def test_criterion_1_linear_error_identity(report, random_instances):
    worst, lowest = 0.0, np.inf
    t0 = time.perf_counter()
    for net in random_instances:
        u = InjectionVector.nominal(net)
        s = solve_nonlinear(net, u)
        err = lemma1_voltage_error(net, s)
        diff = solve_linear(net, u).v - s.v
        worst = max(worst, float(np.max(np.abs(err - diff))))
        lowest = min(lowest, float(err.min()))
    seconds = time.perf_counter() - t0
    ok = worst <= 1e-8 and lowest >= -1e-12 and seconds < 5.0
    report("1", ok, f"max |formula - (linear - nonlinear)| = {worst:.2e} (<= 1e-8), min error {lowest:.2e} (>= -1e-12), {seconds:.2f} s (< 5 s)")


# 2 ----------------------------------------------------------------------------


def test_criterion_2_power_flow_residuals(report, random_instances, study123):
    worst = 0.0
    cases = [(net, InjectionVector.nominal(net)) for net in random_instances]
    for stem, scale in (("ieee37_style", 1.0), ("ieee37_style", 6.0), ("ieee123_style", 1.0), ("ieee123_style", 2.0)):
        net = shipped(stem, scale)
        cases.append((net, InjectionVector.nominal(net)))
    net = study123["net"]
    cases += [(net, u) for u in study123["improved"].u[::50]]
    for net, u in cases:
        s = solve_nonlinear(net, u)
        worst = max(worst, max_residual(net, u, s))
    report("2", worst <= 1e-10, f"max DistFlow residual over {len(cases)} solves = {worst:.2e} (<= 1e-10)")


# 3 ----------------------------------------------------------------------------


def test_criterion_3_linear_gradient_exactness(report):
    worst = 0.0
    for stem in ("ieee37_style", "ieee123_style"):
        net = shipped(stem)
        idx = build_path_index(net)
        fd = finite_difference_sensitivity(net, InjectionVector.nominal(net), solver=solve_linear)
        worst = max(worst, float(np.max(np.abs(fd.dv_dp - idx.R[1:, 1:]))), float(np.max(np.abs(fd.dv_dq - idx.X[1:, 1:]))))
    report("3", worst <= 1e-9, f"max |FD(linear model) - (R, X)| = {worst:.2e} (<= 1e-9)")


# 4 ----------------------------------------------------------------------------


def test_criterion_4_improved_gradient_dominance(report):
    ratios = {}
    t0 = time.perf_counter()
    for stem, scale in (("ieee37_style", 6.0), ("ieee123_style", 2.0)):
        net = shipped(stem, scale)
        idx = build_path_index(net)
        u = InjectionVector.nominal(net)
        s = solve_nonlinear(net, u)
        fd = finite_difference_sensitivity(net, u, step=1e-5)
        imp = improved_sensitivity(net, idx, s)
        lin = linear_sensitivity(idx)
        e_imp = np.linalg.norm(np.hstack([imp.dv_dp - fd.dv_dp, imp.dv_dq - fd.dv_dq]))
        e_lin = np.linalg.norm(np.hstack([lin.dv_dp - fd.dv_dp, lin.dv_dq - fd.dv_dq]))
        ratios[stem] = e_imp / e_lin
    seconds = time.perf_counter() - t0
    ok = all(r <= 0.95 for r in ratios.values()) and seconds < 60
    detail = ", ".join(f"{k}: ||imp-FD||/||lin-FD|| = {r:.4f}" for k, r in ratios.items())
    report("4", ok, f"{detail} (need <= 0.95), {seconds:.1f} s (< 60 s)")


# 5 ----------------------------------------------------------------------------


@pytest.mark.parametrize("stem, scale", [("ieee37_style", 6.0), ("ieee123_style", 2.0)])
def test_criterion_5_hierarchical_equals_centralized(report, stem, scale):
    net = shipped(stem, scale)
    clustering = parse_clustering(shipped_path(f"{stem}_clustering.json"), net)
    idx = build_path_index(net)
    s = solve_nonlinear(net, InjectionVector.nominal(net))
    sens = improved_sensitivity(net, idx, s)
    rng = np.random.default_rng(5)
    worst_rel = 0.0
    for _ in range(20):
        duals = DualState(rng.random(net.n), rng.random(net.n))
        a, b, _ = assemble_alpha_beta(net, clustering, s, duals, idx)
        ra, rb = sens.dv_dp.T @ duals.net, sens.dv_dq.T @ duals.net
        worst_rel = max(worst_rel, float(np.max(np.abs(a - ra) / np.abs(ra))), float(np.max(np.abs(b - rb) / np.abs(rb))))

    prob = build_problem(net, OpfConfig(max_iter=2000, delta=1e-300))
    ref = run_centralized(prob, "improved")
    traj, _ = run_hierarchical(prob, clustering)
    steps = min(ref.iterations, traj.iterations)
    drift = max(float(np.linalg.norm(traj.u[t].stacked() - ref.u[t].stacked())) for t in range(steps))
    ok = worst_rel <= 1e-9 and drift <= 1e-6 and ref.iterations == traj.iterations == 2000
    report(
        f"5 ({stem})",
        ok,
        f"alpha/beta max relative deviation {worst_rel:.2e} (<= 1e-9); max ||u_hier - u_cent|| over {steps} iterations {drift:.2e} (<= 1e-6)",
    )


# 6 ----------------------------------------------------------------------------


def test_criterion_6a_no_control_violates(report, study123):
    v = min_v(study123["none"])
    report("6a", v < VMIN, f"no-control min voltage {v:.5f} p.u. (< 0.95)")


def test_criterion_6b_improved_lifts_voltages(report, study123):
    traj = study123["improved"]
    v = min_v(traj.final_v)
    per2000 = study123["improved_seconds"] / traj.iterations * 2000
    report(
        "6b",
        v >= VMIN - 1e-4 and per2000 < 120,
        f"improved final min voltage {v:.7f} p.u. (>= 0.9499) after {traj.iterations} iterations ({traj.termination}); {per2000:.1f} s per 2000 iterations (< 120 s)",
    )


def test_criterion_6c_linear_leaves_violations(report, study123):
    v_lin = min_v(study123["linear"].final_v)
    v_imp = min_v(study123["improved"].final_v)
    below = int(np.sum(np.sqrt(study123["linear"].final_v[1:]) < VMIN))
    ok = v_lin < v_imp and below >= 1
    report("6c", ok, f"linear final min voltage {v_lin:.9f} vs improved {v_imp:.9f} (need linear < improved); linear nodes below 0.95: {below} (need >= 1)")


# 7 ----------------------------------------------------------------------------


def test_criterion_7_convergence(report, study123):
    imp, lin = study123["improved"], study123["linear"]
    ok = imp.converged and imp.iterations <= 5000 and imp.step_norm[-1] < 1e-6 and imp.iterations <= 1.1 * lin.iterations
    report(
        "7",
        ok,
        f"improved stops at iteration {imp.iterations} ({imp.termination}, last step {imp.step_norm[-1]:.1e}); linear at {lin.iterations} ({lin.termination}); need improved <= 5000 and <= 1.1 x linear",
    )


# 8 ----------------------------------------------------------------------------


def test_criterion_8_clustering_validator(report):
    net = make_net([0, 1, 2, 2, 1, 5], [0.01] * 6, [0.02] * 6, [-0.1] * 6, [-0.05] * 6)
    left = Clustering.from_sets([(3, [3]), (4, [4]), (5, [5, 6])], [1, 2])
    right = Clustering.from_sets([(1, [1, 2, 5, 6]), (3, [3, 4])], [])
    left_ok = validate_clustering(net, left).ok
    right_report = validate_clustering(net, right)
    right_caught = "assumption-2" in right_report.kinds()

    rng = np.random.default_rng(8)
    detected = 0
    for _ in range(100):
        tree = random_tree(rng, int(rng.integers(4, 40)))
        cl = random_clustering(rng, tree)
        assert validate_clustering(tree, cl).ok
        parts = [list(s.nodes) for s in cl.subtrees] + [list(cl.unclustered)]
        a = int(rng.choice([k for k, p in enumerate(parts) if p]))
        node = int(rng.choice(parts[a]))
        b = int(rng.choice([k for k in range(len(parts)) if k != a]))
        parts[a].remove(node)
        parts[b].append(node)
        moved = Clustering.from_sets([(s.root, parts[k]) for k, s in enumerate(cl.subtrees)], parts[-1])
        detected += not validate_clustering(tree, moved).ok
    ok = left_ok and right_caught and detected == 100
    report("8", ok, f"left pattern valid: {left_ok}; right pattern flagged: {right_caught}; fuzz detections {detected}/100")


# 9 ----------------------------------------------------------------------------


def test_criterion_9_small_instance_optimality(report):
    prob = three_node_instance()
    assert prob.delta == 1e-8 and prob.epsilon == 1e-6
    traj = run_centralized(prob, "fd")
    f_ref, *_ = distflow_nlp(prob)
    rel = abs(traj.objective[-1] - f_ref) / f_ref
    report("9", traj.converged and rel <= 1e-4, f"fd-mode objective {traj.objective[-1]:.8f} vs NLP {f_ref:.8f}, relative gap {rel:.2e} (<= 1e-4), {traj.iterations} iterations")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
