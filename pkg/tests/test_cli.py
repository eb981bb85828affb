import csv
import json

import numpy as np
import pytest

from radial_opf.cli import main
from radial_opf.network import network_to_dict
from radial_opf.scenario import (
    EXIT_INVALID,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    OpfConfig,
    Scenario,
    derive_injection_box,
    run_scenario,
    scale_loads,
)

from conftest import chain, make_net

FAST = {"step_u": 0.05, "step_mu": 1.0, "delta": 1e-8, "epsilon": 1e-6}


@pytest.fixture
def files(tmp_path):
    # five-node feeder whose far end sags below 0.95 p.u. at nominal load
    net = make_net([0, 1, 2, 1, 4], [0.03] * 5, [0.03] * 5, [-0.3, -0.2, -0.4, -0.2, -0.3], [-0.1] * 5, v0=1.05**2)
    (tmp_path / "net.json").write_text(json.dumps(network_to_dict(net)))
    clustering = {"subtrees": [{"root": "2", "nodes": ["2", "3"]}, {"root": "4", "nodes": ["4", "5"]}], "unclustered": ["1"]}
    (tmp_path / "clu.json").write_text(json.dumps(clustering))
    (tmp_path / "cfg.json").write_text(json.dumps(FAST))
    return tmp_path


def run(files, *extra, out="out"):
    argv = ["run", "--network", str(files / "net.json"), "--config", str(files / "cfg.json"), "--out", str(files / out)]
    return main(argv + list(extra))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_no_control_reports_undervoltage(files):
    assert run(files, "--mode", "none") == EXIT_OK
    summary = json.loads((files / "out" / "summary.json").read_text())
    assert summary["min_voltage"] < 0.95 and summary["termination"] == "no-control"
    rows = read_csv(files / "out" / "trajectory.csv")
    assert len(rows) == 2 and rows[0][:4] == ["iteration", "step_norm", "objective", "max_violation_sq"]


def test_improved_lifts_voltages_and_writes_outputs(files):
    assert run(files, "--mode", "improved") == EXIT_OK
    out = files / "out"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["min_voltage"] >= 0.95 - 1e-4
    assert summary["iterations_to_delta"] == summary["iterations"] > 1
    volts = read_csv(out / "voltages_final.csv")
    traj = read_csv(out / "trajectory.csv")
    assert volts[0] == ["node", "voltage_pu"] and len(volts) == 7
    assert int(traj[-1][0]) == summary["iterations"]
    # voltages_final is the square root of the last trajectory record
    last_v = [float(x) for x in traj[-1][4:]]
    np.testing.assert_allclose([float(r[1]) for r in volts[2:]], np.sqrt(last_v), atol=1e-12, rtol=0)
    assert not (out / "messages.csv").exists()


def test_outputs_are_byte_identical_across_runs(files):
    for out in ("a", "b"):
        assert run(files, "--mode", "linear", out=out) == EXIT_OK
    for name in ("voltages_final.csv", "trajectory.csv"):
        assert (files / "a" / name).read_bytes() == (files / "b" / name).read_bytes()


def test_hierarchical_run_logs_messages(files):
    code = run(files, "--mode", "improved", "--hierarchical", "--clustering", str(files / "clu.json"))
    assert code == EXIT_OK
    rows = read_csv(files / "out" / "messages.csv")
    assert rows[0] == ["iteration", "sender", "receiver", "tag", "size"]
    first = [r for r in rows[1:] if r[0] == "1"]
    tags = [r[3] for r in first]
    assert tags.count("rc->cc") == 2 and tags.count("cc->rc") == 2 and tags.count("cc->node") == 1
    assert tags.count("rc->node") == 4
    summary = json.loads((files / "out" / "summary.json").read_text())
    assert summary["hierarchical"] and summary["min_voltage"] >= 0.95 - 1e-4


def test_iteration_budget_exhaustion_has_its_own_exit_code(files):
    (files / "short.json").write_text(json.dumps({**FAST, "max_iter": 5}))
    argv = ["run", "--network", str(files / "net.json"), "--config", str(files / "short.json"), "--mode", "improved"]
    assert main(argv + ["--out", str(files / "o")]) == EXIT_NOT_CONVERGED
    assert json.loads((files / "o" / "summary.json").read_text())["iterations_to_delta"] is None


@pytest.mark.parametrize(
    "extra",
    [
        ["--mode", "improved", "--hierarchical"],
        ["--mode", "fd", "--hierarchical", "--clustering", "CLU"],
    ],
)
def test_inconsistent_options_are_invalid(files, extra):
    extra = [str(files / "clu.json") if a == "CLU" else a for a in extra]
    assert run(files, *extra) == EXIT_INVALID


def test_bad_files_are_invalid(files):
    (files / "bad.json").write_text("{")
    assert main(["run", "--network", str(files / "bad.json"), "--mode", "none", "--out", str(files / "o")]) == EXIT_INVALID
    bad_clu = {"subtrees": [{"root": "1", "nodes": ["1"]}, {"root": "2", "nodes": ["2", "3"]}], "unclustered": ["4", "5"]}
    (files / "badclu.json").write_text(json.dumps(bad_clu))
    code = run(files, "--mode", "improved", "--hierarchical", "--clustering", str(files / "badclu.json"))
    assert code == EXIT_INVALID
    (files / "cfg2.json").write_text(json.dumps({"not_a_key": 1}))
    argv = ["run", "--network", str(files / "net.json"), "--config", str(files / "cfg2.json"), "--mode", "none"]
    assert main(argv + ["--out", str(files / "o")]) == EXIT_INVALID


def test_validate_command(files, capsys):
    assert main(["validate", "--network", str(files / "net.json"), "--clustering", str(files / "clu.json")]) == EXIT_OK
    assert "clustering ok" in capsys.readouterr().out
    (files / "c2.json").write_text(json.dumps({"subtrees": [{"root": "1", "nodes": ["1", "2"]}], "unclustered": ["3", "4", "5"]}))
    assert main(["validate", "--network", str(files / "net.json"), "--clustering", str(files / "c2.json")]) == EXIT_INVALID
    assert "assumption-2" in capsys.readouterr().out


def test_shipped_feeders_resolve_by_name(capsys):
    assert main(["validate", "--network", "ieee123_style", "--clustering", "ieee123_style_clustering"]) == EXIT_OK
    assert "123 non-root nodes" in capsys.readouterr().out


def test_mode_and_scale_can_come_from_config(files):
    (files / "cfg3.json").write_text(json.dumps({**FAST, "mode": "none", "load_scale": 0.5}))
    argv = ["run", "--network", str(files / "net.json"), "--config", str(files / "cfg3.json"), "--out", str(files / "o")]
    assert main(argv) == EXIT_OK
    summary = json.loads((files / "o" / "summary.json").read_text())
    assert summary["mode"] == "none" and summary["load_scale"] == 0.5 and summary["min_voltage"] > 0.95


# -- protocol helpers ----------------------------------------------------------


def test_scale_loads():
    net = chain(3, p=-0.1, q=-0.05)
    assert scale_loads(net, 1.0) is net
    doubled = scale_loads(net, 2.0)
    np.testing.assert_allclose(doubled.p_nom, 2 * net.p_nom)
    np.testing.assert_array_equal(doubled.r, net.r)
    with pytest.raises(ValueError):
        scale_loads(net, 0.0)


def test_injection_box_rule():
    net = make_net([0, 1, 2], [0.01] * 3, [0.01] * 3, [-0.1, 0.0, 0.2], [-0.05, -0.02, 0.0], controllable=[True, True, True])
    box = derive_injection_box(net)
    assert box.p_min[0] == pytest.approx(-0.1) and box.p_max[0] == pytest.approx(-0.03)
    assert box.q_min[0] == pytest.approx(-0.05) and box.q_max[0] == pytest.approx(-0.015)
    assert box.controllable.tolist() == [True, False, False]
    assert box.p_min[1] == box.p_max[1] == 0.0 and box.q_min[1] == box.q_max[1] == -0.02
    assert np.all(box.p_min <= box.p_max) and np.all(box.q_min <= box.q_max)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError):
        OpfConfig.from_dict({"stepsize": 1})


def test_run_scenario_api(files):
    res = run_scenario(Scenario(network=str(files / "net.json"), mode="linear", out=str(files / "api"), config=OpfConfig(**FAST)))
    assert res.exit_code == EXIT_OK and res.trajectory.converged
