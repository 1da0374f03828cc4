import json

import numpy as np
import pandas as pd
import pytest

import run_qoc_cli
from resonantqoc import const
from resonantqoc.utility.data_utils import load_cost_file, load_lift, load_report, save_control


def run(*argv) -> int:
    return run_qoc_cli.main(list(argv) + ["--quiet"])


def read(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_system(path, n, edges, bound="inf"):
    system = {
        "n": n,
        "energies": [float(j) for j in range(n)],
        "edges": [{"j": j, "k": k, "mu": 1.0, "bound": bound} for j, k in edges],
    }
    path.write_text(json.dumps(system))
    return str(path)


def test_check_reports_controllability(tmp_path, fixture_path):
    assert run("check", "--system", fixture_path("ladder3.json"), "--out", str(tmp_path)) == const.EXIT_OK
    report = read(tmp_path / "check.json")
    assert report["validation"]["ok"]
    assert report["controllable"] and report["transitive"]
    assert report["lie_rank"] == 8
    assert report["components"] == [[1, 2, 3]]
    assert report["isotropic"]


def test_check_reports_invalid_systems(tmp_path):
    system = write_system(tmp_path / "loop.json", 2, [(1, 1)])
    assert run("check", "--system", system, "--out", str(tmp_path)) == const.EXIT_OK
    report = read(tmp_path / "check.json")
    assert not report["validation"]["ok"]
    assert report["validation"]["violations"][0].startswith("self-loop")


def test_config_errors_exit_with_2(tmp_path, fixture_path):
    missing = str(tmp_path / "missing.json")
    assert run("simulate", "--system", missing, "--control", missing, "--out", str(tmp_path)) == const.EXIT_CONFIG
    assert run("check", "--system", fixture_path("ladder3.json"), "--epsilon", "-1",
               "--out", str(tmp_path)) == const.EXIT_CONFIG
    with pytest.raises(SystemExit):
        run("teleport", "--out", str(tmp_path))


def test_demo_counterexample(tmp_path):
    assert run("demo-counterexample", "--out", str(tmp_path)) == const.EXIT_OK
    for name in ("A", "B"):
        assert (tmp_path / f"pair_{name}_control.json").exists()
        assert (tmp_path / f"pair_{name}_trajectory.csv").exists()
    report = read(tmp_path / "counterexample.json")
    assert report["pair_A"]["verdict"]["status"] == const.RESONANT
    assert report["pair_B"]["verdict"]["status"] == const.NEITHER
    assert report["pair_B"]["path_deviation"] < 1e-10


def test_simulate_and_resonate(tmp_path, fixture_path, ladder_pairs):
    control = str(tmp_path / "control_B.json")
    save_control(ladder_pairs[1].control, control)
    system = fixture_path("ladder4_unit.json")

    out = tmp_path / "simulate"
    assert run("simulate", "--system", system, "--control", control, "--psi0", "e1", "--out", str(out)) == 0
    populations = pd.read_csv(out / "populations.csv")
    assert populations["p_2"].iloc[-1] == pytest.approx(1.0, abs=1e-10)
    summary = read(out / "summary.json")
    assert summary["flavor"] == "skew-H"
    assert summary["costs"]["energy"] == pytest.approx(np.pi)

    out = tmp_path / "resonate"
    assert run("resonate", "--system", system, "--control", control, "--out", str(out)) == 0
    verdict = read(out / "verdict.json")
    assert verdict["before"]["status"] == const.NEITHER
    assert verdict["after"]["status"] == const.RESONANT
    costs = pd.read_csv(out / "costs.csv").set_index("kind")
    assert costs.loc["energy", "after"] == pytest.approx(np.pi / 2)
    assert costs.loc["energy", "before"] == pytest.approx(np.pi)


def test_eliminate_drift(tmp_path, fixture_path):
    V = tmp_path / "V.json"
    V.write_text(json.dumps({"T": 1.0, "N": 10, "flavor": "V", "values": {"1,2": [0.3] * 10}}))
    system = fixture_path("two_level.json")
    assert run("eliminate-drift", "--system", system, "--control", str(V), "--refine", "2",
               "--out", str(tmp_path)) == 0
    H = read(tmp_path / "control_H.json")
    assert H["flavor"] == "H" and H["N"] == 20

    H_path = str(tmp_path / "control_H.json")
    assert run("eliminate-drift", "--system", system, "--control", H_path, "--out", str(tmp_path)) == const.EXIT_INVARIANT


def test_solve_refuses_bad_systems(tmp_path, fixture_path):
    cost, request = fixture_path("energy_cost.json"), fixture_path("solve_two_level.json")
    disconnected = write_system(tmp_path / "split.json", 3, [(1, 2)])
    assert run("solve", "--system", disconnected, "--cost", cost, "--request", request,
               "--out", str(tmp_path)) == const.EXIT_CONTROLLABILITY
    invalid = write_system(tmp_path / "negative.json", 2, [(1, 2)], bound=-1.0)
    assert run("solve", "--system", invalid, "--cost", cost, "--request", request,
               "--out", str(tmp_path)) == const.EXIT_INVARIANT


def test_solve_two_level_energy(tmp_path, fixture_path):
    code = run("solve", "--system", fixture_path("two_level.json"), "--cost", fixture_path("energy_cost.json"),
               "--request", fixture_path("solve_two_level.json"), "--out", str(tmp_path))
    assert code == const.EXIT_OK
    solution = load_report(str(tmp_path / "solution.json"))
    assert solution["cost"] == pytest.approx(np.pi ** 2 / 4, abs=1e-3)
    assert solution["time_under_ellipsoid"] == pytest.approx(np.pi / 2, abs=1e-3)
    assert solution["pmp_residual"]["costate_residual"] < 1e-10
    assert "resonance" in solution and solution["classification"]
    times, covectors, hamiltonian = load_lift(str(tmp_path / "lift.csv"))
    assert covectors.shape == (33, 2)
    assert hamiltonian.shape == (32,)
    assert load_cost_file(str(tmp_path / "cost.json")).type_name == "energy"


def test_classify(tmp_path, fixture_path, real_pair_a):
    control = str(tmp_path / "control_U.json")
    save_control(real_pair_a.control, control)
    system = write_system(tmp_path / "ladder.json", 4, [(1, 2), (2, 3), (3, 4)])
    assert run("classify", "--system", system, "--control", control, "--cost", fixture_path("energy_cost.json"),
               "--out", str(tmp_path)) == 0
    windows = read(tmp_path / "classification.json")["windows"]
    assert [w["verdict"] for w in windows] == [const.NOT_STRICTLY_ABNORMAL]
    assert windows[0]["classes"] == [[1, 2]]


def test_verify_subset(tmp_path):
    assert run("verify", "--filter", "counterexample", "--out", str(tmp_path)) == 0
    report = read(tmp_path / "verify.json")
    assert report["passed"]
    assert [c["id"] for c in report["criteria"]] == ["counterexample"]
