import json
import os
import subprocess

import numpy as np
import pytest

import rviq


def test_loop_rate_and_rvi():
    eq = rviq.expected_quantities(rviq.loop_canonical())
    r_star, policy = rviq.optimal_rate(eq)
    assert r_star[0] == pytest.approx(1.5, abs=1e-12)
    assert policy == [0]
    out = rviq.schweitzer_rvi(eq, rviq.BiasFn.reference_component(0, 1))
    assert out["converged"]
    assert out["rate_estimate"] == pytest.approx(1.5, abs=1e-10)


def test_cycle_rate():
    r_star, _ = rviq.optimal_rate(rviq.expected_quantities(rviq.cycle_canonical()))
    assert r_star == pytest.approx([4.0 / 3.0, 4.0 / 3.0], abs=1e-12)


def test_reference_instance():
    model = rviq.random_wcom(3, 2, 42)
    assert rviq.validate_model(model) == []
    assert rviq.is_weakly_communicating_exact(model)
    eq = rviq.expected_quantities(model)
    f = rviq.BiasFn.uniform(6)
    out = rviq.schweitzer_rvi(eq, f)
    assert out["rate_estimate"] == pytest.approx(1.62919, abs=1e-5)
    assert rviq.qf_residual(eq, f, out["q"]) < 1e-8
    assert rviq.a_star(eq, f) == pytest.approx(2.0 / eq.t_min + 1.0)


def test_learn_runs_and_improves():
    model = rviq.random_wcom(3, 2, 42)
    res = rviq.learn(model, rviq.BiasFn.uniform(6), stepsize_kind="class1", A=6.0, varsigma=6.0, n_steps=100000)
    assert res["T"].shape == (6,)
    assert res["rate_error_series"][-1] < res["rate_error_series"][0]


def test_translation_and_sistr():
    f = rviq.BiasFn.counterexample2d()
    x = np.array([1.0, 2.0])
    c = rviq.solve_translation(f, x, 5.0)
    assert f(x + c) == pytest.approx(5.0, abs=1e-9)
    assert all(rviq.check_sistr(g, [np.zeros(3)]) for g in rviq.shipped_family(3))


def test_integrate_decay():
    times, points = rviq.integrate(lambda x: -x, np.ones(1), 1.0, 0.01)
    assert times[-1] == pytest.approx(1.0)
    assert points[-1][0] == pytest.approx(np.exp(-1.0), abs=1e-9)


def test_run_command(tmp_path):
    code, summary, run_dir = rviq.run_command("solve-exact", {"seed": 1}, tmp_path)
    assert code == 0
    assert summary["config_hash"] == rviq.config_hash({"seed": 1})
    assert os.path.exists(os.path.join(run_dir, "trace.csv"))


cli = os.environ.get("RVIQ_CLI")


@pytest.mark.skipif(not cli, reason="RVIQ_CLI not set")
def test_cli_solve_and_threshold_refusal(tmp_path):
    env = dict(os.environ, RVIQ_OUTPUT_ROOT=str(tmp_path))
    ok = subprocess.run([cli, "solve-exact", "--generator", "loop_canonical"], env=env, capture_output=True, text=True)
    assert ok.returncode == 0, ok.stderr

    cfg = tmp_path / "learn.json"
    cfg.write_text(json.dumps({"stepsize": {"kind": "class2", "A": 0.5}}))
    refused = subprocess.run(
        [cli, "learn", "--config", str(cfg), "--require-thresholds"], env=env, capture_output=True, text=True
    )
    assert refused.returncode == 2
    assert "2/t_min + L_f" in refused.stdout + refused.stderr
