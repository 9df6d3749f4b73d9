import math

import numpy as np
import pytest

import bremen


def test_config_defaults_and_overrides():
    cfg = bremen.config("desk", "pointmass", iterations=3, policy_hidden=[8, 8])
    assert cfg["iterations"] == 3
    assert cfg["policy_hidden"] == [8, 8]
    assert cfg["deployments"] == 5


def test_config_errors_name_the_key():
    with pytest.raises(ValueError, match="delta"):
        bremen.config(delta=-1)


def test_env_round_trip():
    s = bremen.env_reset("pointmass", 3)
    assert s.shape == (4,)
    nxt, reward, terminated = bremen.env_step("pointmass", np.zeros(4), np.zeros(2))
    assert np.all(nxt == 0.0)
    assert reward == 0.0
    assert not terminated


def test_gae_matches_recursion():
    r = np.array([1.0, 0.5, -0.2])
    v = np.array([0.1, 0.2, 0.3, 0.4])
    g, lam = 0.9, 0.8
    expected = np.zeros(3)
    acc = 0.0
    for t in reversed(range(3)):
        acc = r[t] + g * v[t + 1] - v[t] + g * lam * acc
        expected[t] = acc
    assert np.array_equal(bremen.gae(r, v, g, lam), expected)


def test_theory_helpers():
    kl = bremen.gaussian_kl_1d(0.0, 1.0, 1.0, 1.0)
    assert kl == pytest.approx(0.5)
    assert bremen.gaussian_tv_1d(0.0, 1.0, 1.0, 1.0) <= math.sqrt(kl / 2)
    shift, model = bremen.proposition1_bounds(0.0, 0.0, 10, 0.05)
    base = math.sqrt(math.log(2 * math.pi) / 4)
    assert model == pytest.approx(base)
    assert shift == pytest.approx(base + 10 * math.sqrt(0.025))
    assert bremen.return_gap_penalty(0.0, 0.0, 0.99, 1.0) == 0.0


def test_tiny_loop_accounting(tmp_path):
    metrics = tmp_path / "metrics.jsonl"
    rep = bremen.run_loop("desk", "pointmass", metrics=str(metrics), deployments=2,
                          samples_per_deployment=200, iterations=2, policy_batch=200,
                          rollout_length=10, ensemble_size=2, dynamics_hidden=[16],
                          policy_hidden=[8], eval_episodes=1, horizon=50)
    assert rep["efficiency"]["total_samples"] == 400
    assert len(rep["efficiency"]["curve"]) == 3
    assert metrics.read_text().count("\n") > 0


def test_oracle_is_negative():
    assert bremen.oracle_optimal_return(0.99, 10, 0) < 0.0
