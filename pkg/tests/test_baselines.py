from __future__ import annotations

import numpy as np
import pytest

from zodiac.baselines import (
    BaselineConfig,
    TrackingState,
    ZoneState,
    gda_step_size,
    mixing_matrix,
    oracle_calls_per_iteration,
    zo_gda_init,
    zo_gda_step,
    zo_scd_step,
    zo_sgd_step,
    zone_m_penalty,
    zone_m_step,
)
from zodiac.core import DivergenceError
from zodiac.estimators import DeltaMode, DeltaSchedule, EstimatorSpec, estimate_central
from zodiac.graph import Topology, build_laplacian, complete_graph, gen_erdos_renyi, path_graph
from zodiac.problems import ClassificationProblem, FunctionOracle, gen_quadratic
from zodiac.rng import AgentStream, RngStreams


def test_config_validation():
    BaselineConfig()
    with pytest.raises(ValueError):
        BaselineConfig(mu=0.0)
    with pytest.raises(ValueError):
        BaselineConfig(decay_exponent=-1.0)


def test_oracle_call_formulas():
    spec = EstimatorSpec("central", 3)
    assert oracle_calls_per_iteration("zodiac_opt1", 10, spec, 100) == 40
    assert oracle_calls_per_iteration("zodiac_opt2", 10, spec, 100) == 60
    assert oracle_calls_per_iteration("zo_sgd", 10, spec, 100) == 2
    assert oracle_calls_per_iteration("zo_scd", 10, spec, 100) == 2
    assert oracle_calls_per_iteration("zo_gda", 10, spec, 100) == 60
    assert oracle_calls_per_iteration("zone_m", 10, spec, 100) == 20


def test_sgd_constant_oracle_is_stationary():
    c = FunctionOracle(lambda x: 1.0, 4)
    x = np.arange(4.0)
    new, g = zo_sgd_step(x, c, 0.01, 0.1, AgentStream(0))
    assert np.array_equal(new, x) and np.array_equal(g, np.zeros(4))


def test_sgd_descends_on_quadratic_in_most_seeds():
    q = gen_quadratic(1, 5, condition=4.0, seed=0)
    wins = 0
    for seed in range(100):
        x = np.full(5, 3.0)
        vals = [q.global_value(x)]
        for k in range(100):
            x, _ = zo_sgd_step(x, q, 1e-6, 0.005, AgentStream(seed, 0, k))
            vals.append(q.global_value(x))
        wins += vals[-1] < vals[0]
    assert wins >= 95


def test_sgd_single_agent_pooled_identity(small_dataset):
    from zodiac.problems import partition_dataset

    one = ClassificationProblem(partition_dataset(small_dataset, 1, 0))
    x = np.full(small_dataset.d, 0.2)
    a = zo_sgd_step(x, one, 0.01, 0.08, AgentStream(3))[0]
    b = zo_sgd_step(x, one.pooled(), 0.01, 0.08, AgentStream(3))[0]
    np.testing.assert_array_equal(a, b)


def test_scd_linear_update_exact():
    a = np.array([1.0, -2.0, 4.0])
    lin = FunctionOracle(lambda x: float(a @ x), 3)
    x = np.zeros(3)
    rng = AgentStream(11)
    j = AgentStream(11).integers(3)
    new, g = zo_scd_step(x, lin, 0.01, 0.5, rng)
    expected = np.zeros(3)
    expected[j] = -0.5 * 3 * a[j]
    np.testing.assert_allclose(new, expected, rtol=1e-12)


def test_scd_direction_expectation_is_gradient():
    q = gen_quadratic(1, 4, seed=5)
    x = np.array([1.0, 0.5, -0.5, 2.0])
    mean = sum(estimate_central(q, 0, x, [j], 0.01, AgentStream(0)) for j in range(4)) / 4
    np.testing.assert_allclose(-0.1 * mean, -0.1 * q.global_gradient(x), atol=1e-12)


def test_scd_scalar_reduces_to_central_two_point():
    sq = FunctionOracle(lambda x: float(x[0] ** 2), 1)
    new, g = zo_scd_step(np.array([1.0]), sq, 0.1, 0.25, AgentStream(0))
    assert g[0] == pytest.approx(2.0)
    assert new[0] == pytest.approx(0.5)


def test_mixing_matrix_doubly_stochastic():
    for s in range(10):
        W = mixing_matrix(build_laplacian(gen_erdos_renyi(8, 0.4, s)))
        np.testing.assert_allclose(W.sum(axis=0), 1, atol=1e-12)
        np.testing.assert_allclose(W.sum(axis=1), 1, atol=1e-12)
        np.testing.assert_array_equal(W, W.T)


def test_gda_step_size_schedule():
    assert gda_step_size(0.08, 1e-5, 1) == 0.08
    assert gda_step_size(0.08, 1e-5, 50_000) == pytest.approx(0.08 / 50_000**1e-5)


def test_gda_consensus_contraction_on_path():
    lap = build_laplacian(path_graph(2))
    W = mixing_matrix(lap)
    # eigenvalues of W on path2: 1 and 1 - 2/3 = 1/3
    factor = np.max(np.abs(np.linalg.eigvalsh(W - np.full((2, 2), 0.5))))
    assert factor == pytest.approx(1 / 3)
    zero = FunctionOracle(lambda x: 0.0, 1, n_agents=2)
    spec = EstimatorSpec("central", 1, DeltaSchedule(DeltaMode.CONSTANT, value=1e-3))
    state = zo_gda_init(np.array([[1.0], [-1.0]]), spec, zero, RngStreams(0))
    for _ in range(5):
        before = np.linalg.norm(state.x - state.x.mean(axis=0))
        state = zo_gda_step(state, W, 0.08, spec, zero, RngStreams(0))
        after = np.linalg.norm(state.x - state.x.mean(axis=0))
        assert after <= factor * before + 1e-15


def test_gda_tracking_invariant():
    q = gen_quadratic(5, 3, seed=2, noise_std=0.2, grad_noise_std=0.1)
    lap = build_laplacian(gen_erdos_renyi(5, 0.5, 1))
    W = mixing_matrix(lap)
    spec = EstimatorSpec("central", 2, DeltaSchedule(DeltaMode.CONSTANT, value=1e-2))
    streams = RngStreams(4)
    state = zo_gda_init(np.zeros((5, 3)), spec, q, streams)
    assert isinstance(state, TrackingState)
    for k in range(1, 200):
        state = zo_gda_step(state, W, gda_step_size(0.08, 1e-5, k), spec, q, streams)
        resid = np.linalg.norm(state.y.sum(axis=0) - state.g.sum(axis=0))
        assert resid <= 1e-6 * (1 + np.abs(state.g).sum())


def test_zone_penalty_schedule():
    assert zone_m_penalty(0.1, 100) == pytest.approx(1.0)
    assert zone_m_penalty(0.1, 4) < zone_m_penalty(0.1, 9)


def test_zone_multipliers_stay_in_range_of_laplacian():
    q = gen_quadratic(6, 2, seed=0, noise_std=0.1)
    lap = build_laplacian(gen_erdos_renyi(6, 0.5, 0))
    state = ZoneState(0, np.zeros((6, 2)), np.zeros((6, 2)), np.zeros((6, 2)))
    streams = RngStreams(1)
    for k in range(1, 300):
        state = zone_m_step(state, lap, zone_m_penalty(0.1, k), 0.01, q, streams)
        # range(L) = complement of the consensus direction for a connected graph
        assert np.linalg.norm(state.lam.sum(axis=0)) <= 1e-8 * (1 + np.abs(state.lam).max())


def test_zone_single_agent_is_proximal_step():
    q = gen_quadratic(1, 3, seed=0)
    lap = build_laplacian(Topology(1, []))
    x0 = np.ones((1, 3))
    state = ZoneState(0, x0, np.zeros_like(x0), np.zeros_like(x0))
    new = zone_m_step(state, lap, 2.0, 0.01, q, RngStreams(0))
    np.testing.assert_allclose(new.x, x0 - new.g / 2.0)
    np.testing.assert_array_equal(new.lam, 0)


def test_zone_rejects_nonpositive_penalty():
    lap = build_laplacian(complete_graph(2))
    state = ZoneState(0, np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        zone_m_step(state, lap, 0.0, 0.01, gen_quadratic(2, 1), RngStreams(0))


def test_divergence_guards():
    steep = FunctionOracle(lambda x: 1e30 * float(x[0]), 1)
    with pytest.raises(DivergenceError):
        zo_scd_step(np.zeros(1), steep, 0.01, 1.0, AgentStream(0))


def test_baselines_are_deterministic():
    q = gen_quadratic(4, 3, seed=0, noise_std=0.3)
    lap = build_laplacian(complete_graph(4))
    runs = []
    for _ in range(2):
        s = ZoneState(0, np.zeros((4, 3)), np.zeros((4, 3)), np.zeros((4, 3)))
        for k in range(1, 20):
            s = zone_m_step(s, lap, zone_m_penalty(0.1, k), 0.01, q, RngStreams(8))
        runs.append(s.x)
    assert np.array_equal(*runs)
