from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zodiac.core import (
    DivergenceError,
    HyperParams,
    NetworkState,
    ScheduleError,
    check_theorem_schedule,
    kappa1_lower_bound,
    kappa2_upper_bound,
    linear_stability_radius,
    primal_dual_update,
    theorem_schedule,
    zodiac_step,
)
from zodiac.estimators import DeltaMode, DeltaSchedule, EstimatorSpec
from zodiac.graph import Topology, build_laplacian, complete_graph, gen_erdos_renyi, path_graph
from zodiac.problems import FunctionOracle, gen_quadratic
from zodiac.rng import RngStreams


def zero_oracle(p, n):
    return FunctionOracle(lambda x: 0.0, p, n_agents=n)


def test_kappa_bounds_path2(path2):
    assert kappa1_lower_bound(path2) == pytest.approx(1.5)
    assert kappa2_upper_bound(path2, 2.0) == pytest.approx(1 / 39)


def test_schedule_arithmetic_benchmark_sizes():
    lap = build_laplacian(gen_erdos_renyi(10, 0.4, 24))
    k1 = kappa1_lower_bound(lap) + 0.5
    k2 = 0.5 * kappa2_upper_bound(lap, k1)
    hp = theorem_schedule(lap, 100, 10, 50_000, kappa1=k1, kappa2=k2)
    assert hp.beta == pytest.approx(k2 * 707.1067811865476, rel=1e-12)
    assert hp.eta == pytest.approx(k2 / hp.beta)
    assert hp.alpha == pytest.approx(k1 * hp.beta)
    assert check_theorem_schedule(hp, lap, 100, 10) == []


def test_schedule_rejects_boundary_kappa1(path2):
    with pytest.raises(ScheduleError):
        theorem_schedule(path2, 1, 2, 100, kappa1=1.5)
    with pytest.raises(ScheduleError):
        theorem_schedule(path2, 1, 2, 100, kappa1=2.0, kappa2=1 / 39)


def test_schedule_rejects_disconnected():
    with pytest.raises(ScheduleError):
        theorem_schedule(build_laplacian(Topology(3, [(0, 1)])), 2, 3, 100)


def test_schedule_warns_on_short_horizon(path2):
    with pytest.warns(UserWarning):
        theorem_schedule(path2, 1, 2, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        theorem_schedule(path2, 1, 2, 9)


@given(st.integers(2, 12), st.integers(0, 500), st.integers(1, 100), st.integers(10, 10**6))
@settings(max_examples=50, deadline=None)
def test_default_schedules_always_validate(n, seed, p, T):
    lap = build_laplacian(gen_erdos_renyi(n, 0.6, seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        hp = theorem_schedule(lap, p, n, T)
    assert check_theorem_schedule(hp, lap, p, n) == []


def test_validator_flags_manual_parameters(path2):
    hp = HyperParams(4, 3, 0.08)
    assert check_theorem_schedule(hp, path2, 1, 2) == ["schedule constants missing"]
    bad = HyperParams(1.0, 1.0, 1.0, mode="theorem", kappa1=2.0, kappa2=0.01, T=100)
    assert "beta != kappa2 sqrt(pT/n)" in check_theorem_schedule(bad, path2, 1, 2)


def test_consensus_fixed_point_under_zero_oracle():
    lap = build_laplacian(complete_graph(4))
    x0 = np.tile([1.0, -2.0], (4, 1))
    state = NetworkState.initial(x0)
    hp = HyperParams(1.0, 1.0, 0.1)
    spec = EstimatorSpec("forward", 1)
    for _ in range(5):
        state = zodiac_step(state, lap, hp, spec, zero_oracle(2, 4), RngStreams(0))
    np.testing.assert_array_equal(state.x, x0)
    np.testing.assert_array_equal(state.v, 0)
    assert state.k == 5


def test_hand_iteration_path2(path2):
    state = NetworkState.initial(np.array([[1.0], [-1.0]]))
    new = zodiac_step(state, path2, HyperParams(1, 1, 1), EstimatorSpec("central", 1), zero_oracle(1, 2), RngStreams(0))
    np.testing.assert_array_equal(new.x, [[-1.0], [1.0]])
    np.testing.assert_array_equal(new.v, [[2.0], [-2.0]])


@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_dual_sum_and_mean_dynamics(seed):
    rng = np.random.default_rng(seed)
    lap = build_laplacian(gen_erdos_renyi(5, 0.5, seed))
    state = NetworkState(0, rng.standard_normal((5, 3)), np.zeros((5, 3)))
    hp = HyperParams(*rng.uniform(0.1, 2.0, 3))
    G = rng.standard_normal((5, 3))
    new = primal_dual_update(state, lap, hp, G)
    assert np.linalg.norm(new.v.sum(axis=0)) <= 1e-12 * (1 + np.abs(new.v).max())
    np.testing.assert_allclose(new.x_bar, state.x_bar - hp.eta * G.mean(axis=0), atol=1e-12)


def test_divergence_guard(path2):
    state = NetworkState.initial(np.array([[6e11], [-6e11]]))
    with pytest.raises(DivergenceError) as info:
        primal_dual_update(state, path2, HyperParams(3, 1, 1), np.zeros((2, 1)))
    assert info.value.k == 1


def test_stability_radius_table1_values():
    lap = build_laplacian(gen_erdos_renyi(10, 0.4, 24))
    assert linear_stability_radius(lap, HyperParams(4, 3, 0.08)) < 1
    # a dense graph pushes rho(L) past the stable window for these parameters
    assert linear_stability_radius(build_laplacian(complete_graph(10)), HyperParams(4, 3, 0.08)) > 1


def test_quadratic_converges_under_theorem_schedule():
    lap = build_laplacian(path_graph(2))
    q = gen_quadratic(2, 2, condition=3.0, seed=0)
    T = 5000
    hp = theorem_schedule(lap, 2, 2, T)
    spec = EstimatorSpec("central", 2, DeltaSchedule(DeltaMode.THEOREM))
    state = NetworkState.initial(np.zeros((2, 2)))
    streams = RngStreams(0)
    for _ in range(T):
        state = zodiac_step(state, lap, hp, spec, q, streams)
    g = q.global_gradient(state.x_bar)
    assert g @ g <= 1e-4
    dev = state.x - state.x_bar
    assert (dev**2).sum(axis=1).mean() <= 1e-4
    # reference: centralised gradient descent reaches the same minimiser
    np.testing.assert_allclose(state.x_bar, q.minimizer(), atol=math.sqrt(1e-4))
