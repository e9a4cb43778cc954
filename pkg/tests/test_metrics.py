from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zodiac.core import HyperParams, NetworkState
from zodiac.graph import build_laplacian, complete_graph, gen_erdos_renyi, path_graph
from zodiac.metrics import (
    TRACE_HEADER,
    TraceRow,
    consensus_error,
    evaluate_accuracy,
    grad_estimation_error,
    lyapunov_lower_bound,
    lyapunov_terms,
    lyapunov_w,
    rate_fit,
    read_trace,
    running_average,
    trace_rate_fit,
    write_trace,
)
from zodiac.problems import ClassificationProblem, QuadraticProblem, gen_dataset, gen_quadratic, partition_dataset


def half_square(n):
    return QuadraticProblem(np.ones((n, 1, 1)), np.zeros((n, 1)))


def test_consensus_error_examples():
    assert consensus_error(np.ones((3, 2))) == 0
    assert consensus_error(np.array([[0.0], [2.0]])) == pytest.approx(1.0)


@given(arrays(float, (4, 3), elements=st.floats(-1e3, 1e3)), arrays(float, 3, elements=st.floats(-1e3, 1e3)))
@settings(max_examples=50, deadline=None)
def test_consensus_error_translation_invariant(x, c):
    base = consensus_error(x)
    assert consensus_error(x + c) == pytest.approx(base, abs=1e-12 * (1 + np.abs(x).max() + np.abs(c).max()) ** 2)
    assert base >= 0


def test_lyapunov_hand_state_v_zero():
    lap = build_laplacian(path_graph(2))
    terms = lyapunov_terms(np.array([[1.0], [-1.0]]), np.zeros((2, 1)), lap, 1.0, 2.0, half_square(2), 0.0)
    assert (terms.consensus, terms.dual, terms.cross, terms.suboptimality) == pytest.approx((1.0, 0.0, 0.0, 0.0))


def test_lyapunov_hand_state_with_dual():
    # K = [[.5,-.5],[-.5,.5]], Q = [[.25,-.25],[-.25,.25]]; v in range(K) so Kv = v
    lap = build_laplacian(path_graph(2))
    terms = lyapunov_terms(np.array([[1.0], [-1.0]]), np.array([[0.5], [-0.5]]), lap, 1.0, 2.0, half_square(2), 0.0)
    assert terms.consensus == pytest.approx(1.0)
    assert terms.dual == pytest.approx(0.625)
    assert terms.cross == pytest.approx(1.0)
    assert terms.total == pytest.approx(2.625)


def test_lyapunov_consensus_at_common_stationary_point():
    lap = build_laplacian(complete_graph(3))
    q = QuadraticProblem(np.stack([np.eye(2)] * 3), np.tile([1.0, -1.0], (3, 1)))
    x = np.tile(q.minimizer(), (3, 1))
    W = lyapunov_w(NetworkState.initial(x), lap, HyperParams(2, 1, 0.1, kappa1=2.0), q, q.f_star())
    assert W == pytest.approx(0.0, abs=1e-12)


def test_lyapunov_requires_kappa1_and_fstar(path2):
    state = NetworkState.initial(np.zeros((2, 1)))
    with pytest.raises(ValueError):
        lyapunov_w(state, path2, HyperParams(1, 1, 1), half_square(2), 0.0)
    with pytest.raises(ValueError):
        lyapunov_w(state, path2, HyperParams(1, 1, 1, kappa1=2.0), half_square(2), None)


def test_lyapunov_nonnegative_random_states():
    rng = np.random.default_rng(0)
    for t in range(1000):
        n = int(rng.integers(2, 7))
        lap = build_laplacian(gen_erdos_renyi(n, 0.6, t))
        q = gen_quadratic(n, 2, seed=t)
        x = rng.standard_normal((n, 2)) * rng.uniform(0.1, 3)
        v = rng.standard_normal((n, 2))
        v -= v.mean(axis=0)
        beta = float(rng.uniform(0.1, 5))
        kappa1 = 1 / lap.rho2 + 1 + float(rng.uniform(0.01, 3))
        W = lyapunov_terms(x, v, lap, beta, kappa1, q, q.f_star()).total
        lb = lyapunov_lower_bound(x, v, lap, beta, kappa1, q, q.f_star())
        assert lb >= -1e-12
        assert W >= lb - 1e-9 * (1 + abs(W))


def test_accuracy_examples():
    ds = gen_dataset(6, 50, 300, seed=2)
    d = ds.d
    acc_pos = evaluate_accuracy(np.ones(d), ds, "test")
    assert acc_pos == 1.0
    A, y = ds.split("test")
    ties = np.sum(A.sum(axis=1) == 0)
    assert evaluate_accuracy(-np.ones(d), ds) == pytest.approx(1 - acc_pos, abs=ties / y.size)
    assert evaluate_accuracy(np.zeros(d), ds) == pytest.approx(np.mean(y == 1))
    with pytest.raises(ValueError):
        evaluate_accuracy(np.zeros(d), gen_dataset(6, 5, 0, 0), "test")


def test_grad_norm_matches_finite_difference():
    ds = partition_dataset(gen_dataset(5, 40, 5, 0), 2, 0)
    prob = ClassificationProblem(ds)
    x = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
    g = prob.global_gradient(x)
    h = 1e-6
    fd = np.array([(prob.global_value(x + h * e) - prob.global_value(x - h * e)) / (2 * h) for e in np.eye(5)])
    assert abs(fd @ fd - g @ g) <= 1e-5 * (g @ g)


def test_grad_estimation_error_uses_local_gradients(quad4):
    pts = np.arange(12.0).reshape(4, 3)
    exact = np.stack([quad4.true_local_gradient(i, pts[i]) for i in range(4)])
    assert grad_estimation_error(exact, pts, quad4) == 0.0
    shift = np.zeros_like(exact)
    shift[:, 0] = 2.0
    assert grad_estimation_error(exact + shift, pts, quad4) == pytest.approx(2.0)


def test_rate_fit_exact_power_laws():
    T = np.array([1e3, 4e3, 1.6e4, 6.4e4])
    assert rate_fit(T, 3.0 / T) == pytest.approx(-1.0, abs=1e-6)
    assert rate_fit(T, 3.0 / np.sqrt(T)) == pytest.approx(-0.5, abs=1e-6)


def test_rate_fit_preconditions():
    with pytest.raises(ValueError):
        rate_fit([10, 100], [1, 2])
    with pytest.raises(ValueError):
        rate_fit([10, 20, 40], [1, 2, 3])


def test_trace_roundtrip_and_header(tmp_path):
    rows = [
        TraceRow(0, 0.25, 1e-3, 0.0, None, 0.5, None, 0),
        TraceRow(100, 0.1 + 0.2, 3.3e-17, 1.0 / 3.0, 0.7, 0.75, 2.5, 1200),
    ]
    path = tmp_path / "trace.csv"
    write_trace(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(TRACE_HEADER)
    assert path.read_text().splitlines()[1] == "0,0.25,0.001,0.0,,0.5,,0"
    assert read_trace(path) == rows


def test_running_average_and_trace_fit():
    traces = {T: [TraceRow(k, 0.0, 1.0 / T, 0.0) for k in range(T)] for T in (100, 400, 1600)}
    assert running_average(traces[100], "grad_norm_sq") == pytest.approx(0.01)
    assert trace_rate_fit(traces, "grad_norm_sq") == pytest.approx(-1.0)
