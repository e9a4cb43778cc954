"""Evaluation quantities recorded along a run."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .problems import sigmoid

TRACE_HEADER = ("k", "train_loss", "grad_norm_sq", "consensus_err", "grad_est_err", "test_acc", "lyapunov_w", "oracle_calls")


@dataclass
class TraceRow:
    k: int
    train_loss: float
    grad_norm_sq: float
    consensus_err: float
    grad_est_err: float | None = None
    test_acc: float | None = None
    lyapunov_w: float | None = None
    oracle_calls: int = 0

    def as_csv(self) -> list[str]:
        out = []
        for f in fields(self):
            val = getattr(self, f.name)
            out.append("" if val is None else repr(val) if isinstance(val, float) else str(val))
        return out


def write_trace(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for row in rows:
            w.writerow(row.as_csv())


def read_trace(path) -> list[TraceRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        for rec in reader:
            opt = {key: (float(rec[key]) if rec[key] != "" else None) for key in ("grad_est_err", "test_acc", "lyapunov_w")}
            rows.append(
                TraceRow(
                    k=int(rec["k"]),
                    train_loss=float(rec["train_loss"]),
                    grad_norm_sq=float(rec["grad_norm_sq"]),
                    consensus_err=float(rec["consensus_err"]),
                    oracle_calls=int(rec["oracle_calls"]),
                    **opt,
                )
            )
    return rows


def consensus_error(x) -> float:
    """Mean squared deviation of the agents' iterates from their average."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dev = x - x.mean(axis=0)
    return float(np.sum(dev * dev) / x.shape[0])


def grad_estimation_error(estimates, points, problem) -> float:
    """``(1/n) sum_i ||g_i - grad f_i(x_i)||`` at the points where ``g_i`` was drawn."""
    errs = [np.linalg.norm(estimates[i] - problem.true_local_gradient(i, points[i])) for i in range(len(estimates))]
    return float(np.mean(errs))


def evaluate_accuracy(x_bar, dataset, split: str = "test") -> float:
    A, y = dataset.split(split)
    if y.size == 0:
        raise ValueError(f"{split} split is empty")
    pred = sigmoid(A @ np.asarray(x_bar, dtype=float)) >= 0.5
    return float(np.mean(pred == (y == 1)))


def train_loss(problem, x, mode: str = "f_of_mean") -> float:
    """Global cost at the average iterate, or the average of local costs at local iterates."""
    x = np.atleast_2d(x)
    if mode == "f_of_mean":
        return problem.global_value(x.mean(axis=0))
    if mode == "mean_of_f":
        return float(np.mean([problem.local_value(i, x[i]) for i in range(problem.n_agents)]))
    raise ValueError(f"unknown train-loss mode {mode!r}")


# -- Lyapunov diagnostic ----------------------------------------------------------


@dataclass(frozen=True)
class LyapunovTerms:
    consensus: float  # 1/2 ||x||_K^2
    dual: float  # 1/2 ||v + g0/beta||^2_{Q + kappa1 K}
    cross: float  # x^T K (v + g0/beta)
    suboptimality: float  # n (f(x_bar) - f*)

    @property
    def total(self) -> float:
        return self.consensus + self.dual + self.cross + self.suboptimality


def _quad(M, a, b=None):
    """``sum_c a[:, c]^T M b[:, c]`` - the (M kron I_p) bilinear form on stacked vectors."""
    return float(np.sum(a * (M @ (a if b is None else b))))


def lyapunov_terms(x, v, lap, beta, kappa1, problem, f_star) -> LyapunovTerms:
    if f_star is None:
        raise ValueError("lyapunov diagnostic needs f_star")
    if kappa1 is None:
        raise ValueError("lyapunov diagnostic needs kappa1 (not set for these hyperparameters)")
    n = x.shape[0]
    x_bar = x.mean(axis=0)
    g0 = np.stack([problem.true_local_gradient(i, x_bar) for i in range(n)])
    w = v + g0 / beta
    K, Q = lap.K_small, lap.Q_small
    return LyapunovTerms(
        consensus=0.5 * _quad(K, x),
        dual=0.5 * _quad(Q + kappa1 * K, w),
        cross=_quad(K, x, w),
        suboptimality=n * (problem.global_value(x_bar) - f_star),
    )


def lyapunov_w(state, lap, hp, problem, f_star) -> float:
    return lyapunov_terms(state.x, state.v, lap, hp.beta, hp.kappa1, problem, f_star).total


def lyapunov_lower_bound(x, v, lap, beta, kappa1, problem, f_star) -> float:
    """``min{1/(2 rho), (k1 - 1)/(2 k1)} * (||x||_K^2 + ||v + g0/beta||_K^2 + n (f - f*))``."""
    n = x.shape[0]
    x_bar = x.mean(axis=0)
    g0 = np.stack([problem.true_local_gradient(i, x_bar) for i in range(n)])
    w = v + g0 / beta
    K = lap.K_small
    v_hat = _quad(K, x) + _quad(K, w) + n * (problem.global_value(x_bar) - f_star)
    return min(1.0 / (2.0 * lap.rho), (kappa1 - 1.0) / (2.0 * kappa1)) * v_hat


# -- rates ------------------------------------------------------------------------


def running_average(rows, quantity: str, horizon: int | None = None) -> float:
    """Average of ``quantity`` over checkpoint rows with ``k < horizon``."""
    if horizon is None:
        horizon = max(r.k for r in rows)
    vals = [getattr(r, quantity) for r in rows if r.k < horizon]
    if not vals:
        vals = [getattr(rows[0], quantity)]
    return float(np.mean(vals))


def rate_fit(horizons, values) -> float:
    """Least-squares slope of ``log(values)`` against ``log(horizons)``."""
    horizons = np.asarray(horizons, dtype=float)
    values = np.asarray(values, dtype=float)
    if horizons.size < 3:
        raise ValueError("rate fit needs at least 3 points")
    if horizons.max() / horizons.min() < 10 - 1e-9:
        raise ValueError("rate fit needs horizons spanning at least one decade")
    if np.any(values <= 0):
        raise ValueError("rate fit needs positive values")
    slope, _ = np.polyfit(np.log(horizons), np.log(values), 1)
    return float(slope)


def trace_rate_fit(traces: dict, quantity: str) -> float:
    """Slope for ``{T: rows}`` using each trace's running average up to its own ``T``."""
    Ts = sorted(traces)
    return rate_fit(Ts, [running_average(traces[T], quantity, T) for T in Ts])


def row_dict(row: TraceRow) -> dict:
    d = asdict(row)
    return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}
