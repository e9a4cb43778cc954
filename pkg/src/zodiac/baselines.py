"""Comparison algorithms: ZO-SGD, ZO-SCD, ZO-GDA and ZONE-M.

ZO-SGD and ZO-SCD are centralised and act on the pooled training set (a
single-agent oracle).  ZO-GDA and ZONE-M run over the same graph as ZODIAC.
Every step function draws its randomness from the ``(agent, k)`` streams of
an :class:`~zodiac.rng.RngStreams`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DIVERGENCE_BOUND, DivergenceError
from .estimators import EstimatorSpec, coordinate_estimate, delta_at, estimate_central, estimate_gaussian_two_point
from .graph import LaplacianData

ALGORITHMS = ("zo_sgd", "zo_scd", "zo_gda", "zone_m")


@dataclass(frozen=True)
class BaselineConfig:
    mu: float = 0.01
    eta0: float = 0.08
    decay_exponent: float = 1e-5
    rho0: float = 0.1

    def __post_init__(self):
        for name in ("mu", "eta0", "rho0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"baseline.{name} must be positive")
        if self.decay_exponent < 0:
            raise ValueError("baseline.decay_exponent must be non-negative")


def _guard(x, k):
    if not np.all(np.abs(x) <= DIVERGENCE_BOUND):
        raise DivergenceError(k)
    return x


def oracle_calls_per_iteration(algorithm: str, n: int, spec: EstimatorSpec, p: int) -> int:
    n_c = min(spec.n_c, p)
    return {
        "zodiac_opt1": n * (n_c + 1),
        "zodiac_opt2": n * 2 * n_c,
        "zo_sgd": 2,
        "zo_scd": 2,
        "zo_gda": n * 2 * n_c,
        "zone_m": n * 2,
    }[algorithm]


# -- centralised --------------------------------------------------------------


def zo_sgd_step(x, pooled, mu, eta, rng, k=0):
    """``x - eta * g`` with a Gaussian two-point estimate on the pooled oracle."""
    g = estimate_gaussian_two_point(pooled, 0, x, mu, rng)
    return _guard(x - eta * g, k + 1), g


def zo_scd_step(x, pooled, mu, eta, rng, k=0):
    """Single random coordinate, central difference, scaled by ``p``."""
    j = rng.integers(x.size)
    g = estimate_central(pooled, 0, x, [j], mu, rng)
    return _guard(x - eta * g, k + 1), g


# -- ZO-GDA: gradient tracking --------------------------------------------------


def mixing_matrix(lap: LaplacianData) -> np.ndarray:
    """Symmetric doubly stochastic ``W = I - L / (rho(L) + 1)``."""
    return np.eye(lap.n) - lap.L / (lap.rho + 1.0)


def gda_step_size(eta0: float, decay_exponent: float, k: int) -> float:
    return eta0 / k**decay_exponent


@dataclass
class TrackingState:
    k: int
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray  # most recent local estimates, evaluated at x

    @property
    def x_bar(self):
        return self.x.mean(axis=0)


def _local_estimates(x, spec, problem, rng, k):
    n, p = x.shape
    delta = delta_at(spec.delta, k, p, n)
    central = EstimatorSpec("central", spec.n_c, spec.delta, spec.common_random_numbers)
    return np.stack([coordinate_estimate(central, problem, i, x[i], delta, rng(i, k)) for i in range(n)])


def zo_gda_init(x0, spec, problem, rng) -> TrackingState:
    """Tracking variable starts at each agent's first estimate (streams at k=0)."""
    g = _local_estimates(x0, spec, problem, rng, 0)
    return TrackingState(0, np.array(x0, dtype=float), g.copy(), g)


def zo_gda_step(state: TrackingState, W, eta_k, spec, problem, rng) -> TrackingState:
    """``x+ = W x - eta_k y``; ``y+ = W y + g(x+) - g(x)`` with central coordinate estimates."""
    k = state.k + 1
    x = _guard(W @ state.x - eta_k * state.y, k)
    g = _local_estimates(x, spec, problem, rng, k)
    y = W @ state.y + g - state.g
    return TrackingState(k, x, y, g)


# -- ZONE-M ---------------------------------------------------------------------


def zone_m_penalty(rho0: float, k: int) -> float:
    return rho0 * math.sqrt(k)


@dataclass
class ZoneState:
    k: int
    x: np.ndarray
    lam: np.ndarray  # aggregated edge multipliers, A^T mu, one row per agent
    g: np.ndarray

    @property
    def x_bar(self):
        return self.x.mean(axis=0)


def zone_m_step(state: ZoneState, lap: LaplacianData, rho_k, mu, problem, rng) -> ZoneState:
    """One ZONE-M iteration with a single two-point Gaussian sample (J = 1).

    The primal step minimises the linearised augmented Lagrangian
    ``<G, x - x^r> + <lam, x> + rho/2 ||A x||^2 + rho/2 ||x - x^r||^2_{B^T B}``
    with ``A``/``B`` the signed/signless incidence matrices, giving
    ``x+ = (2 rho D)^{-1} (rho (D + Adj) x - G - lam)``.  The multiplier update
    is ``lam+ = lam + rho L x+``.  Isolated agents (degree 0) take the plain
    proximal step ``x - G / rho``.
    """
    if not rho_k > 0:
        raise ValueError("penalty rho_k must be positive")
    k = state.k + 1
    n = state.x.shape[0]
    G = np.stack([estimate_gaussian_two_point(problem, i, state.x[i], mu, rng(i, k)) for i in range(n)])
    deg = np.diag(lap.L).copy()
    signless = 2.0 * np.diag(deg) - lap.L
    x = np.empty_like(state.x)
    iso = deg <= 0
    conn = ~iso
    x[conn] = (rho_k * (signless @ state.x)[conn] - G[conn] - state.lam[conn]) / (2.0 * rho_k * deg[conn, None])
    x[iso] = state.x[iso] - G[iso] / rho_k
    _guard(x, k)
    lam = state.lam + rho_k * (lap.L @ x)
    return ZoneState(k, x, lam, G)
