"""ZODIAC primal-dual iteration, network state and step-size schedules.

One synchronous round, for every agent ``i``::

    x_i <- x_i - eta * (alpha * sum_j L_ij x_j + beta * v_i + g_i)
    v_i <- v_i + eta * beta * sum_j L_ij x_j

where ``g_i`` is agent ``i``'s zeroth-order coordinate estimate and every
right-hand side uses iteration-``k`` values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .estimators import EstimatorSpec, coordinate_estimate, delta_at
from .graph import LaplacianData
from .rng import RngStreams

DIVERGENCE_BOUND = 1e12


class ScheduleError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, k: int, message: str = ""):
        self.k = k
        super().__init__(message or f"iterates diverged at iteration {k} (non-finite or |x| > {DIVERGENCE_BOUND:g})")


@dataclass
class NetworkState:
    k: int
    x: np.ndarray  # (n, p) primal
    v: np.ndarray  # (n, p) dual

    @classmethod
    def initial(cls, x0: np.ndarray) -> NetworkState:
        x0 = np.array(x0, dtype=float)
        return cls(0, x0, np.zeros_like(x0))

    @property
    def x_bar(self) -> np.ndarray:
        return self.x.mean(axis=0)

    def copy(self) -> NetworkState:
        return NetworkState(self.k, self.x.copy(), self.v.copy())


@dataclass(frozen=True)
class HyperParams:
    alpha: float
    beta: float
    eta: float
    mode: str = "manual"  # "manual" | "theorem"
    kappa1: float | None = None
    kappa2: float | None = None
    kappa_delta: float | None = None
    T: int | None = None

    def __post_init__(self):
        for name in ("alpha", "beta", "eta"):
            if not getattr(self, name) > 0:
                raise ScheduleError(f"{name} must be positive, got {getattr(self, name)}")


def kappa1_lower_bound(lap: LaplacianData) -> float:
    """Strict lower bound ``1/rho2(L) + 1`` on ``kappa1``."""
    return 1.0 / lap.rho2 + 1.0


def kappa2_upper_bound(lap: LaplacianData, kappa1: float) -> float:
    """Supremum of the open interval admitted for ``kappa2`` given ``kappa1``."""
    num = (kappa1 - 1.0) * lap.rho2 - 1.0
    den = lap.rho + (2.0 * kappa1**2 + 1.0) * lap.rho_L2 + 1.0
    return min(num / den, 0.2)


def theorem_schedule(lap, p, n, T, kappa1=None, kappa2=None, kappa_delta=1.0) -> HyperParams:
    """Constant parameters ``alpha = k1 beta``, ``beta = k2 sqrt(pT/n)``, ``eta = k2 / beta``.

    Omitted constants default to ``kappa1 = 1/rho2 + 1.5`` and 90% of the
    ``kappa2`` upper bound.
    """
    if not lap.connected:
        raise ScheduleError("graph is disconnected; the schedule needs rho2(L) > 0")
    if T < 1:
        raise ScheduleError("T must be positive")
    if T <= n**3 / p:
        warnings.warn(f"T={T} does not exceed n^3/p={n**3 / p:g}; convergence guarantee does not apply", stacklevel=2)
    lo = kappa1_lower_bound(lap)
    if kappa1 is None:
        kappa1 = lo + 0.5
    elif not kappa1 > lo:
        raise ScheduleError(f"kappa1={kappa1} must exceed 1/rho2(L)+1={lo}")
    hi = kappa2_upper_bound(lap, kappa1)
    if kappa2 is None:
        kappa2 = 0.9 * hi
    elif not 0.0 < kappa2 < hi:
        raise ScheduleError(f"kappa2={kappa2} must lie in (0, {hi})")
    beta = kappa2 * math.sqrt(p * T) / math.sqrt(n)
    return HyperParams(
        alpha=kappa1 * beta,
        beta=beta,
        eta=kappa2 / beta,
        mode="theorem",
        kappa1=kappa1,
        kappa2=kappa2,
        kappa_delta=kappa_delta,
        T=T,
    )


def check_theorem_schedule(hp: HyperParams, lap: LaplacianData, p: int, n: int, rtol: float = 1e-12) -> list[str]:
    """Independent re-check of the schedule relations; returns the violated ones."""
    problems = []
    k1, k2, T = hp.kappa1, hp.kappa2, hp.T
    if None in (k1, k2, T):
        return ["schedule constants missing"]
    if not lap.rho2 > 0:
        return ["rho2(L) is zero"]
    if not k1 > 1 / lap.rho2 + 1:
        problems.append("kappa1 <= 1/rho2 + 1")
    bound = ((k1 - 1) * lap.rho2 - 1) / (lap.rho + (2 * k1 * k1 + 1) * lap.rho**2 + 1)
    if not (0 < k2 < bound and k2 < 1 / 5):
        problems.append("kappa2 outside its admissible interval")
    beta = k2 * math.sqrt(p * T / n)
    if not math.isclose(hp.beta, beta, rel_tol=rtol):
        problems.append("beta != kappa2 sqrt(pT/n)")
    if not math.isclose(hp.alpha, k1 * hp.beta, rel_tol=rtol):
        problems.append("alpha != kappa1 beta")
    if not math.isclose(hp.eta * hp.beta, k2, rel_tol=rtol):
        problems.append("eta != kappa2 / beta")
    return problems


def linear_stability_radius(lap: LaplacianData, hp: HyperParams) -> float:
    """Largest spectral radius of the noise-free ``(x, v)`` recursion over Laplacian modes.

    Values below 1 mean the consensus/dual dynamics contract; at or above 1
    the run will typically blow up regardless of the objective.
    """
    worst = 0.0
    for lam in lap.eigenvalues:
        if lam <= 1e-10:
            continue
        M = np.array([[1 - hp.eta * hp.alpha * lam, -hp.eta * hp.beta], [hp.eta * hp.beta * lam, 1.0]])
        worst = max(worst, float(np.max(np.abs(np.linalg.eigvals(M)))))
    return worst


def primal_dual_update(state: NetworkState, lap: LaplacianData, hp: HyperParams, G: np.ndarray) -> NetworkState:
    """Apply one synchronous round given the stacked estimates ``G``."""
    LX = lap.L @ state.x
    x = state.x - hp.eta * (hp.alpha * LX + hp.beta * state.v + G)
    v = state.v + (hp.eta * hp.beta) * LX
    if not np.all(np.abs(x) <= DIVERGENCE_BOUND):
        raise DivergenceError(state.k + 1)
    return NetworkState(state.k + 1, x, v)


def zodiac_step(state, lap, hp, spec: EstimatorSpec, problem, rng: RngStreams, return_estimates=False):
    """One synchronous ZODIAC round on an arbitrary oracle.

    Every agent reads iteration-``k`` neighbour values, draws its coordinates
    and ``xi`` from stream ``(agent, k)``, and forms its estimate; the primal
    and dual updates are then applied together.
    """
    n, p = state.x.shape
    if lap.n != n or problem.dim != p or problem.n_agents != n:
        raise ValueError("state, graph and problem dimensions disagree")
    delta = delta_at(spec.delta, state.k, p, n)
    G = np.zeros((n, p))
    for i in range(n):
        G[i] = coordinate_estimate(spec, problem, i, state.x[i], delta, rng(i, state.k))
    new = primal_dual_update(state, lap, hp, G)
    return (new, G) if return_estimates else new

