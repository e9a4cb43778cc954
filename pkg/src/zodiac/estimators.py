"""Zeroth-order gradient estimators and smoothing-parameter schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class EstimatorKind(str, Enum):
    FORWARD = "forward"
    CENTRAL = "central"
    GAUSSIAN = "gaussian"


class DeltaMode(str, Enum):
    THEOREM = "theorem"  # kappa_delta / (p n (k+1))^(1/4)
    FIXED_EXPERIMENT = "fixed_experiment"  # 10 / sqrt(T d)
    CONSTANT = "constant"


@dataclass(frozen=True)
class DeltaSchedule:
    mode: DeltaMode = DeltaMode.FIXED_EXPERIMENT
    kappa_delta: float = 1.0
    value: float = 1e-3
    T: int = 50_000
    d: int = 100

    def __post_init__(self):
        object.__setattr__(self, "mode", DeltaMode(self.mode))
        if self.mode is DeltaMode.THEOREM and not self.kappa_delta > 0:
            raise ValueError("kappa_delta must be positive")
        if self.mode is DeltaMode.CONSTANT and not self.value > 0:
            raise ValueError("constant delta must be positive")
        if self.mode is DeltaMode.FIXED_EXPERIMENT and (self.T < 1 or self.d < 1):
            raise ValueError("fixed-experiment delta needs T >= 1 and d >= 1")


def delta_at(schedule: DeltaSchedule, k: int, p: int, n: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be non-negative")
    if schedule.mode is DeltaMode.THEOREM:
        return schedule.kappa_delta * float(p * n * (k + 1)) ** -0.25
    if schedule.mode is DeltaMode.FIXED_EXPERIMENT:
        return 10.0 / math.sqrt(schedule.T * schedule.d)
    return schedule.value


@dataclass(frozen=True)
class EstimatorSpec:
    kind: EstimatorKind = EstimatorKind.FORWARD
    n_c: int = 1
    delta: DeltaSchedule = field(default_factory=DeltaSchedule)
    common_random_numbers: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if self.n_c < 1:
            raise ValueError(f"coordinate budget n_c must be >= 1, got {self.n_c}")

    def calls_per_estimate(self, p: int) -> int:
        if self.kind is EstimatorKind.FORWARD:
            return min(self.n_c, p) + 1
        if self.kind is EstimatorKind.CENTRAL:
            return 2 * min(self.n_c, p)
        return 2


def sample_coordinates(p: int, n_c: int, rng) -> np.ndarray:
    """Uniform random ``n_c``-subset of ``range(p)``, drawn without replacement."""
    if n_c > p:
        raise ValueError(f"cannot sample {n_c} coordinates out of {p}")
    return rng.subset(p, n_c)


def _xi_source(oracle, agent, rng, common: bool):
    if common:
        xi = oracle.draw_xi(agent, rng)
        return lambda: xi
    return lambda: oracle.draw_xi(agent, rng)


def estimate_forward(oracle, agent, x, S, delta, rng, common_random_numbers=True):
    """Forward-difference coordinate estimator over the index set ``S``.

    Uses ``len(S) + 1`` oracle calls.  With common random numbers (default)
    one ``xi`` serves every evaluation.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    S = np.asarray(S, dtype=np.intp)
    if S.size == 0:
        raise ValueError("coordinate set is empty")
    x = np.asarray(x, dtype=float)
    p = x.size
    if common_random_numbers:
        # a zero step along S[0] evaluates the base point in the same batched call
        xi = oracle.draw_xi(agent, rng)
        steps = np.full(S.size + 1, delta)
        steps[0] = 0.0
        vals = oracle.evaluate_along(agent, x, xi, np.concatenate((S[:1], S)), steps)
        base, shifted = vals[0], vals[1:]
    else:
        base = oracle.evaluate(agent, x, oracle.draw_xi(agent, rng))
        shifted = np.array(
            [oracle.evaluate_along(agent, x, oracle.draw_xi(agent, rng), S[t : t + 1], [delta])[0] for t in range(S.size)]
        )
    g = np.zeros(p)
    np.add.at(g, S, (p / S.size) * (shifted - base) / delta)
    return g


def estimate_central(oracle, agent, x, S, delta, rng, common_random_numbers=True):
    """Central-difference coordinate estimator; ``2 len(S)`` oracle calls."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    S = np.asarray(S, dtype=np.intp)
    if S.size == 0:
        raise ValueError("coordinate set is empty")
    x = np.asarray(x, dtype=float)
    p = x.size
    m = S.size
    if common_random_numbers:
        xi = oracle.draw_xi(agent, rng)
        coords = np.repeat(S, 2)
        steps = np.tile([delta, -delta], m)
        vals = oracle.evaluate_along(agent, x, xi, coords, steps)
        plus, minus = vals[0::2], vals[1::2]
    else:
        plus = np.empty(m)
        minus = np.empty(m)
        for t in range(m):
            plus[t] = oracle.evaluate_along(agent, x, oracle.draw_xi(agent, rng), S[t : t + 1], [delta])[0]
            minus[t] = oracle.evaluate_along(agent, x, oracle.draw_xi(agent, rng), S[t : t + 1], [-delta])[0]
    g = np.zeros(p)
    np.add.at(g, S, (p / m) * (plus - minus) / (2.0 * delta))
    return g


def estimate_gaussian_two_point(oracle, agent, x, mu, rng, common_random_numbers=True):
    """``[(F(x + mu u) - F(x)) / mu] u`` with ``u ~ N(0, I)``; two oracle calls.

    Direction first, then ``xi``, both from ``rng``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    x = np.asarray(x, dtype=float)
    u = rng.normals(x.size)
    xi = _xi_source(oracle, agent, rng, common_random_numbers)
    f0 = oracle.evaluate(agent, x, xi())
    f1 = oracle.evaluate(agent, x + mu * u, xi())
    return ((f1 - f0) / mu) * u


def coordinate_estimate(spec: EstimatorSpec, oracle, agent, x, delta, rng):
    """Draw the coordinate subset and evaluate the spec's coordinate estimator."""
    S = sample_coordinates(len(x), min(spec.n_c, len(x)), rng)
    if spec.kind is EstimatorKind.FORWARD:
        return estimate_forward(oracle, agent, x, S, delta, rng, spec.common_random_numbers)
    if spec.kind is EstimatorKind.CENTRAL:
        return estimate_central(oracle, agent, x, S, delta, rng, spec.common_random_numbers)
    raise ValueError(f"{spec.kind.value} is not a coordinate estimator")


def variance_bound(grad_norm_sq, p, n_c, zeta_sq, sigma1_sq, L_f, delta) -> float:
    """Upper bound on ``E ||g^e||^2`` for the ``n_c``-coordinate estimator."""
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    s = L_f**2 * delta**2 / 2.0
    return 2 * (p - 1) * grad_norm_sq + 2 * p * sigma1_sq + (3 * p**2 / n_c) * (zeta_sq + s) + p**2 * s


def monte_carlo_second_moment(spec: EstimatorSpec, problem, agent, x, delta, draws, seed=0, backend=None):
    """Empirical ``E||g||^2`` and mean estimate over ``draws`` independent estimator calls.

    Draw ``r`` uses stream ``(seed, agent, r)`` exactly as a ZODIAC round
    would.  Quadratic problems with common random numbers go through the
    round-kernel backend; anything else loops :func:`coordinate_estimate`.
    Pass ``backend="generic"`` to force the loop.
    """
    from ._kernels import get_backend
    from .problems import QuadraticProblem
    from .rng import AgentStream

    x = np.ascontiguousarray(x, dtype=float)
    p = x.size
    n_c = min(spec.n_c, p)
    if draws < 1:
        raise ValueError("draws must be positive")
    if backend != "generic" and type(problem) is QuadraticProblem and spec.common_random_numbers:
        kern = get_backend(backend)
        mean = np.zeros(p)
        sq = kern.quadratic_second_moment(
            np.ascontiguousarray(problem.A[agent]),
            np.ascontiguousarray(problem.b[agent]),
            x,
            problem.noise_std,
            problem.grad_noise_std,
            int(spec.kind is EstimatorKind.CENTRAL),
            n_c,
            float(delta),
            seed & ((1 << 64) - 1),
            agent,
            0,
            int(draws),
            mean,
        )
        return float(sq), mean
    total = 0.0
    mean = np.zeros(p)
    for r in range(draws):
        g = coordinate_estimate(spec, problem, agent, x, delta, AgentStream(seed, agent, r))
        total += float(g @ g)
        mean += g
    return total / draws, mean / draws
