"""Stochastic zeroth-order oracles and the two concrete test problems.

An oracle exposes ``draw_xi`` (one stochastic realisation, drawn from a
caller-supplied :class:`~zodiac.rng.AgentStream`) and ``evaluate`` (the
scalar ``F_i(x, xi)``).  Estimators draw ``xi`` once and reuse it for every
point they probe.  ``true_local_gradient`` is for metrics only.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def sigmoid(z):
    """Numerically stable logistic function (scalar or array)."""
    if np.ndim(z) == 0:
        z = float(z)
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        ez = math.exp(z)
        return ez / (1.0 + ez)
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_dim(x: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (p,):
        raise ValueError(f"expected a vector of dimension {p}, got shape {x.shape}")
    return x


class StochasticOracle:
    """Base class for per-agent stochastic zeroth-order oracles."""

    dim: int
    n_agents: int

    def draw_xi(self, agent, rng):
        return None

    def evaluate(self, agent: int, x: np.ndarray, xi) -> float:
        raise NotImplementedError

    def evaluate_along(self, agent, x, xi, coords, steps) -> np.ndarray:
        """``F(x + steps[t] * e_{coords[t]}, xi)`` for each t; one oracle call per entry."""
        out = np.empty(len(coords))
        for t, (j, s) in enumerate(zip(coords, steps)):
            y = np.array(x, dtype=float)
            y[j] += s
            out[t] = self.evaluate(agent, y, xi)
        return out

    def local_value(self, agent: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def true_local_gradient(self, agent: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def global_value(self, x) -> float:
        return float(np.mean([self.local_value(i, x) for i in range(self.n_agents)]))

    def global_gradient(self, x) -> np.ndarray:
        return np.mean([self.true_local_gradient(i, x) for i in range(self.n_agents)], axis=0)


def eval_noisy(problem: StochasticOracle, agent: int, x, rng) -> float:
    """One draw of ``F_i(x, xi)`` with a fresh ``xi`` from ``rng``."""
    x = _check_dim(x, problem.dim)
    return problem.evaluate(agent, x, problem.draw_xi(agent, rng))


def true_local_gradient(problem: StochasticOracle, agent: int, x) -> np.ndarray:
    return problem.true_local_gradient(agent, _check_dim(x, problem.dim))


class FunctionOracle(StochasticOracle):
    """Noiseless oracle around plain callables, replicated across agents."""

    def __init__(self, f, dim: int, grad=None, n_agents: int = 1):
        self.f = f
        self.grad = grad
        self.dim = dim
        self.n_agents = n_agents

    def evaluate(self, agent, x, xi):
        return float(self.f(x))

    def local_value(self, agent, x):
        return float(self.f(x))

    def true_local_gradient(self, agent, x):
        if self.grad is None:
            raise NotImplementedError("no analytic gradient supplied")
        return np.asarray(self.grad(x), dtype=float)


class CountingOracle(StochasticOracle):
    """Wraps an oracle and counts scalar evaluations."""

    def __init__(self, inner: StochasticOracle):
        self.inner = inner
        self.dim = inner.dim
        self.n_agents = inner.n_agents
        self.calls = 0

    def draw_xi(self, agent, rng):
        return self.inner.draw_xi(agent, rng)

    def evaluate(self, agent, x, xi):
        self.calls += 1
        return self.inner.evaluate(agent, x, xi)

    def evaluate_along(self, agent, x, xi, coords, steps):
        self.calls += len(coords)
        return self.inner.evaluate_along(agent, x, xi, coords, steps)

    def local_value(self, agent, x):
        return self.inner.local_value(agent, x)

    def true_local_gradient(self, agent, x):
        return self.inner.true_local_gradient(agent, x)


# ---------------------------------------------------------------------------
# Classification benchmark


@dataclass(frozen=True, eq=False)
class ClassificationDataset:
    features: np.ndarray  # (n_train + n_test, d)
    labels: np.ndarray  # 0.0 / 1.0
    train_idx: np.ndarray
    test_idx: np.ndarray
    partition: tuple[np.ndarray, ...] = ()

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        idx = {"train": self.train_idx, "test": self.test_idx}[name]
        return self.features[idx], self.labels[idx]

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.features, self.labels, self.train_idx, self.test_idx, *self.partition):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def gen_dataset(d: int, n_train: int, n_test: int, seed: int) -> ClassificationDataset:
    """Gaussian features labelled by the classifier ``x_opt = 1``."""
    if d < 1 or n_train < 1 or n_test < 1:
        raise ValueError("d, n_train and n_test must all be positive")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n_train + n_test, d))
    labels = (sigmoid(features @ np.ones(d)) >= 0.5).astype(float)
    return ClassificationDataset(
        features=features,
        labels=labels,
        train_idx=np.arange(n_train),
        test_idx=np.arange(n_train, n_train + n_test),
    )


def partition_dataset(ds: ClassificationDataset, n_agents: int, seed: int) -> ClassificationDataset:
    """Shuffle the training indices and cut them into ``n_agents`` near-equal shards."""
    if n_agents > ds.train_idx.size:
        raise ValueError(f"cannot split {ds.train_idx.size} samples over {n_agents} agents")
    rng = np.random.default_rng([seed, 0x5A4D])
    perm = rng.permutation(ds.train_idx)
    shards = tuple(np.sort(s) for s in np.array_split(perm, n_agents))
    return ClassificationDataset(ds.features, ds.labels, ds.train_idx, ds.test_idx, shards)


def save_dataset_csv(ds: ClassificationDataset, path) -> None:
    owner = np.full(ds.features.shape[0], -1, dtype=int)
    for agent, shard in enumerate(ds.partition):
        owner[shard] = agent
    split = np.empty(ds.features.shape[0], dtype=object)
    split[ds.train_idx] = "train"
    split[ds.test_idx] = "test"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"a{j}" for j in range(ds.d)] + ["label", "split", "agent"])
        for r in range(ds.features.shape[0]):
            w.writerow([repr(float(v)) for v in ds.features[r]] + [int(ds.labels[r]), split[r], owner[r]])


def load_dataset_csv(path) -> ClassificationDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 3
    features = np.array([[float(v) for v in r[:d]] for r in body])
    labels = np.array([float(r[d]) for r in body])
    split = np.array([r[d + 1] for r in body])
    owner = np.array([int(r[d + 2]) for r in body])
    n_agents = owner.max() + 1 if owner.size else 0
    partition = tuple(np.flatnonzero(owner == a) for a in range(n_agents))
    return ClassificationDataset(
        features, labels, np.flatnonzero(split == "train"), np.flatnonzero(split == "test"), partition
    )


class ClassificationProblem(StochasticOracle):
    """Sigmoid least squares ``(y - sigmoid(a^T x))^2`` sharded over agents.

    ``F_i(x, xi)`` picks one sample of agent ``i``'s shard and adds Gaussian
    noise of variance ``noise_var`` to the loss value.
    """

    def __init__(self, dataset: ClassificationDataset, noise_var: float = 0.01):
        if not dataset.partition:
            raise ValueError("dataset has no agent partition; call partition_dataset first")
        self.dataset = dataset
        self.dim = dataset.d
        self.n_agents = len(dataset.partition)
        self.noise_var = float(noise_var)
        self.noise_std = float(np.sqrt(noise_var))
        self.shards = [np.asarray(s, dtype=np.int64) for s in dataset.partition]
        self._local = [(dataset.features[s], dataset.labels[s]) for s in self.shards]

    def pooled(self) -> ClassificationProblem:
        """Same data as a single agent owning the whole training set."""
        ds = self.dataset
        merged = ClassificationDataset(
            ds.features, ds.labels, ds.train_idx, ds.test_idx, (np.sort(np.concatenate(ds.partition)),)
        )
        return ClassificationProblem(merged, self.noise_var)

    def draw_xi(self, agent, rng):
        shard = self.shards[agent]
        sample = int(shard[rng.integers(shard.size)])
        eps = self.noise_std * rng.normal()
        return sample, eps

    def evaluate(self, agent, x, xi):
        sample, eps = xi
        a = self.dataset.features[sample]
        r = self.dataset.labels[sample] - sigmoid(float(a @ x))
        return r * r + eps

    def evaluate_along(self, agent, x, xi, coords, steps):
        sample, eps = xi
        a = self.dataset.features[sample]
        z = float(a @ x) + np.asarray(steps, dtype=float) * a[np.asarray(coords)]
        r = self.dataset.labels[sample] - sigmoid(z)
        return r * r + eps

    def local_value(self, agent, x):
        A, y = self._local[agent]
        return float(np.mean((y - sigmoid(A @ x)) ** 2))

    def true_local_gradient(self, agent, x):
        A, y = self._local[agent]
        s = sigmoid(A @ x)
        return A.T @ (-2.0 * (y - s) * s * (1.0 - s)) / y.size

    def smoothness_constant(self) -> float:
        """Upper bound on the per-sample Hessian norm, ``max ||a||^2 * max |h''|``."""
        z = np.linspace(-20, 20, 40001)
        s = sigmoid(z)
        ds = s * (1 - s)
        d2s = ds * (1 - 2 * s)
        c = 0.0
        for y in (0.0, 1.0):
            # d^2/dz^2 (y - s)^2 = 2 ds^2 - 2 (y - s) d2s
            c = max(c, float(np.max(np.abs(2 * ds**2 - 2 * (y - s) * d2s))))
        norms = np.einsum("ij,ij->i", self.dataset.features, self.dataset.features)
        return float(norms[self.dataset.train_idx].max() * c)


# ---------------------------------------------------------------------------
# Quadratic validation problem


class QuadraticProblem(StochasticOracle):
    """``f_i(x) = 0.5 x^T A_i x - b_i^T x`` with optional oracle noise.

    ``F_i(x, xi) = f_i(x) + grad_noise_std * zeta^T x + noise_std * eps`` with
    ``zeta ~ N(0, I_p)`` and ``eps ~ N(0, 1)``, so the stochastic gradient has
    per-coordinate variance ``grad_noise_std**2``.
    """

    def __init__(self, A, b, noise_std: float = 0.0, grad_noise_std: float = 0.0):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n_agents, self.dim = self.b.shape
        if self.A.shape != (self.n_agents, self.dim, self.dim):
            raise ValueError("A must have shape (n, p, p) matching b of shape (n, p)")
        if not np.allclose(self.A, self.A.transpose(0, 2, 1)):
            raise ValueError("A_i must be symmetric")
        self.noise_std = float(noise_std)
        self.grad_noise_std = float(grad_noise_std)

    @property
    def L_f(self) -> float:
        return float(max(np.linalg.eigvalsh(Ai).max() for Ai in self.A))

    @property
    def zeta_sq(self) -> float:
        return self.grad_noise_std**2

    @property
    def sigma1_sq(self) -> float:
        return self.dim * self.grad_noise_std**2

    def pooled(self) -> QuadraticProblem:
        """Single agent holding the average quadratic (same global objective)."""
        return QuadraticProblem(
            self.A.mean(axis=0, keepdims=True), self.b.mean(axis=0, keepdims=True), self.noise_std, self.grad_noise_std
        )

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.A.sum(axis=0), self.b.sum(axis=0))

    def f_star(self) -> float:
        return self.global_value(self.minimizer())

    def draw_xi(self, agent, rng):
        eps = rng.normal()
        zeta = rng.normals(self.dim) if self.grad_noise_std > 0 else None
        return eps, zeta

    def _noise(self, x, xi):
        eps, zeta = xi
        out = self.noise_std * eps
        if zeta is not None:
            out += self.grad_noise_std * float(zeta @ x)
        return out

    def evaluate(self, agent, x, xi):
        return self.local_value(agent, x) + self._noise(x, xi)

    def evaluate_along(self, agent, x, xi, coords, steps):
        coords = np.asarray(coords)
        steps = np.asarray(steps, dtype=float)
        Ai = self.A[agent]
        base = self.evaluate(agent, x, xi)
        slope = Ai[coords] @ x - self.b[agent, coords]
        zeta = xi[1]
        if zeta is not None:
            slope = slope + self.grad_noise_std * zeta[coords]
        return base + steps * slope + 0.5 * steps**2 * Ai[coords, coords]

    def local_value(self, agent, x):
        return float(0.5 * x @ self.A[agent] @ x - self.b[agent] @ x)

    def true_local_gradient(self, agent, x):
        return self.A[agent] @ x - self.b[agent]


def gen_quadratic(n: int, p: int, condition: float = 10.0, seed: int = 0, **noise) -> QuadraticProblem:
    """Random heterogeneous quadratics with eigenvalues in ``[1/condition, 1]``."""
    rng = np.random.default_rng([seed, 0x9A0])
    A = np.empty((n, p, p))
    for i in range(n):
        Qm, _ = np.linalg.qr(rng.standard_normal((p, p)))
        eig = np.geomspace(1.0 / condition, 1.0, p) if p > 1 else np.ones(1)
        A[i] = (Qm * eig) @ Qm.T
        A[i] = 0.5 * (A[i] + A[i].T)
    b = rng.standard_normal((n, p))
    return QuadraticProblem(A, b, **noise)
