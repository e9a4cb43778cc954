"""Undirected communication graphs and their Laplacian spectral data."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ZERO_EIG_TOL = 1e-10
MAX_ER_RETRIES = 10_000


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Undirected weighted graph on agents ``0..n-1``.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...] = ()
    weights: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"agent count must be positive, got {self.n}")
        canon = []
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise GraphError(f"edge ({i}, {j}) out of range for n={self.n}")
            e = (min(i, j), max(i, j))
            if e not in seen:
                seen.add(e)
                canon.append(e)
        canon.sort()
        weights = {}
        for (i, j), w in self.weights.items():
            e = (min(i, j), max(i, j))
            if e not in seen:
                raise GraphError(f"weight given for missing edge {e}")
            weights[e] = float(w)
        for e in canon:
            w = weights.setdefault(e, 1.0)
            if not w > 0:
                raise GraphError(f"edge {e} has non-positive weight {w}")
        object.__setattr__(self, "edges", tuple(canon))
        object.__setattr__(self, "weights", weights)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for (i, j) in self.edges:
            A[i, j] = A[j, i] = self.weights[(i, j)]
        return A

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs


@dataclass(frozen=True, eq=False)
class LaplacianData:
    """Laplacian ``L = Deg - A`` with the spectral quantities used downstream.

    ``Q_small`` is ``R diag(1/lambda) R^T`` over eigenvectors with positive
    eigenvalue; on a connected graph ``Q_small @ L == K_small``.
    """

    L: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    rho: float
    rho2: float
    Q_small: np.ndarray
    K_small: np.ndarray

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1]) if self.n > 1 else 0.0

    @property
    def rho_L2(self) -> float:
        """Spectral radius of ``L @ L``."""
        return self.rho**2

    @property
    def connected(self) -> bool:
        return self.n == 1 or self.lambda2 > ZERO_EIG_TOL


def build_laplacian(topo: Topology) -> LaplacianData:
    A = topo.adjacency()
    L = np.diag(A.sum(axis=1)) - A
    evals, evecs = np.linalg.eigh(L)
    positive = evals > ZERO_EIG_TOL
    R = evecs[:, positive]
    Q = (R / evals[positive]) @ R.T
    n = topo.n
    K = np.eye(n) - np.full((n, n), 1.0 / n)
    rho = float(np.max(np.abs(evals)))
    rho2 = float(evals[positive].min()) if positive.any() else 0.0
    return LaplacianData(
        L=L, eigenvalues=evals, eigenvectors=evecs, rho=rho, rho2=rho2, Q_small=Q, K_small=K
    )


def is_connected(topo: Topology) -> bool:
    nbrs = topo.neighbors()
    seen = [False] * topo.n
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in nbrs[u]:
            if not seen[w]:
                seen[w] = True
                queue.append(w)
    return all(seen)


def gen_erdos_renyi(n: int, prob: float, seed: int, max_retries: int = MAX_ER_RETRIES) -> Topology:
    """Sample G(n, prob), resampling the whole graph until it is connected."""
    if n < 2:
        raise GraphError(f"Erdos-Renyi graph needs n >= 2, got {n}")
    if not 0.0 <= prob <= 1.0:
        raise GraphError(f"connection probability must lie in [0, 1], got {prob}")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_retries):
        keep = rng.random(iu.size) < prob
        topo = Topology(n, tuple(zip(iu[keep].tolist(), ju[keep].tolist())))
        if is_connected(topo):
            return topo
    raise GraphError(
        f"no connected G({n}, {prob}) sample after {max_retries} retries; probability too small"
    )


def path_graph(n: int) -> Topology:
    return Topology(n, tuple((i, i + 1) for i in range(n - 1)))


def complete_graph(n: int) -> Topology:
    return Topology(n, tuple((i, j) for i in range(n) for j in range(i + 1, n)))


def ring_graph(n: int) -> Topology:
    if n < 3:
        return path_graph(n)
    return Topology(n, tuple((i, (i + 1) % n) for i in range(n)))


def write_edgelist(topo: Topology, path) -> None:
    lines = [f"n {topo.n}"]
    lines += [f"{i} {j} {topo.weights[(i, j)]!r}" for i, j in topo.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edgelist(path) -> Topology:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"graph file not found: {path}")
    rows = [ln.split() for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or rows[0][0] != "n" or len(rows[0]) != 2:
        raise GraphError(f"{path}: first line must be 'n <count>'")
    n = int(rows[0][1])
    edges, weights = [], {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) not in (2, 3):
            raise GraphError(f"{path}:{lineno}: expected 'i j [weight]'")
        i, j = int(row[0]), int(row[1])
        edges.append((i, j))
        weights[(min(i, j), max(i, j))] = float(row[2]) if len(row) == 3 else 1.0
    return Topology(n, tuple(edges), weights)
