"""Pure-Python/numpy ZODIAC round kernels.

Mirrors ``_core.pyx`` argument for argument and draw for draw.  Results
match the compiled kernel up to floating-point summation order.

Both kernels advance ``X``/``V`` in place for ``steps`` synchronous rounds
starting at iteration ``k0`` and leave the last round's estimates in ``G``
and the pre-update iterate in ``X_prev``.  Return ``(rounds_done, status)``
with status 0 on success and 1 when an iterate left the finite region
bounded by ``bound``.
"""

from __future__ import annotations

import math

import numpy as np

from ..problems import sigmoid
from ..rng import AgentStream


def _delta(delta_mode, delta_a, delta_b, k):
    if delta_mode == 0:
        return delta_a * (delta_b * (k + 1)) ** -0.25
    return delta_a


def _sig(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


_sig_vec = sigmoid


def _primal_dual_update(X, V, L, alpha, beta, eta, G, X_prev, bound):
    LX = L @ X
    X_prev[...] = X
    X -= eta * (alpha * LX + beta * V + G)
    V += (eta * beta) * LX
    m = np.max(np.abs(X))
    return not (m <= bound)


def zodiac_rounds_logistic(
    X, V, L, alpha, beta, eta, central, n_c, delta_mode, delta_a, delta_b,
    seed, k0, steps, features, labels, shard_ptr, shard_idx, noise_std, G, X_prev,
    bound=1e12,
):
    n, p = X.shape
    scale = p / n_c
    for r in range(steps):
        k = k0 + r
        delta = _delta(delta_mode, delta_a, delta_b, k)
        G[...] = 0.0
        for i in range(n):
            rng = AgentStream(seed, i, k)
            S = rng.subset(p, n_c)
            lo, hi = shard_ptr[i], shard_ptr[i + 1]
            sample = shard_idx[lo + rng.integers(hi - lo)]
            eps = noise_std * rng.normal()
            a = features[sample]
            y = labels[sample]
            z = float(a @ X[i])
            aS = a[S]
            Fp = (y - _sig_vec(z + delta * aS)) ** 2 + eps
            if central:
                Fm = (y - _sig_vec(z - delta * aS)) ** 2 + eps
                G[i, S] = scale * ((Fp - Fm) / (2.0 * delta))
            else:
                F0 = (y - _sig(z)) ** 2 + eps
                G[i, S] = scale * ((Fp - F0) / delta)
        if _primal_dual_update(X, V, L, alpha, beta, eta, G, X_prev, bound):
            return r + 1, 1
    return steps, 0


def zodiac_rounds_quadratic(
    X, V, L, alpha, beta, eta, central, n_c, delta_mode, delta_a, delta_b,
    seed, k0, steps, A, b, noise_std, grad_noise_std, G, X_prev,
    bound=1e12,
):
    n, p = X.shape
    scale = p / n_c
    for r in range(steps):
        k = k0 + r
        delta = _delta(delta_mode, delta_a, delta_b, k)
        G[...] = 0.0
        for i in range(n):
            rng = AgentStream(seed, i, k)
            S = rng.subset(p, n_c)
            eps = rng.normal()
            x = X[i]
            Ax = A[i] @ x
            base = 0.5 * float(x @ Ax) - float(b[i] @ x) + noise_std * eps
            slope = Ax[S] - b[i, S]
            if grad_noise_std > 0:
                zeta = rng.normals(p)
                base += grad_noise_std * float(zeta @ x)
                slope = slope + grad_noise_std * zeta[S]
            curv = 0.5 * A[i, S, S]
            Fp = base + delta * slope + delta * delta * curv
            if central:
                Fm = base - delta * slope + delta * delta * curv
                G[i, S] = scale * ((Fp - Fm) / (2.0 * delta))
            else:
                G[i, S] = scale * ((Fp - base) / delta)
        if _primal_dual_update(X, V, L, alpha, beta, eta, G, X_prev, bound):
            return r + 1, 1
    return steps, 0


def quadratic_second_moment(
    A, b, x, noise_std, grad_noise_std, central, n_c, delta, seed, agent, k0, draws, mean_g
):
    p = x.shape[0]
    Ax = A @ x
    xAx = float(x @ Ax)
    bx = float(b @ x)
    scale = p / n_c
    acc = 0.0
    mean_g[:] = 0.0
    for r in range(draws):
        st = AgentStream(seed, agent, k0 + r)
        perm = st.subset(p, n_c)
        eps = st.normal()
        base = 0.5 * xAx - bx + noise_std * eps
        zeta = None
        if grad_noise_std > 0:
            zeta = np.array([st.normal() for _ in range(p)])
            base += grad_noise_std * float(zeta @ x)
        sq = 0.0
        for j in perm:
            slope = Ax[j] - b[j]
            if zeta is not None:
                slope += grad_noise_std * zeta[j]
            curv = 0.5 * A[j, j]
            Fp = base + delta * slope + delta * delta * curv
            if central:
                Fm = base - delta * slope + delta * delta * curv
                gj = scale * ((Fp - Fm) / (2.0 * delta))
            else:
                gj = scale * ((Fp - base) / delta)
            sq += gj * gj
            mean_g[j] += gj
        acc += sq
    mean_g /= draws
    return acc / draws
