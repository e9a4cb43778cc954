# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ZODIAC round kernels.

Same contract and random-draw order as ``_fallback.py``; see that module.
"""

from libc.math cimport exp, log, cos, sqrt, pow, fabs, isfinite
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, free

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef double INV53 = 1.1102230246251565e-16  # 2**-53
cdef double TAU = 6.283185307179586


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef struct Stream:
    uint64_t key
    uint64_t counter


cdef inline void stream_init(Stream* s, uint64_t seed, uint64_t agent, uint64_t k) nogil:
    cdef uint64_t h = mix64(seed ^ 0x243F6A8885A308D3ULL)
    h = mix64(h ^ (agent * 0x9E3779B97F4A7C15ULL))
    h = mix64(h ^ (k * 0xC2B2AE3D27D4EB4FULL))
    s.key = mix64(h)  # tag 0
    s.counter = 0


cdef inline double uniform(Stream* s) nogil:
    s.counter += 1
    return <double>(mix64(s.key + s.counter * GOLDEN) >> 11) * INV53


cdef inline int64_t integers(Stream* s, int64_t m) nogil:
    cdef int64_t j = <int64_t>(uniform(s) * m)
    return j if j < m else m - 1


cdef inline double normal(Stream* s) nogil:
    cdef double u1 = uniform(s)
    cdef double u2 = uniform(s)
    return sqrt(-2.0 * log(1.0 - u1)) * cos(TAU * u2)


cdef inline void subset(Stream* s, int64_t* perm, int64_t p, int64_t n_c) nogil:
    cdef int64_t t, j, tmp
    for t in range(p):
        perm[t] = t
    for t in range(n_c):
        j = t + integers(s, p - t)
        tmp = perm[t]
        perm[t] = perm[j]
        perm[j] = tmp


cdef inline double sig(double z) nogil:
    cdef double ez
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


cdef inline double delta_at(int mode, double a, double b, int64_t k) nogil:
    if mode == 0:
        return a * pow(b * <double>(k + 1), -0.25)
    return a


cdef int primal_dual_update(double[:, ::1] X, double[:, ::1] V, const double[:, ::1] L,
                            double alpha, double beta, double eta,
                            const double[:, ::1] G, double[:, ::1] X_prev,
                            double* LX, double bound) nogil:
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j, c
    cdef double lij, lx, val
    cdef int bad = 0
    for i in range(n):
        for c in range(p):
            LX[i * p + c] = 0.0
        for j in range(n):
            lij = L[i, j]
            if lij != 0.0:
                for c in range(p):
                    LX[i * p + c] += lij * X[j, c]
    for i in range(n):
        for c in range(p):
            lx = LX[i * p + c]
            X_prev[i, c] = X[i, c]
            val = X[i, c] - eta * (alpha * lx + beta * V[i, c] + G[i, c])
            X[i, c] = val
            V[i, c] = V[i, c] + (eta * beta) * lx
            if not (fabs(val) <= bound):
                bad = 1
    return bad


def zodiac_rounds_logistic(
    double[:, ::1] X, double[:, ::1] V, const double[:, ::1] L,
    double alpha, double beta, double eta, int central, int64_t n_c,
    int delta_mode, double delta_a, double delta_b,
    uint64_t seed, int64_t k0, int64_t steps,
    const double[:, ::1] features, const double[::1] labels,
    const int64_t[::1] shard_ptr, const int64_t[::1] shard_idx, double noise_std,
    double[:, ::1] G, double[:, ::1] X_prev, double bound=1e12,
):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], d = features.shape[1]
    cdef int64_t r, k, i, t, j, lo, hi, sample
    cdef double delta, eps, z, y, F0, Fp, Fm, scale = <double>p / <double>n_c
    cdef Stream st
    cdef int64_t* perm = <int64_t*> malloc(p * sizeof(int64_t))
    cdef double* LX = <double*> malloc(n * p * sizeof(double))
    cdef int status = 0
    if perm == NULL or LX == NULL:
        free(perm); free(LX)
        raise MemoryError()
    if d != p:
        free(perm); free(LX)
        raise ValueError("feature dimension does not match iterate dimension")
    try:
        with nogil:
            for r in range(steps):
                k = k0 + r
                delta = delta_at(delta_mode, delta_a, delta_b, k)
                for i in range(n):
                    for t in range(p):
                        G[i, t] = 0.0
                    stream_init(&st, seed, <uint64_t>i, <uint64_t>k)
                    subset(&st, perm, p, n_c)
                    lo = shard_ptr[i]
                    hi = shard_ptr[i + 1]
                    sample = shard_idx[lo + integers(&st, hi - lo)]
                    eps = noise_std * normal(&st)
                    y = labels[sample]
                    z = 0.0
                    for t in range(p):
                        z += features[sample, t] * X[i, t]
                    F0 = (y - sig(z)) * (y - sig(z)) + eps
                    for t in range(n_c):
                        j = perm[t]
                        Fp = y - sig(z + delta * features[sample, j])
                        Fp = Fp * Fp + eps
                        if central:
                            Fm = y - sig(z - delta * features[sample, j])
                            Fm = Fm * Fm + eps
                            G[i, j] += scale * ((Fp - Fm) / (2.0 * delta))
                        else:
                            G[i, j] += scale * ((Fp - F0) / delta)
                if primal_dual_update(X, V, L, alpha, beta, eta, G, X_prev, LX, bound):
                    status = 1
                    break
    finally:
        free(perm)
        free(LX)
    return (r + 1 if status else steps), status


def zodiac_rounds_quadratic(
    double[:, ::1] X, double[:, ::1] V, const double[:, ::1] L,
    double alpha, double beta, double eta, int central, int64_t n_c,
    int delta_mode, double delta_a, double delta_b,
    uint64_t seed, int64_t k0, int64_t steps,
    const double[:, :, ::1] A, const double[:, ::1] b,
    double noise_std, double grad_noise_std,
    double[:, ::1] G, double[:, ::1] X_prev, double bound=1e12,
):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef int64_t r, k, i, t, j, c
    cdef double delta, eps, base, slope, curv, Fp, Fm, xAx, bx, scale = <double>p / <double>n_c
    cdef Stream st
    cdef int64_t* perm = <int64_t*> malloc(p * sizeof(int64_t))
    cdef double* LX = <double*> malloc(n * p * sizeof(double))
    cdef double* Ax = <double*> malloc(p * sizeof(double))
    cdef double* zeta = <double*> malloc(p * sizeof(double))
    cdef int status = 0
    if perm == NULL or LX == NULL or Ax == NULL or zeta == NULL:
        free(perm); free(LX); free(Ax); free(zeta)
        raise MemoryError()
    try:
        with nogil:
            for r in range(steps):
                k = k0 + r
                delta = delta_at(delta_mode, delta_a, delta_b, k)
                for i in range(n):
                    for t in range(p):
                        G[i, t] = 0.0
                    stream_init(&st, seed, <uint64_t>i, <uint64_t>k)
                    subset(&st, perm, p, n_c)
                    eps = normal(&st)
                    xAx = 0.0
                    bx = 0.0
                    for t in range(p):
                        Ax[t] = 0.0
                        for c in range(p):
                            Ax[t] += A[i, t, c] * X[i, c]
                        xAx += X[i, t] * Ax[t]
                        bx += b[i, t] * X[i, t]
                    base = 0.5 * xAx - bx + noise_std * eps
                    if grad_noise_std > 0:
                        for t in range(p):
                            zeta[t] = normal(&st)
                        for t in range(p):
                            base += grad_noise_std * zeta[t] * X[i, t]
                    for t in range(n_c):
                        j = perm[t]
                        slope = Ax[j] - b[i, j]
                        if grad_noise_std > 0:
                            slope = slope + grad_noise_std * zeta[j]
                        curv = 0.5 * A[i, j, j]
                        Fp = base + delta * slope + delta * delta * curv
                        if central:
                            Fm = base - delta * slope + delta * delta * curv
                            G[i, j] += scale * ((Fp - Fm) / (2.0 * delta))
                        else:
                            G[i, j] += scale * ((Fp - base) / delta)
                if primal_dual_update(X, V, L, alpha, beta, eta, G, X_prev, LX, bound):
                    status = 1
                    break
    finally:
        free(perm); free(LX); free(Ax); free(zeta)
    return (r + 1 if status else steps), status


def quadratic_second_moment(
    const double[:, ::1] A, const double[::1] b, const double[::1] x,
    double noise_std, double grad_noise_std, int central, int64_t n_c, double delta,
    uint64_t seed, uint64_t agent, int64_t k0, int64_t draws, double[::1] mean_g,
):
    """Average of ``||g||^2`` over ``draws`` estimates at the fixed point ``x``.

    Draw ``r`` reads stream ``(seed, agent, k0 + r)`` in the round-kernel order
    (subset, then ``xi``).  The mean estimate is written to ``mean_g``.
    """
    cdef Py_ssize_t p = x.shape[0]
    cdef int64_t r, t, j, c
    cdef double eps, base, slope, curv, Fp, Fm, gj, xAx = 0.0, bx = 0.0, acc = 0.0, sq
    cdef double scale = <double>p / <double>n_c
    cdef Stream st
    cdef int64_t* perm = <int64_t*> malloc(p * sizeof(int64_t))
    cdef double* Ax = <double*> malloc(p * sizeof(double))
    cdef double* zeta = <double*> malloc(p * sizeof(double))
    if perm == NULL or Ax == NULL or zeta == NULL:
        free(perm); free(Ax); free(zeta)
        raise MemoryError()
    try:
        with nogil:
            for t in range(p):
                mean_g[t] = 0.0
                Ax[t] = 0.0
                for c in range(p):
                    Ax[t] += A[t, c] * x[c]
                xAx += x[t] * Ax[t]
                bx += b[t] * x[t]
            for r in range(draws):
                stream_init(&st, seed, agent, <uint64_t>(k0 + r))
                subset(&st, perm, p, n_c)
                eps = normal(&st)
                base = 0.5 * xAx - bx + noise_std * eps
                if grad_noise_std > 0:
                    for t in range(p):
                        zeta[t] = normal(&st)
                    for t in range(p):
                        base += grad_noise_std * zeta[t] * x[t]
                sq = 0.0
                for t in range(n_c):
                    j = perm[t]
                    slope = Ax[j] - b[j]
                    if grad_noise_std > 0:
                        slope = slope + grad_noise_std * zeta[j]
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
            for t in range(p):
                mean_g[t] /= <double>draws
    finally:
        free(perm); free(Ax); free(zeta)
    return acc / <double>draws
