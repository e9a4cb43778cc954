"""Run one configured experiment and collect its checkpoint trace."""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._kernels import get_backend
from .baselines import (
    BaselineConfig,
    TrackingState,
    ZoneState,
    gda_step_size,
    mixing_matrix,
    oracle_calls_per_iteration,
    zo_gda_init,
    zo_gda_step,
    zo_scd_step,
    zo_sgd_step,
    zone_m_penalty,
    zone_m_step,
)
from .config import ExperimentConfig
from .core import (
    DivergenceError,
    HyperParams,
    NetworkState,
    check_theorem_schedule,
    linear_stability_radius,
    theorem_schedule,
    zodiac_step,
)
from .estimators import DeltaMode, DeltaSchedule, EstimatorSpec, delta_at
from .graph import (
    LaplacianData,
    Topology,
    build_laplacian,
    complete_graph,
    gen_erdos_renyi,
    path_graph,
    read_edgelist,
    ring_graph,
)
from .metrics import (
    TraceRow,
    consensus_error,
    evaluate_accuracy,
    grad_estimation_error,
    lyapunov_w,
    train_loss,
)
from .problems import (
    ClassificationProblem,
    QuadraticProblem,
    gen_dataset,
    gen_quadratic,
    load_dataset_csv,
    partition_dataset,
)
from .rng import TAG_INIT, RngStreams

DUAL_SUM_TOL = 1e-8
MEAN_DYNAMICS_TOL = 1e-10
TRACKING_TOL = 1e-6


class InvariantError(AssertionError):
    pass


@dataclass
class Materialized:
    problem: object
    topology: Topology
    lap: LaplacianData
    dataset: object = None

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.lap.L).tobytes())
        if self.dataset is not None:
            h.update(self.dataset.digest().encode())
        else:
            h.update(self.problem.A.tobytes())
            h.update(self.problem.b.tobytes())
        return h.hexdigest()[:16]


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list
    final: dict
    metadata: dict
    residuals: dict = field(default_factory=dict)


def build_topology(cfg: ExperimentConfig) -> Topology:
    g = cfg.graph
    seed = cfg.seed if g.seed is None else g.seed
    if g.kind == "erdos_renyi":
        return gen_erdos_renyi(g.n, g.prob, seed)
    if g.kind == "path":
        return path_graph(g.n)
    if g.kind == "complete":
        return complete_graph(g.n)
    if g.kind == "ring":
        return ring_graph(g.n)
    return read_edgelist(g.file)


def materialize(cfg: ExperimentConfig) -> Materialized:
    topo = build_topology(cfg)
    lap = build_laplacian(topo)
    pr = cfg.problem
    seed = cfg.seed if pr.dataset_seed is None else pr.dataset_seed
    if pr.kind == "classification":
        if pr.dataset_file is not None:
            ds = load_dataset_csv(pr.dataset_file)
            if len(ds.partition) != topo.n:
                ds = partition_dataset(ds, topo.n, seed)
        else:
            ds = partition_dataset(gen_dataset(pr.d, pr.n_train, pr.n_test, seed), topo.n, seed)
        return Materialized(ClassificationProblem(ds, pr.noise_var), topo, lap, ds)
    problem = gen_quadratic(
        topo.n, pr.p, pr.condition, seed, noise_std=pr.noise_std, grad_noise_std=pr.grad_noise_std
    )
    return Materialized(problem, topo, lap)


def estimator_spec(cfg: ExperimentConfig, p: int) -> EstimatorSpec:
    kind = {"zodiac_opt1": "forward", "zodiac_opt2": "central", "zo_gda": "central"}.get(
        cfg.algorithm, cfg.estimator.kind or "forward"
    )
    d = cfg.estimator.delta
    schedule = DeltaSchedule(DeltaMode(d.mode), kappa_delta=d.kappa_delta, value=d.value, T=max(cfg.T, 1), d=p)
    return EstimatorSpec(kind, min(cfg.estimator.n_c, p), schedule, cfg.estimator.common_random_numbers)


def resolve_hyperparams(cfg: ExperimentConfig, lap: LaplacianData, p: int, n: int) -> HyperParams:
    h = cfg.hyper
    if h.mode == "theorem":
        return theorem_schedule(lap, p, n, max(cfg.T, 1), h.kappa1, h.kappa2, h.kappa_delta)
    return HyperParams(h.alpha, h.beta, h.eta, mode="manual", kappa1=h.kappa1, kappa2=h.kappa2)


def initial_iterates(cfg: ExperimentConfig, n: int, p: int) -> np.ndarray:
    if cfg.init.mode == "zeros":
        return np.zeros((n, p))
    streams = RngStreams(cfg.seed)
    return np.stack([cfg.init.scale * streams(i, 0, TAG_INIT).normals(p) for i in range(n)])


# -- algorithm drivers ---------------------------------------------------------------


class _Driver:
    calls_per_iter: int
    init_calls: int = 0
    k: int = 0
    last_g = None  # (n, p) most recent estimates
    last_at = None  # (n, p) points at which last_g was drawn
    problem_for_est = None

    def advance(self, steps: int) -> None:
        raise NotImplementedError

    @property
    def x(self) -> np.ndarray:
        raise NotImplementedError

    def check_invariants(self) -> dict:
        return {}

    def final_state(self) -> dict:
        return {"x": self.x}


class _ZodiacDriver(_Driver):
    def __init__(self, cfg, mat, spec, hp, streams, backend):
        self.lap = mat.lap
        self.problem = mat.problem
        self.problem_for_est = mat.problem
        self.spec = spec
        self.hp = hp
        self.streams = streams
        n, p = mat.problem.n_agents, mat.problem.dim
        self.state = NetworkState.initial(initial_iterates(cfg, n, p))
        self.calls_per_iter = n * spec.calls_per_estimate(p)
        self.kernel = None
        kernel_ok = spec.common_random_numbers and type(mat.problem) in (ClassificationProblem, QuadraticProblem)
        if kernel_ok and backend != "generic":
            self.kernel = get_backend(backend)
            self._pack(mat.problem)
        self.backend_name = self.kernel.name if self.kernel else "generic"
        self.v_norm_max = 0.0
        self.x_bar_prev = None

    def _pack(self, problem):
        self.L = np.ascontiguousarray(self.lap.L)
        n, p = problem.n_agents, problem.dim
        self.G = np.zeros((n, p))
        self.X_prev = np.zeros((n, p))
        sched = self.spec.delta
        if sched.mode is DeltaMode.THEOREM:
            self.delta_args = (0, sched.kappa_delta, float(p * n))
        else:
            self.delta_args = (1, delta_at(sched, 0, p, n), 0.0)
        if isinstance(problem, ClassificationProblem):
            ds = problem.dataset
            self.kernel_fn = self.kernel.zodiac_rounds_logistic
            self.data_args = (
                np.ascontiguousarray(ds.features),
                np.ascontiguousarray(ds.labels),
                np.cumsum([0] + [s.size for s in problem.shards]).astype(np.int64),
                np.concatenate(problem.shards).astype(np.int64),
                problem.noise_std,
            )
        else:
            self.kernel_fn = self.kernel.zodiac_rounds_quadratic
            self.data_args = (
                np.ascontiguousarray(problem.A),
                np.ascontiguousarray(problem.b),
                problem.noise_std,
                problem.grad_noise_std,
            )

    @property
    def x(self):
        return self.state.x

    def advance(self, steps):
        if steps <= 0:
            return
        if self.kernel is None:
            for _ in range(steps):
                prev = self.state
                self.state, G = zodiac_step(prev, self.lap, self.hp, self.spec, self.problem, self.streams, True)
                self.last_g, self.last_at = G, prev.x
        else:
            s = self.state
            X = np.ascontiguousarray(s.x)
            V = np.ascontiguousarray(s.v)
            central = 1 if self.spec.kind.value == "central" else 0
            done, status = self.kernel_fn(
                X, V, self.L, self.hp.alpha, self.hp.beta, self.hp.eta, central, self.spec.n_c,
                *self.delta_args, self.streams.seed & ((1 << 64) - 1), s.k, steps,
                *self.data_args, self.G, self.X_prev,
            )
            self.state = NetworkState(s.k + done, X, V)
            if status:
                raise DivergenceError(self.state.k)
            self.last_g, self.last_at = self.G.copy(), self.X_prev.copy()
        self.k = self.state.k

    def check_invariants(self):
        v = self.state.v
        self.v_norm_max = max(self.v_norm_max, float(np.max(np.linalg.norm(v, axis=1))))
        dual_sum = float(np.linalg.norm(v.sum(axis=0)))
        if dual_sum > DUAL_SUM_TOL * (1.0 + self.v_norm_max):
            raise InvariantError(f"dual sum {dual_sum:.3e} at k={self.k}")
        out = {"dual_sum": dual_sum, "dual_sum_tol": DUAL_SUM_TOL * (1.0 + self.v_norm_max)}
        if self.last_g is not None:
            prev_bar = self.last_at.mean(axis=0)
            step = self.hp.eta * self.last_g.mean(axis=0)
            resid = float(np.linalg.norm(self.state.x_bar - (prev_bar - step)))
            rel = resid / (1.0 + np.linalg.norm(prev_bar) + np.linalg.norm(step))
            if rel > MEAN_DYNAMICS_TOL:
                raise InvariantError(f"mean dynamics residual {rel:.3e} at k={self.k}")
            out["mean_dynamics"] = rel
        return out

    def final_state(self):
        return {"x": self.state.x, "v": self.state.v}


class _CentralDriver(_Driver):
    def __init__(self, cfg, mat, streams):
        self.algorithm = cfg.algorithm
        self.pooled = mat.problem.pooled()
        self.problem_for_est = self.pooled
        self.mu = cfg.baseline.mu
        self.eta = cfg.baseline.eta0
        self.streams = streams
        self._x = initial_iterates(cfg, 1, mat.problem.dim)[0]
        self.calls_per_iter = 2
        self.step_fn = zo_sgd_step if cfg.algorithm == "zo_sgd" else zo_scd_step

    @property
    def x(self):
        return self._x[None, :]

    def advance(self, steps):
        for _ in range(steps):
            prev = self._x
            self._x, g = self.step_fn(prev, self.pooled, self.mu, self.eta, self.streams(0, self.k + 1), self.k)
            self.last_g, self.last_at = g[None, :], prev[None, :]
            self.k += 1


class _GdaDriver(_Driver):
    def __init__(self, cfg, mat, spec, streams):
        self.problem = self.problem_for_est = mat.problem
        self.spec = spec
        self.streams = streams
        self.W = mixing_matrix(mat.lap)
        self.bc = cfg.baseline
        n, p = mat.problem.n_agents, mat.problem.dim
        self.state = zo_gda_init(initial_iterates(cfg, n, p), spec, mat.problem, streams)
        self.calls_per_iter = n * spec.calls_per_estimate(p)
        self.init_calls = self.calls_per_iter
        self.last_g, self.last_at = self.state.g, self.state.x

    @property
    def x(self):
        return self.state.x

    def advance(self, steps):
        for _ in range(steps):
            eta_k = gda_step_size(self.bc.eta0, self.bc.decay_exponent, self.state.k + 1)
            self.state = zo_gda_step(self.state, self.W, eta_k, self.spec, self.problem, self.streams)
        self.k = self.state.k
        self.last_g, self.last_at = self.state.g, self.state.x

    def check_invariants(self):
        resid = float(np.linalg.norm(self.state.y.sum(axis=0) - self.state.g.sum(axis=0)))
        scale = 1.0 + float(np.sum(np.linalg.norm(self.state.g, axis=1)))
        if resid > TRACKING_TOL * scale:
            raise InvariantError(f"tracking sum residual {resid:.3e} at k={self.k}")
        return {"tracking_sum": resid / scale}

    def final_state(self):
        return {"x": self.state.x, "y": self.state.y}


class _ZoneDriver(_Driver):
    def __init__(self, cfg, mat, streams):
        self.problem = self.problem_for_est = mat.problem
        self.lap = mat.lap
        self.streams = streams
        self.bc = cfg.baseline
        n, p = mat.problem.n_agents, mat.problem.dim
        x0 = initial_iterates(cfg, n, p)
        self.state = ZoneState(0, x0, np.zeros_like(x0), np.zeros_like(x0))
        self.calls_per_iter = 2 * n
        self.L_pinv_proj = np.eye(n) - np.full((n, n), 1.0 / n)

    @property
    def x(self):
        return self.state.x

    def advance(self, steps):
        for _ in range(steps):
            prev = self.state
            rho = zone_m_penalty(self.bc.rho0, prev.k + 1)
            self.state = zone_m_step(prev, self.lap, rho, self.bc.mu, self.problem, self.streams)
            self.last_g, self.last_at = self.state.g, prev.x
        self.k = self.state.k

    def check_invariants(self):
        lam = self.state.lam
        # multipliers must stay in range(L): zero component along the consensus direction
        resid = float(np.linalg.norm(lam.sum(axis=0)))
        scale = 1.0 + float(np.max(np.linalg.norm(lam, axis=1)))
        if resid > DUAL_SUM_TOL * scale:
            raise InvariantError(f"ZONE-M multiplier leaves range(L): {resid:.3e} at k={self.k}")
        return {"multiplier_range": resid / scale}

    def final_state(self):
        return {"x": self.state.x, "lam": self.state.lam}


# -- main entry ------------------------------------------------------------------------


def _checkpoints(T: int, every: int) -> list[int]:
    ks = list(range(0, T + 1, every))
    if ks[-1] != T:
        ks.append(T)
    return ks


def substituted_defaults(cfg: ExperimentConfig) -> list[str]:
    notes = ["graph edge weights 1.0 (unspecified in the benchmark description)"]
    if cfg.problem.kind == "classification":
        notes.append(f"oracle noise: additive Gaussian, variance problem.noise_var={cfg.problem.noise_var}")
        notes.append("training set split uniformly at random into equal agent shards")
    if cfg.algorithm in ("zodiac_opt1", "zodiac_opt2", "zo_gda"):
        notes.append(f"coordinate budget estimator.n_c={cfg.estimator.n_c} (unspecified in the benchmark)")
    if cfg.algorithm in ("zo_sgd", "zo_scd"):
        notes.append(f"stepsize baseline.eta0={cfg.baseline.eta0} (unspecified for centralised baselines)")
    if cfg.algorithm == "zo_gda":
        notes.append("mixing matrix W = I - L/(rho(L)+1); central coordinate estimator shared with ZODIAC")
    if cfg.algorithm == "zone_m":
        notes.append(f"ZONE-M with J=1 two-point Gaussian sample, mu=baseline.mu={cfg.baseline.mu}")
    return notes


def run(cfg: ExperimentConfig, mat: Materialized | None = None, backend: str | None = None) -> RunResult:
    """Execute ``cfg`` and return the trace.

    ``backend`` selects the ZODIAC round kernel: ``"cython"``, ``"python"``,
    ``"generic"`` (per-agent oracle path) or ``None`` for the default.
    Raises :class:`DivergenceError` with the partial trace attached as ``rows``.
    """
    t0 = time.perf_counter()
    cfg.validate()
    mat = mat or materialize(cfg)
    problem, lap = mat.problem, mat.lap
    n, p = problem.n_agents, problem.dim
    streams = RngStreams(cfg.seed)
    spec = estimator_spec(cfg, p)
    backend = backend or cfg.backend
    hp = None

    if cfg.algorithm.startswith("zodiac"):
        if not lap.connected:
            raise ValueError("ZODIAC needs a connected graph")
        hp = resolve_hyperparams(cfg, lap, p, n)
        driver = _ZodiacDriver(cfg, mat, spec, hp, streams, backend)
    elif cfg.algorithm in ("zo_sgd", "zo_scd"):
        driver = _CentralDriver(cfg, mat, streams)
    elif cfg.algorithm == "zo_gda":
        driver = _GdaDriver(cfg, mat, spec, streams)
    else:
        driver = _ZoneDriver(cfg, mat, streams)

    f_star = cfg.metrics.f_star
    if f_star is None and isinstance(problem, QuadraticProblem):
        f_star = problem.f_star()
    if cfg.metrics.f_star is not None and hp is not None and hp.kappa1 is None:
        raise ValueError("hyper.kappa1: the Lyapunov metric needs kappa1 when hyper.mode = 'manual'")
    want_lyap = hp is not None and f_star is not None and hp.kappa1 is not None

    rows: list[TraceRow] = []
    residuals: dict[str, float] = {}

    def record():
        x = driver.x
        x_bar = x.mean(axis=0)
        g = problem.global_gradient(x_bar)
        row = TraceRow(
            k=driver.k,
            train_loss=train_loss(problem, x, cfg.metrics.train_loss) if x.shape[0] == n else problem.global_value(x_bar),
            grad_norm_sq=float(g @ g),
            consensus_err=consensus_error(x),
            grad_est_err=None
            if driver.last_g is None
            else grad_estimation_error(driver.last_g, driver.last_at, driver.problem_for_est),
            test_acc=evaluate_accuracy(x_bar, mat.dataset, "test") if mat.dataset is not None else None,
            lyapunov_w=lyapunov_w(driver.state, lap, hp, problem, f_star) if want_lyap else None,
            oracle_calls=driver.init_calls + driver.calls_per_iter * driver.k,
        )
        rows.append(row)
        for key, val in driver.check_invariants().items():
            residuals[key] = max(residuals.get(key, 0.0), val)

    checkpoints = _checkpoints(cfg.T, cfg.checkpoint_every)
    try:
        record()
        for k_next in checkpoints[1:]:
            driver.advance(k_next - driver.k)
            record()
    except DivergenceError as exc:
        exc.rows = rows
        raise

    meta = {
        "library_version": __version__,
        "config": cfg.to_flat(),
        "backend": getattr(driver, "backend_name", "python"),
        "n_agents": n,
        "dim": p,
        "hyperparameters": None
        if hp is None
        else {k: getattr(hp, k) for k in ("alpha", "beta", "eta", "mode", "kappa1", "kappa2", "kappa_delta", "T")},
        "schedule_violations": check_theorem_schedule(hp, lap, p, n) if hp is not None and hp.mode == "theorem" else [],
        "linear_stability_radius": linear_stability_radius(lap, hp) if hp is not None else None,
        "delta_schedule": {
            "mode": spec.delta.mode.value,
            "delta_at_0": delta_at(spec.delta, 0, p, n),
            "kappa_delta": spec.delta.kappa_delta,
        },
        "estimator": {"kind": spec.kind.value, "n_c": spec.n_c, "common_random_numbers": spec.common_random_numbers},
        "baseline": BaselineConfig(**vars(cfg.baseline)).__dict__,
        "spectral": {
            "n": lap.n,
            "edges": mat.topology.num_edges,
            "rho": lap.rho,
            "rho2": lap.rho2,
            "eigenvalues": lap.eigenvalues.tolist(),
            "connected": lap.connected,
        },
        "oracle_calls_per_iteration": driver.calls_per_iter,
        "materialization_hash": mat.digest(),
        "f_star": f_star,
        "substituted_defaults": substituted_defaults(cfg),
        "invariant_residuals": residuals,
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    if not math.isfinite(rows[-1].train_loss):
        raise DivergenceError(rows[-1].k)
    final = dict(driver.final_state(), k=np.array(driver.k))
    return RunResult(cfg, rows, final, meta, residuals)
