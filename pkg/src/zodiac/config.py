"""Experiment configuration: flat dotted keys in TOML syntax, plus presets.

Example::

    algorithm = "zodiac_opt1"
    T = 50000
    graph.kind = "erdos_renyi"
    estimator.n_c = 10
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import tomli_w

ALGORITHMS = ("zodiac_opt1", "zodiac_opt2", "zo_sgd", "zo_scd", "zo_gda", "zone_m")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass
class ProblemConfig:
    kind: str = "classification"
    d: int = 100
    n_train: int = 2000
    n_test: int = 200
    noise_var: float = 0.01
    dataset_seed: int | None = None
    dataset_file: str | None = None
    p: int = 4
    condition: float = 10.0
    noise_std: float = 0.0
    grad_noise_std: float = 0.0


@dataclass
class GraphConfig:
    kind: str = "erdos_renyi"
    n: int = 10
    prob: float = 0.4
    seed: int | None = None
    file: str | None = None


@dataclass
class DeltaConfig:
    mode: str = "fixed_experiment"
    kappa_delta: float = 1.0
    value: float = 1e-3


@dataclass
class EstimatorConfig:
    kind: str | None = None
    n_c: int = 1
    common_random_numbers: bool = True
    delta: DeltaConfig = field(default_factory=DeltaConfig)


@dataclass
class HyperConfig:
    mode: str = "manual"
    eta: float = 0.08
    alpha: float = 4.0
    beta: float = 3.0
    kappa1: float | None = None
    kappa2: float | None = None
    kappa_delta: float = 1.0


@dataclass
class BaselineSection:
    mu: float = 0.01
    eta0: float = 0.08
    decay_exponent: float = 1e-5
    rho0: float = 0.1


@dataclass
class InitConfig:
    mode: str = "zeros"
    scale: float = 1.0


@dataclass
class MetricsConfig:
    f_star: float | None = None
    train_loss: str = "f_of_mean"


@dataclass
class ExperimentConfig:
    algorithm: str = "zodiac_opt1"
    T: int = 50_000
    seed: int = 0
    checkpoint_every: int = 100
    output_dir: str = "runs/default"
    backend: str | None = None
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    hyper: HyperConfig = field(default_factory=HyperConfig)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    init: InitConfig = field(default_factory=InitConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    # -- conversion ------------------------------------------------------------

    @classmethod
    def from_flat(cls, flat: dict) -> ExperimentConfig:
        cfg = cls()
        for key, value in flat.items():
            cfg.set(key, value)
        cfg.validate()
        return cfg

    def set(self, key: str, value) -> None:
        parts = key.split(".")
        obj = self
        for part in parts[:-1]:
            sub = getattr(obj, part, None) if part in _field_names(obj) else None
            if not is_dataclass(sub):
                raise ConfigError(key, "unknown configuration key")
            obj = sub
        leaf = parts[-1]
        if leaf not in _field_names(obj) or is_dataclass(getattr(obj, leaf)):
            raise ConfigError(key, "unknown configuration key")
        setattr(obj, leaf, _coerce(key, _field_type(obj, leaf), value))

    def to_flat(self) -> dict:
        return _flatten(self)

    def copy(self) -> ExperimentConfig:
        return copy.deepcopy(self)

    def with_overrides(self, **flat) -> ExperimentConfig:
        new = self.copy()
        for k, v in flat.items():
            new.set(k.replace("__", "."), v)
        new.validate()
        return new

    # -- checks ----------------------------------------------------------------

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigError("algorithm", f"must be one of {', '.join(ALGORITHMS)}")
        _positive("T", self.T, allow_zero=True)
        _positive("checkpoint_every", self.checkpoint_every)
        if self.seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if self.backend not in (None, "python", "cython"):
            raise ConfigError("backend", "must be 'python' or 'cython'")
        pr = self.problem
        if pr.kind not in ("classification", "quadratic"):
            raise ConfigError("problem.kind", "must be 'classification' or 'quadratic'")
        if pr.kind == "classification":
            for name in ("d", "n_train", "n_test"):
                _positive(f"problem.{name}", getattr(pr, name))
            if pr.noise_var < 0:
                raise ConfigError("problem.noise_var", "must be non-negative")
            if pr.dataset_file is not None and not Path(pr.dataset_file).exists():
                raise ConfigError("problem.dataset_file", f"file not found: {pr.dataset_file}")
        else:
            _positive("problem.p", pr.p)
            if not pr.condition >= 1:
                raise ConfigError("problem.condition", "must be >= 1")
        g = self.graph
        if g.kind not in ("erdos_renyi", "path", "complete", "ring", "file"):
            raise ConfigError("graph.kind", "must be erdos_renyi, path, complete, ring or file")
        _positive("graph.n", g.n)
        if g.kind == "erdos_renyi" and not 0 <= g.prob <= 1:
            raise ConfigError("graph.prob", "must lie in [0, 1]")
        if g.kind == "file":
            if g.file is None:
                raise ConfigError("graph.file", "required when graph.kind = 'file'")
            if not Path(g.file).exists():
                raise ConfigError("graph.file", f"file not found: {g.file}")
        e = self.estimator
        _positive("estimator.n_c", e.n_c)
        implied = {"zodiac_opt1": "forward", "zodiac_opt2": "central", "zo_gda": "central"}.get(self.algorithm)
        if e.kind is not None and e.kind not in ("forward", "central", "gaussian"):
            raise ConfigError("estimator.kind", "must be forward, central or gaussian")
        if e.kind is not None and implied is not None and e.kind != implied:
            raise ConfigError("estimator.kind", f"{self.algorithm} uses the {implied} estimator")
        if e.delta.mode not in ("theorem", "fixed_experiment", "constant"):
            raise ConfigError("estimator.delta.mode", "must be theorem, fixed_experiment or constant")
        if e.delta.mode == "theorem":
            _positive("estimator.delta.kappa_delta", e.delta.kappa_delta)
        if e.delta.mode == "constant":
            _positive("estimator.delta.value", e.delta.value)
        h = self.hyper
        if h.mode not in ("manual", "theorem"):
            raise ConfigError("hyper.mode", "must be 'manual' or 'theorem'")
        if h.mode == "manual":
            for name in ("eta", "alpha", "beta"):
                _positive(f"hyper.{name}", getattr(h, name))
        for name in ("mu", "eta0", "rho0"):
            _positive(f"baseline.{name}", getattr(self.baseline, name))
        if self.init.mode not in ("zeros", "random"):
            raise ConfigError("init.mode", "must be 'zeros' or 'random'")
        if self.metrics.train_loss not in ("f_of_mean", "mean_of_f"):
            raise ConfigError("metrics.train_loss", "must be 'f_of_mean' or 'mean_of_f'")

    @property
    def n_agents(self) -> int:
        return 1 if self.algorithm in ("zo_sgd", "zo_scd") else self.graph.n


def _positive(key, value, allow_zero=False):
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError(key, f"must be {'non-negative' if allow_zero else 'positive'}, got {value}")


def _field_names(obj):
    return {f.name for f in fields(obj)}


def _field_type(obj, name):
    return next(f.type for f in fields(obj) if f.name == name)


def _coerce(key, annotation, value):
    ann = str(annotation)
    if value is None:
        if "None" in ann:
            return None
        raise ConfigError(key, "may not be empty")
    try:
        if "bool" in ann:
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
                raise ValueError(value)
            return bool(value)
        if ann.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if ann.startswith("float"):
            return float(value)
        if ann.startswith("str"):
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"invalid value {value!r}") from None
    return value


def _flatten(obj, prefix=""):
    out = {}
    for f in fields(obj):
        val = getattr(obj, f.name)
        key = prefix + f.name
        if is_dataclass(val):
            out.update(_flatten(val, key + "."))
        else:
            out[key] = val
    return out


def _flatten_mapping(d, prefix=""):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten_mapping(v, prefix + k + "."))
        else:
            out[prefix + k] = v
    return out


def parse_value(text: str):
    """Parse a command-line override value with TOML scalar rules, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    return ExperimentConfig.from_flat(_flatten_mapping(data))


def dump_config(cfg: ExperimentConfig) -> str:
    """Flat dotted-key text; ``None`` values are omitted (they mean 'default')."""
    lines = []
    for key, val in cfg.to_flat().items():
        if val is None:
            continue
        lines.append(f"{key} = {tomli_w.dumps({'v': val}).split('=', 1)[1].strip()}")
    return "\n".join(lines) + "\n"


# -- presets ------------------------------------------------------------------------

# Graph seed 24 yields a connected G(10, 0.4) sample with 18 edges and rho(L) ~ 6.6,
# inside the region where eta=0.08, alpha=4, beta=3 keep the consensus/dual
# recursion stable (spectral radius ~0.915 on the non-consensus modes).
PAPER_GRAPH_SEED = 24
PAPER_N_C = 10


def paper_fig1(seed: int = 0) -> dict[str, ExperimentConfig]:
    """All six algorithms on one dataset/graph with the benchmark hyperparameters."""
    base = ExperimentConfig(seed=seed, T=50_000, checkpoint_every=100)
    base.graph.seed = PAPER_GRAPH_SEED
    base.problem.dataset_seed = seed
    base.estimator.n_c = PAPER_N_C
    out = {}
    for alg in ALGORITHMS:
        cfg = base.copy()
        cfg.algorithm = alg
        cfg.output_dir = alg
        out[alg] = cfg
    return out


def paper_fig2(seed: int = 0) -> dict[str, ExperimentConfig]:
    """Gradient-estimation error of both ZODIAC estimators."""
    runs = paper_fig1(seed)
    return {k: runs[k] for k in ("zodiac_opt1", "zodiac_opt2")}


def quadratic_rates(seed: int = 0, T: int = 8000) -> dict[str, ExperimentConfig]:
    """Noiseless quadratic with the theorem schedule; sweep ``T`` to check rates."""
    cfg = ExperimentConfig(algorithm="zodiac_opt2", T=T, seed=seed, checkpoint_every=1)
    cfg.problem.kind = "quadratic"
    cfg.problem.p = 4
    cfg.problem.condition = 10.0
    cfg.problem.dataset_seed = seed
    # K4 keeps the kappa2 bound large enough that the consensus/dual transient
    # (whose length does not depend on T under this schedule) dies out early.
    cfg.graph.kind = "complete"
    cfg.graph.n = 4
    cfg.estimator.n_c = 4
    cfg.estimator.delta.mode = "theorem"
    cfg.hyper.mode = "theorem"
    cfg.init.mode = "random"
    cfg.output_dir = "zodiac_opt2"
    return {"zodiac_opt2": cfg}


PRESETS = {"paper-fig1": paper_fig1, "paper-fig2": paper_fig2, "quadratic-rates": quadratic_rates}


def preset(name: str, seed: int = 0) -> dict[str, ExperimentConfig]:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[name](seed)
