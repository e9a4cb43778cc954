"""Experiment orchestration: output layout, persistence, comparison and sweeps."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, dump_config
from .core import DivergenceError, kappa1_lower_bound, kappa2_upper_bound, theorem_schedule
from .graph import LaplacianData
from .metrics import TRACE_HEADER, rate_fit, read_trace, running_average, write_trace
from .runner import RunResult, materialize, run

OUTPUT_ROOT_ENV = "ZODIAC_OUTPUT_ROOT"
PLOT_QUANTITIES = ("train_loss", "grad_norm_sq", "consensus_err", "grad_est_err", "test_acc", "lyapunov_w")
SWEEP_KEYS = {"T": "T", "p": None, "n": "graph.n", "seed": "seed"}


def output_root(override: str | os.PathLike | None = None) -> Path:
    if override is not None:
        return Path(override)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def plot_rows(algorithm: str, rows) -> list[tuple]:
    out = []
    for r in rows:
        for q in PLOT_QUANTITIES:
            v = getattr(r, q)
            if v is not None:
                out.append((algorithm, r.k, q, repr(float(v))))
    return out


def write_plot_data(records, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "k", "quantity", "value"])
        w.writerows(records)


def write_run(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trace(result.rows, out_dir / "trace.csv")
    (out_dir / "metadata.json").write_text(json.dumps(result.metadata, indent=2, default=_jsonable) + "\n")
    (out_dir / "config.toml").write_text(dump_config(result.config))
    np.savez(out_dir / "final_state.npz", **result.final)
    write_plot_data(plot_rows(result.config.algorithm, result.rows), out_dir / "plot_data.csv")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


@dataclass
class RunOutcome:
    name: str
    out_dir: Path
    ok: bool
    final_acc: float | None = None
    final_grad_norm_sq: float | None = None
    final_loss: float | None = None
    message: str = ""


def _execute(job) -> RunOutcome:
    name, cfg, out_dir, backend = job
    return execute_one(name, cfg, out_dir, backend=backend)


def execute_one(name: str, cfg: ExperimentConfig, out_dir: Path, mat=None, backend=None) -> RunOutcome:
    """Run ``cfg``, persist artefacts, and summarise; divergence keeps the partial trace."""
    try:
        result = run(cfg, mat, backend)
    except DivergenceError as exc:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_trace(getattr(exc, "rows", []), out_dir / "trace.csv")
        meta = {"config": cfg.to_flat(), "diverged_at": exc.k}
        (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
        return RunOutcome(name, out_dir, False, message=f"diverged at iteration {exc.k}")
    write_run(result, out_dir)
    last = result.rows[-1]
    return RunOutcome(name, out_dir, True, last.test_acc, last.grad_norm_sq, last.train_loss)


def _materialization_key(cfg: ExperimentConfig) -> tuple:
    flat = cfg.to_flat()
    return tuple(sorted((k, v) for k, v in flat.items() if k.startswith(("problem.", "graph."))) + [("seed", cfg.seed)])


def plan_runs(configs: dict[str, ExperimentConfig], root: Path, seeds: int = 1) -> list[tuple]:
    """Expand ``{name: cfg}`` over ``seeds`` consecutive seeds into ``(name, cfg, dir)``."""
    if seeds < 1:
        raise ConfigError("seeds", "must be >= 1")
    jobs = []
    for name, cfg in configs.items():
        cfg.validate()
        for i in range(seeds):
            c = cfg.copy()
            c.seed = cfg.seed + i
            if seeds > 1 and cfg.problem.dataset_seed is not None:
                c.problem.dataset_seed = cfg.problem.dataset_seed + i
            sub = Path(c.output_dir) if seeds == 1 else Path(c.output_dir) / f"seed_{c.seed}"
            jobs.append((name, c, root / sub))
    return jobs


def execute_plan(jobs, jobs_parallel: int = 1, backend: str | None = None) -> list[RunOutcome]:
    if jobs_parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=jobs_parallel) as pool:
            return list(pool.map(_execute, [(n, c, d, backend) for n, c, d in jobs]))
    cache: dict[tuple, object] = {}
    outcomes = []
    for name, cfg, out_dir in jobs:
        key = _materialization_key(cfg)
        if key not in cache:
            cache[key] = materialize(cfg)
        outcomes.append(execute_one(name, cfg, out_dir, cache[key], backend))
    return outcomes


def combine_plot_data(outcomes: list[RunOutcome], path: Path) -> None:
    records = []
    for o in outcomes:
        f = o.out_dir / "plot_data.csv"
        if f.exists():
            with open(f, newline="") as fh:
                rd = csv.reader(fh)
                next(rd)
                records.extend(rd)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_plot_data(records, path)


# -- spectral ------------------------------------------------------------------------


def spectral_report(lap: LaplacianData, edges: int, kappa1: float | None = None, T: int = 50_000, p: int = 100) -> str:
    lines = [f"n = {lap.n}", f"edges = {edges}", f"rho(L) = {lap.rho:.12g}", f"rho2(L) = {lap.rho2:.12g}"]
    if not lap.connected:
        lines.append("graph disconnected: no admissible schedule")
        return "\n".join(lines)
    k1_lb = kappa1_lower_bound(lap)
    hp = theorem_schedule(lap, p, lap.n, T, kappa1=kappa1)
    lines += [
        f"kappa1 > {k1_lb:.12g}",
        f"kappa2 < {kappa2_upper_bound(lap, hp.kappa1):.12g} (at kappa1 = {hp.kappa1:.12g})",
        f"schedule (T = {T}, p = {p}, kappa2 = {hp.kappa2:.6g}): alpha = {hp.alpha:.6g}, beta = {hp.beta:.6g}, eta = {hp.eta:.6g}",
    ]
    return "\n".join(lines)


# -- compare -------------------------------------------------------------------------


@dataclass
class CompareRow:
    algorithm: str
    run_dir: str
    test_acc: str
    train_loss: str


def compare_runs(root: Path) -> list[CompareRow]:
    """Final test accuracy and training loss per run, best accuracy first."""
    root = Path(root)
    traces = sorted(root.rglob("trace.csv"))
    if not traces:
        raise FileNotFoundError(f"no trace.csv found under {root}")
    rows = []
    for t in traces:
        meta_path = t.parent / "metadata.json"
        algorithm = t.parent.name
        if meta_path.exists():
            algorithm = json.loads(meta_path.read_text()).get("config", {}).get("algorithm", algorithm)
        with open(t, newline="") as fh:
            records = list(csv.DictReader(fh))
        if not records:
            continue
        last = records[-1]
        rows.append(CompareRow(algorithm, str(t.parent.relative_to(root)), last["test_acc"], last["train_loss"]))
    if not rows:
        raise FileNotFoundError(f"all traces under {root} are empty")

    def key(r):
        acc = float(r.test_acc) if r.test_acc else -1.0
        return (-acc, float(r.train_loss) if r.train_loss else np.inf, r.algorithm)

    return sorted(rows, key=key)


def format_compare(rows: list[CompareRow], as_csv: bool = False) -> str:
    if as_csv:
        lines = ["algorithm,run_dir,test_acc,train_loss"]
        lines += [f"{r.algorithm},{r.run_dir},{r.test_acc},{r.train_loss}" for r in rows]
        return "\n".join(lines)
    head = f"{'Algorithm':<14}{'Accuracy(%)':>12}{'Train loss':>14}  run"
    out = [head, "-" * len(head)]
    for r in rows:
        acc = f"{100 * float(r.test_acc):.1f}" if r.test_acc else "-"
        loss = f"{float(r.train_loss):.6g}" if r.train_loss else "-"
        out.append(f"{r.algorithm:<14}{acc:>12}{loss:>14}  {r.run_dir}")
    return "\n".join(out)


# -- sweep ---------------------------------------------------------------------------


def sweep_configs(base: ExperimentConfig, key: str, values: list) -> dict[str, ExperimentConfig]:
    if key not in SWEEP_KEYS:
        raise ConfigError("vary", f"must be one of {', '.join(SWEEP_KEYS)}")
    if not values:
        raise ConfigError("values", "empty list of sweep values")
    if key != "seed" and len(values) < 3:
        raise ConfigError("values", "a rate fit needs at least 3 grid points")
    target = SWEEP_KEYS[key] or ("problem.p" if base.problem.kind == "quadratic" else "problem.d")
    out = {}
    for v in values:
        cfg = base.copy()
        cfg.set(target, v)
        cfg.output_dir = str(Path(base.output_dir) / f"{key}_{v}")
        cfg.validate()
        out[f"{key}={v}"] = cfg
    return out


def sweep_summary(key: str, values: list, outcomes: list[RunOutcome]) -> str:
    lines = [f"{'run':<16}{'final loss':>14}{'grad_norm_sq':>14}{'test_acc':>10}  status"]
    for o in outcomes:
        acc = "-" if o.final_acc is None else f"{o.final_acc:.4f}"
        loss = "-" if o.final_loss is None else f"{o.final_loss:.6g}"
        gn = "-" if o.final_grad_norm_sq is None else f"{o.final_grad_norm_sq:.3e}"
        lines.append(f"{o.name:<16}{loss:>14}{gn:>14}{acc:>10}  {'ok' if o.ok else o.message}")
    if key == "seed":
        return "\n".join(lines)
    if not all(o.ok for o in outcomes):
        lines.append("slope fit skipped: not every run finished")
        return "\n".join(lines)
    xs = [float(v) for v in values]
    for q in ("consensus_err", "grad_norm_sq"):
        avgs = [running_average(read_trace(o.out_dir / "trace.csv"), q) for o in outcomes]
        try:
            slope = rate_fit(xs, avgs)
            lines.append(f"slope of running-average {q} vs {key}: {slope:+.3f}")
        except ValueError as exc:
            lines.append(f"slope of running-average {q} vs {key}: not fitted ({exc})")
    return "\n".join(lines)


__all__ = [
    "OUTPUT_ROOT_ENV",
    "TRACE_HEADER",
    "CompareRow",
    "RunOutcome",
    "combine_plot_data",
    "compare_runs",
    "execute_one",
    "execute_plan",
    "format_compare",
    "output_root",
    "plan_runs",
    "spectral_report",
    "sweep_configs",
    "sweep_summary",
    "write_run",
]
