"""Command-line entry point: ``zodiac run | spectral | compare | sweep``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import PRESETS, ConfigError, ExperimentConfig, load_config, parse_value, preset
from .graph import (
    GraphError,
    build_laplacian,
    complete_graph,
    gen_erdos_renyi,
    path_graph,
    read_edgelist,
    ring_graph,
)
from .harness import (
    combine_plot_data,
    compare_runs,
    execute_plan,
    format_compare,
    output_root,
    plan_runs,
    spectral_report,
    sweep_configs,
    sweep_summary,
)
from .runner import build_topology

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _overrides(pairs: list[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, text = item.split("=", 1)
        out[key.strip()] = parse_value(text.strip())
    return out


def _apply(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    cfg = cfg.copy()
    for key, value in overrides.items():
        cfg.set(key, value)
    cfg.validate()
    return cfg


def _load_configs(args) -> dict[str, ExperimentConfig]:
    overrides = _overrides(args.set or [])
    if args.preset:
        configs = preset(args.preset, overrides.pop("seed", 0))
    elif args.config:
        cfg = load_config(args.config)
        configs = {cfg.algorithm: cfg}
    else:
        configs = {"run": ExperimentConfig()}
    return {name: _apply(cfg, overrides) for name, cfg in configs.items()}


def _report(outcomes) -> int:
    status = 0
    for o in outcomes:
        if not o.ok:
            print(f"{o.name}: {o.message}; partial trace in {o.out_dir}", file=sys.stderr)
            status = EXIT_DIVERGED
            continue
        acc = "n/a" if o.final_acc is None else f"{o.final_acc:.4f}"
        print(f"{o.name}: final test accuracy {acc}, final ||grad f(x_bar)||^2 {o.final_grad_norm_sq:.6e} -> {o.out_dir}")
    return status


def cmd_run(args) -> int:
    configs = _load_configs(args)
    root = output_root(args.output_dir)
    jobs = plan_runs(configs, root, args.seeds)
    outcomes = execute_plan(jobs, args.jobs, args.backend)
    if len(outcomes) > 1:
        combine_plot_data(outcomes, root / "plot_data.csv")
    return _report(outcomes)


def cmd_spectral(args) -> int:
    if args.config:
        topo = build_topology(load_config(args.config))
    elif args.graph == "erdos_renyi":
        topo = gen_erdos_renyi(args.n, args.prob, args.seed)
    elif args.graph == "path":
        topo = path_graph(args.n)
    elif args.graph == "complete":
        topo = complete_graph(args.n)
    elif args.graph == "ring":
        topo = ring_graph(args.n)
    else:
        if args.file is None:
            raise ConfigError("file", "--file is required with --graph file")
        topo = read_edgelist(args.file)
    print(spectral_report(build_laplacian(topo), topo.num_edges, args.kappa1, args.T, args.p))
    return 0


def cmd_compare(args) -> int:
    print(format_compare(compare_runs(Path(args.directory)), args.csv))
    return 0


def cmd_sweep(args) -> int:
    configs = _load_configs(args)
    if len(configs) != 1:
        raise ConfigError("preset", "sweep needs a single base configuration")
    (base,) = configs.values()
    values = [parse_value(v) for v in args.values]
    sweep = sweep_configs(base, args.vary, values)
    root = output_root(args.output_dir)
    outcomes = execute_plan(plan_runs(sweep, root), args.jobs, args.backend)
    print(sweep_summary(args.vary, values, outcomes))
    return EXIT_DIVERGED if not all(o.ok for o in outcomes) else 0


def _add_source(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="configuration file (dotted key = value)")
    src.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one configuration key")
    p.add_argument("--output-dir", help="output root (default: $ZODIAC_OUTPUT_ROOT or ./runs)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.add_argument("--backend", choices=("cython", "python", "generic"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zodiac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configuration or preset")
    _add_source(p_run)
    p_run.add_argument("--seeds", type=int, default=1, help="repeat over N consecutive seeds")
    p_run.set_defaults(func=cmd_run)

    p_spec = sub.add_parser("spectral", help="Laplacian spectrum and admissible schedule")
    p_spec.add_argument("--config")
    p_spec.add_argument("--graph", choices=("erdos_renyi", "path", "complete", "ring", "file"), default="erdos_renyi")
    p_spec.add_argument("--n", type=int, default=10)
    p_spec.add_argument("--prob", type=float, default=0.4)
    p_spec.add_argument("--seed", type=int, default=0)
    p_spec.add_argument("--file")
    p_spec.add_argument("--kappa1", type=float, default=None)
    p_spec.add_argument("--T", type=int, default=50_000)
    p_spec.add_argument("--p", type=int, default=100)
    p_spec.set_defaults(func=cmd_spectral)

    p_cmp = sub.add_parser("compare", help="final accuracy and loss of completed runs")
    p_cmp.add_argument("directory")
    p_cmp.add_argument("--csv", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_sw = sub.add_parser("sweep", help="grid over T, p, n or seed with slope fits")
    _add_source(p_sw)
    p_sw.add_argument("--vary", required=True, choices=("T", "p", "n", "seed"))
    p_sw.add_argument("--values", nargs="*", default=[])
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
