"""Per-round wall-clock of the compiled and pure-Python ZODIAC kernels.

Runs the same configuration through each available backend (plus the
generic estimator loop) and reports microseconds per synchronous round and
the speed-up relative to the pure-Python kernel.  The final iterates are
compared so a timing is never reported for a backend that disagrees.

    python benchmarks/bench_kernels.py --T 2000 --repeat 3
"""

from __future__ import annotations

import argparse
import copy
import time

import numpy as np

from zodiac._kernels import available_backends
from zodiac.config import preset
from zodiac.runner import materialize, run


def time_backend(cfg, mat, backend, repeat):
    best, final = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = run(cfg, mat, backend=backend)
        best = min(best, time.perf_counter() - t0)
        final = res.final
    return best, final


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=2000, help="rounds per run")
    ap.add_argument("--repeat", type=int, default=3, help="best-of repetitions")
    ap.add_argument("--algorithm", default="zodiac_opt1", choices=["zodiac_opt1", "zodiac_opt2"])
    ap.add_argument("--skip-generic", action="store_true", help="omit the slow generic estimator loop")
    args = ap.parse_args(argv)

    cfg = copy.deepcopy(preset("paper-fig1")[args.algorithm])
    cfg.T = args.T
    cfg.checkpoint_every = args.T
    mat = materialize(cfg)

    backends = available_backends() + ([] if args.skip_generic else ["generic"])
    results = {b: time_backend(cfg, mat, b, args.repeat) for b in backends}
    ref = results["python"][1]
    base = results["python"][0] / args.T

    print(f"{args.algorithm}: n={mat.problem.n_agents} p={mat.problem.dim} T={args.T} best of {args.repeat}")
    print(f"{'backend':<8} {'us/round':>12} {'vs python':>10}  max |x - x_python|")
    for b, (secs, final) in results.items():
        per = secs / args.T
        diff = float(np.max(np.abs(final["x"] - ref["x"])))
        print(f"{b:<8} {per * 1e6:12.2f} {base / per:9.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
