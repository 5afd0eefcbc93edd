"""Compare the compiled circuit evaluator against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats 5] [--rows 4096]

Each case evaluates a generated SPN on a batch of random complete
assignments with both backends, checks that they agree, and prints the
best-of-N wall time per backend.
"""
import argparse
import time

import numpy as np

from spnbn import kernels
from spnbn.harness import DECOMPOSABLE, GenConfig, generate
from spnbn.normal_form import to_normal
from spnbn.spn_core import spn_size

CASES = [(6, 100), (10, 400), (12, 1600), (14, 6400)]


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--rows", type=int, default=4096)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'vars':>4} {'|S|':>6} {'rows':>6} " + " ".join(f"{b + ' ms':>12}" for b in backends) + "  speedup")
    for num_vars, target in CASES:
        spn = to_normal(generate(GenConfig(num_vars, target, 3, args.seed, DECOMPOSABLE)))[0]
        program = spn.program
        rows = np.stack([rng.integers(0, v.domain_size, args.rows) for v in spn.variables], axis=1)
        lam = kernels.one_hot(program, rows)
        results, times = {}, {}
        for b in backends:
            results[b] = kernels.eval_indicators(program, lam, b)
            times[b] = best_time(lambda: kernels.eval_indicators(program, lam, b), args.repeats)
        ref = results["python"]
        for b, out in results.items():
            if not np.allclose(out, ref, rtol=1e-12, atol=0):
                raise SystemExit(f"backend {b} disagrees with python on case {num_vars}/{target}")
        speed = f"{times['python'] / times['compiled']:7.1f}x" if "compiled" in times else "      -"
        cols = " ".join(f"{times[b] * 1e3:12.3f}" for b in backends)
        print(f"{num_vars:>4} {spn_size(spn):>6} {args.rows:>6} {cols}  {speed}")


if __name__ == "__main__":
    main()
