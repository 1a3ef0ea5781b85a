"""Time the compiled stepping loop against the numpy fallback.

    python benchmarks/bench_kernels.py [--paths 100] [--steps 20000] [--repeat 3]

Both backends run the same increments; the script also checks that their
final states agree bit-for-bit.
"""

import argparse
import time

import numpy as np

from truncem import kernels
from truncem.model import builtin_problem
from truncem.noise import brownian_block
from truncem.scheme import default_policy, truncation_radius


def time_backend(problem, backend, dW, dt, radius, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        x = np.tile(problem.x0_array, (dW.shape[0], 1))
        start = time.perf_counter()
        kernels.advance(problem, x, dW, problem.t0, dt, 0, np.full(dW.shape[1], dt), radius,
                        backend=backend)
        best = min(best, time.perf_counter() - start)
        out = x
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100)
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not kernels.compiled_available():
        raise SystemExit("compiled kernels are not built; reinstall with Cython available")
    print(f"{'problem':<14}{'numpy [s]':>11}{'cython [s]':>12}{'speedup':>9}  identical")
    for name in ("example1", "example2", "timechanged2d", "gbm"):
        prob = builtin_problem(name)
        dt = (prob.T - prob.t0) / args.steps
        dW = brownian_block(0, np.arange(args.paths), prob.m, dt, 0, args.steps)
        radius = truncation_radius(default_policy(prob), dt)
        t_py, x_py = time_backend(prob, "python", dW, dt, radius, args.repeat)
        t_c, x_c = time_backend(prob, "cython", dW, dt, radius, args.repeat)
        print(f"{name:<14}{t_py:>11.3f}{t_c:>12.4f}{t_py / t_c:>9.1f}  {np.array_equal(x_py, x_c)}")


if __name__ == "__main__":
    main()
