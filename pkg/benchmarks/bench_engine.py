"""Time the compiled RK4 kernel against the pure-Python fallback.

    python benchmarks/bench_engine.py [--horizon 60] [--repeat 3]
"""
import argparse
import time

import numpy as np

from dderace.core import ArmamentMatrix, CubicHostility, HistoryFunction
from dderace.engine import BACKEND, integrate, linear_problem


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizon", type=float, default=60.0)
    ap.add_argument("--steps-per-delay", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    A = ArmamentMatrix(2.0, 1.0, 3.0, 0.25)
    tau = 0.6
    prob = linear_problem(A, tau, HistoryFunction.constant(tau, [0.1, -0.1]), args.horizon,
                          args.steps_per_delay, cubic=CubicHostility(g30=1.0))
    print(f"default backend: {BACKEND}; {prob.n_steps} steps")
    py_t, py_traj = best_of(lambda: integrate(prob, backend="python"), args.repeat)
    print(f"python    {py_t:9.4f} s")
    if BACKEND != "compiled":
        print("compiled kernel not built; skipping comparison")
        return
    c_t, c_traj = best_of(lambda: integrate(prob, backend="compiled"), args.repeat)
    diff = float(np.max(np.abs(c_traj.states - py_traj.states)))
    print(f"compiled  {c_t:9.4f} s  speedup x{py_t / c_t:.1f}  max |diff| {diff:.3g}")


if __name__ == "__main__":
    main()
