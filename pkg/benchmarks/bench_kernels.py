"""Time the numeric kernels on the numba path and the pure-Python path.

Each backend runs in its own interpreter because the switch is read at import:

    python3 benchmarks/bench_kernels.py            # both backends, side by side
    python3 benchmarks/bench_kernels.py --worker   # current backend only
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def worker(repeat):
    from swarmgoal import _accel, kernels
    from swarmgoal.assignment import CostMatrix, solve_assignment
    from swarmgoal.energy import minimize_energy
    from swarmgoal.worldmodel import AgentState, GoalTrajectory

    rng = np.random.default_rng(0)
    polys = [np.ascontiguousarray(rng.normal(size=9)) for _ in range(200)]
    costs = [rng.uniform(0, 10, (10, 10)) for _ in range(100)]
    pairs = [(AgentState(1, rng.uniform(-2, 2, 2), (0, 0)),
              GoalTrajectory(1, rng.normal(size=(5, 2)) * [[1], [0.3], [0.1], [0.03], [0.01]]))
             for _ in range(100)]

    def roots():
        for c in polys:
            kernels.real_roots(c, 1e-3, 1e4)

    def hungarian():
        for c in costs:
            kernels.hungarian(np.ascontiguousarray(c))

    def assignment():
        for c in costs:
            solve_assignment(CostMatrix.from_array(c))

    def energy():
        for st, g in pairs:
            minimize_energy(st, g)

    out = {"backend": _accel.backend()}
    for name, fn in [("real_roots x200", roots), ("hungarian 10x10 x100", hungarian),
                     ("solve_assignment 10x10 x100", assignment), ("minimize_energy x100", energy)]:
        out[name] = _best(fn, repeat)
    print(json.dumps(out))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--worker", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if args.worker:
        worker(args.repeat)
        return 0
    results = []
    for pure in ("0", "1"):
        env = dict(os.environ, SWARMGOAL_PURE_PYTHON=pure)
        proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
                              env=env, capture_output=True, text=True, check=True)
        results.append(json.loads(proc.stdout.strip().splitlines()[-1]))
    fast, slow = results
    print(f"{'kernel':32s} {fast['backend']:>12s} {slow['backend']:>12s} {'speedup':>9s}")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:32s} {fast[key] * 1e3:10.2f}ms {slow[key] * 1e3:10.2f}ms {slow[key] / fast[key]:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
