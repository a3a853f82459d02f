"""Time the numba and pure-numpy kernels on the same workloads.

The backend is fixed at import, so each one runs in its own interpreter:

    python3 benchmarks/bench_backends.py [--repeat 3] [--scenario NAME ...]

The first call in each child includes JIT compilation and is reported apart.
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import tvfluid._backend as backend
from tvfluid import SimScenario, simulate, solve
from tvfluid.scenario import load_bundled

names, repeat = json.loads(sys.argv[1]), int(sys.argv[2])

def run(name):
    sc = load_bundled(name)
    solve(sc.initial, sc.rate, sc.F, sc.G, sc.solver_config())

def sim():
    sc = load_bundled("sim_sinusoid")
    simulate(SimScenario(400, sc.rate, sc.F, sc.G, sc.initial, sc.grid, 1, 10), threads=1)

jobs = {f"solve {n}": (lambda n=n: run(n)) for n in names}
jobs["simulate n=400 x10"] = sim
out = {"backend": backend.BACKEND, "first": {}, "best": {}}
for label, fn in jobs.items():
    t0 = time.perf_counter(); fn(); out["first"][label] = time.perf_counter() - t0
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter(); fn(); times.append(time.perf_counter() - t0)
    out["best"][label] = min(times)
print(json.dumps(out))
"""

DEFAULT = ["exp_exp_overloaded", "switching_sinusoid_erlang", "uniform_patience_overloaded"]


def measure(backend, names, repeat):
    env = dict(os.environ, TVFLUID_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", CHILD, json.dumps(names), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--scenario", nargs="*", default=DEFAULT)
    args = p.parse_args(argv)
    nb = measure("numba", args.scenario, args.repeat)
    np_ = measure("numpy", args.scenario, args.repeat)
    width = max(len(k) for k in nb["best"])
    print(f"{'workload':<{width}}  {'numba s':>9}  {'numpy s':>9}  {'speedup':>8}  {'numba 1st':>9}")
    for k in nb["best"]:
        a, b = nb["best"][k], np_["best"][k]
        print(f"{k:<{width}}  {a:9.4f}  {b:9.4f}  {b / a:7.1f}x  {nb['first'][k]:9.3f}")


if __name__ == "__main__":
    main()
