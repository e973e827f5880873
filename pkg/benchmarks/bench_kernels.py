"""Compare the numba kernels against the pure-Python fallback.

Each backend runs in its own interpreter because ``MCAPRICE_DISABLE_NUMBA``
is read at import time. Usage: ``python benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from mcaprice import _accel, compare_schemes, find_qce, sample_scenario, solve_upm, ScenarioConfig

repeat = int(sys.argv[1])
s = sample_scenario(ScenarioConfig(), 0)
h = np.full((s.n_users, s.n_users), float(np.mean(s.delivered_cost)))
cases = {
    "solve_upm (10 users)": lambda: solve_upm(s, h),
    "find_qce (10 users)": lambda: find_qce(s),
    "compare_schemes (10 users)": lambda: compare_schemes(s),
}
out = {"backend": _accel.backend()}
for name, fn in cases.items():
    fn()  # warm-up, includes compilation or cache load
    t = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        t.append(time.perf_counter() - t0)
    out[name] = min(t)
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ, MCAPRICE_DISABLE_NUMBA="1" if disable else "0")
    r = subprocess.run([sys.executable, "-c", WORKLOAD, str(repeat)], env=env, capture_output=True,
                       text=True, check=True)
    return json.loads(r.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run(False, args.repeat)
    slow = run(True, args.repeat)
    print(f"{'workload':<30}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for name in fast:
        if name == "backend":
            continue
        print(f"{name:<30}{fast[name]:>11.4f}s{slow[name]:>11.4f}s{slow[name] / fast[name]:>9.1f}x")


if __name__ == "__main__":
    main()
