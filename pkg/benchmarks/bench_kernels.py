"""Time the simulation kernels with numba and with the pure-Python fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time by STEMPROLIF_DISABLE_NUMBA. Usage:

    python benchmarks/bench_kernels.py [--repeat 5] [--events-S0 1000]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from stemprolif import _kernels, backend
from stemprolif.simulator import SimConfig, gillespie_run, subject_rng

repeat, S0 = int(sys.argv[1]), int(sys.argv[2])
cfg = SimConfig(S0=S0, r=0.15, coeffs=(1.25, -0.055, 0.004), horizon=60.0)
grid = np.linspace(0.0, 60.0, 101)

def best(fn):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out

t_sim, log = best(lambda: gillespie_run(cfg, subject_rng(1)))
t_rk4, _ = best(lambda: _kernels.rk4_path(1.25, -0.055, 0.004, 0.15, False, float(S0), grid, 0.01))
print(json.dumps({"backend": backend(), "gillespie_s": t_sim, "events": len(log),
                  "final_F": int(log.final.F), "rk4_s": t_rk4}))
"""


def run(disable, repeat, S0):
    env = dict(os.environ, STEMPROLIF_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", WORKER, str(repeat), str(S0)], env=env,
                         check=True, capture_output=True, text=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--S0", type=int, default=1000)
    args = ap.parse_args()
    fast = run(False, args.repeat, args.S0)
    slow = run(True, args.repeat, args.S0)
    if fast["final_F"] != slow["final_F"] or fast["events"] != slow["events"]:
        sys.exit("backends disagree on the simulated path")
    print(f"{'kernel':<12}{'numba':>12}{'python':>12}{'speedup':>10}")
    for key, name in (("gillespie_s", "gillespie"), ("rk4_s", "rk4")):
        print(f"{name:<12}{fast[key]:>11.4f}s{slow[key]:>11.4f}s{slow[key] / fast[key]:>9.1f}x")
    print(f"({fast['events']} events per Gillespie run, identical on both backends)")


if __name__ == "__main__":
    main()
