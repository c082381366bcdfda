#!/usr/bin/env python3
"""Benchmark the numba and pure-numpy convolution kernels.

Runs each kernel (forward + backward) on a few realistic shapes under both
backends and prints a timing table. Backends are isolated in subprocesses
because the backend is chosen at import time via SEGT_BACKEND.

Usage: python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from segtherm import backend

repeat = int(sys.argv[1])
rng = np.random.default_rng(0)
cases = {
    "conv1d B=8 D=128 L=512": (
        rng.standard_normal((8, 128, 512), dtype=np.float32),
        rng.standard_normal((128, 128, 2), dtype=np.float32),
        rng.standard_normal(128, dtype=np.float32),
    ),
    "segconv B=8 N=32 l=16 D=128 k=3": (
        rng.standard_normal((8, 32, 16, 128), dtype=np.float32),
        rng.standard_normal((128, 3, 16, 128), dtype=np.float32),
        rng.standard_normal(128, dtype=np.float32),
    ),
}

def bench(fwd, bwd, x, w, b):
    y = fwd(x, w, b)         # warm-up (triggers JIT compile on the numba path)
    bwd(y, x, w)
    t0 = time.perf_counter()
    for _ in range(repeat):
        y = fwd(x, w, b)
    t_fwd = (time.perf_counter() - t0) / repeat
    g = np.ones_like(y)
    t0 = time.perf_counter()
    for _ in range(repeat):
        bwd(g, x, w)
    t_bwd = (time.perf_counter() - t0) / repeat
    return t_fwd, t_bwd

out = {"backend": backend.backend_name(), "results": {}}
for name, (x, w, b) in cases.items():
    if name.startswith("conv1d"):
        f, bk = backend.conv1d_forward, backend.conv1d_backward
    else:
        f, bk = backend.segconv_forward, backend.segconv_backward
    out["results"][name] = bench(f, bk, x, w, b)
print(json.dumps(out))
"""


def run_backend(name, repeat):
    env = dict(os.environ, SEGT_BACKEND=name)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(repeat)],
        env=env, capture_output=True, text=True,
    )
    if proc.returncode != 0:
        print(f"backend {name} failed:\n{proc.stderr}", file=sys.stderr)
        return None
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    reports = {}
    for name in ("numpy", "numba"):
        rep = run_backend(name, args.repeat)
        if rep is not None:
            reports[name] = rep["results"]

    if not reports:
        sys.exit(1)
    cases = next(iter(reports.values())).keys()
    print(f"{'case':<36} {'pass':<8} " + " ".join(f"{b:>12}" for b in reports))
    for case in cases:
        for pi, which in enumerate(("forward", "backward")):
            cells = []
            for b in reports:
                ms = reports[b][case][pi] * 1e3
                cells.append(f"{ms:10.3f}ms")
            print(f"{case:<36} {which:<8} " + " ".join(f"{c:>12}" for c in cells))


if __name__ == "__main__":
    main()
