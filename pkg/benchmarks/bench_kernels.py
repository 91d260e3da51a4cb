"""Compare the numba and pure-numpy kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times im2col / col2im at the benchmark network's shape, polygamma on a
vector, and one full training step (forward + backward) under each backend.
The training step is timed in subprocesses because the backend is fixed at
import time by LOGPOISSON_DISABLE_NUMBA.
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from logpoisson import special
from logpoisson.nn import kernels

STEP = """
import json, timeit, numpy as np
from logpoisson import _accel
from logpoisson.nn.model import ArchSpec, build_model, loss_and_grad
m = build_model(ArchSpec.conv1d({ch}), 0)
x = np.random.default_rng(0).random((32, 256))
loss_and_grad(m, x, x)
t = min(timeit.repeat(lambda: loss_and_grad(m, x, x), number=1, repeat={rep}))
print(json.dumps({{"backend": _accel.BACKEND, "seconds": t}}))
"""


def best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def step_time(channels, repeat, disable):
    env = dict(os.environ, LOGPOISSON_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", STEP.format(ch=channels, rep=repeat)], env=env,
                         capture_output=True, text=True, check=True).stdout
    return json.loads(out)["seconds"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--channels", type=int, default=32)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    b, n, c, k = 32, 256, args.channels, 7
    x = rng.standard_normal((b, n, c))
    cols = kernels.im2col_numpy(x, k)
    xs = rng.uniform(0.1, 1e3, 100_000)
    rows = [
        ("im2col", best(lambda: kernels.im2col_numba(x, k), args.repeat),
         best(lambda: kernels.im2col_numpy(x, k), args.repeat)),
        ("col2im", best(lambda: kernels.col2im_numba(cols, b, n, c, k), args.repeat),
         best(lambda: kernels.col2im_numpy(cols, b, n, c, k), args.repeat)),
        ("polygamma(3, 1e5 points)", best(lambda: special._polygamma_numba(3, xs), args.repeat),
         best(lambda: special._polygamma_numpy(3, xs), args.repeat)),
        (f"train step (B={b}, L={n}, C={c})", step_time(c, args.repeat, False),
         step_time(c, args.repeat, True)),
    ]
    print(f"{'kernel':32s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fast, slow in rows:
        print(f"{name:32s} {1e3 * fast:10.2f} {1e3 * slow:10.2f} {slow / fast:8.2f}")


if __name__ == "__main__":
    main()
