"""Benchmark the numba and numpy convolution backends on the shapes that matter.

Run:  python benchmarks/bench_kernels.py [--reps 20]

Training batches are small maps with many samples; inference is a few
large maps. Which backend wins depends on core count and BLAS quality;
pick the faster one on your machine via MEDSR_BACKEND=numba|numpy.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from medsr.nn import kernels_numpy

try:
    from medsr.nn import kernels_numba
except ImportError:
    kernels_numba = None

SHAPES = [
    ("train fwd 128x32@7x7", (128, 32, 7, 7), 32),
    ("train fwd 128x32@14x14", (128, 32, 14, 14), 32),
    ("infer fwd 1x32@128x128", (1, 32, 128, 128), 32),
    ("infer fwd 1x32@256x256", (1, 32, 256, 256), 32),
]


def _time(fn, *args, reps: int) -> float:
    fn(*args)  # warm-up / jit compile
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps * 1e3


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'case':<28} {'numpy ms':>10} {'numba ms':>10} {'numba speedup':>14}")
    for name, xshape, out_ch in SHAPES:
        x = rng.normal(size=xshape).astype(np.float32)
        w = rng.normal(size=(out_ch, xshape[1], 3, 3)).astype(np.float32)
        b = rng.normal(size=out_ch).astype(np.float32)
        g = rng.normal(size=(xshape[0], out_ch, xshape[2], xshape[3])).astype(np.float32)

        for label, fn_np, fn_nb, fargs in (
            (name, kernels_numpy.conv3x3_forward, None, (x, w, b)),
            (name.replace("fwd", "bwd"), kernels_numpy.conv3x3_backward, None, (x, w, g)),
        ):
            t_np = _time(fn_np, *fargs, reps=args.reps)
            if kernels_numba is None:
                print(f"{label:<28} {t_np:>10.2f} {'n/a':>10} {'n/a':>14}")
                continue
            nb_fn = getattr(kernels_numba, fn_np.__name__)
            t_nb = _time(nb_fn, *fargs, reps=args.reps)
            print(f"{label:<28} {t_np:>10.2f} {t_nb:>10.2f} {t_np / t_nb:>13.2f}x")


if __name__ == "__main__":
    main()
