"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel and backend with the best wall time and the
speedup of the compiled module.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from curvlab import kernels
from curvlab.curvature_algebra import random_curvature_operator, random_frames


def cases(rng):
    f = np.sin(np.linspace(0.0, 10.0, 200_001))
    yield "cumquad4 (2e5 samples)", "cumquad4", (f, 5e-5)
    for n, k in ((5, 2), (7, 3)):
        t4 = random_curvature_operator(n, rng).tensor()
        q = random_frames(n, k, 20_000, rng)
        yield f"frame_values n={n} k={k} (2e4 frames)", "frame_values", (t4, q)
        yield f"frame_values_grad n={n} k={k} (2e4 frames)", "frame_values_grad", (t4, q)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; timing the numpy fallback only")
    rng = np.random.default_rng(0)
    for label, name, call_args in cases(rng):
        best = {}
        for bname, mod in backends.items():
            fn = getattr(mod, name)
            best[bname] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
        line = "  ".join(f"{b} {t * 1e3:9.2f} ms" for b, t in best.items())
        if "compiled" in best:
            line += f"  speedup {best['python'] / best['compiled']:5.1f}x"
        print(f"{label:<40} {line}")


if __name__ == "__main__":
    main()
