"""Compare the compiled and pure-Python assembly kernels on the same cloud.

    python3 benchmarks/bench_kernels.py --n 2000 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lapshape import kernels
from lapshape.geometry import MIN_AREA_FACTOR, _checked_frames
from lapshape.laplacian import resolve_radius
from lapshape.synthetic import generate_primitive


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--kind", default="sphere")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    cloud, _ = generate_primitive(args.kind, args.n, seed=args.seed)
    r, eps = resolve_radius(cloud)
    indptr, indices, origins, bases, _ = _checked_frames(cloud, r)
    pts = np.ascontiguousarray(cloud.points)
    min_area = MIN_AREA_FACTOR * cloud.spacing_h ** 2
    print(f"{args.kind}, n = {cloud.n}, mean neighborhood = {np.diff(indptr).mean():.1f} points")

    results = {}
    for name in ("compiled", "python"):
        try:
            kern = kernels.get_backend(name)
        except ImportError:
            print(f"{name:>9}: not available")
            continue
        secs, out = _time(lambda: kern.assemble_rows(pts, indptr, indices, origins, bases, eps, min_area),
                          1 if name == "python" else args.repeat)
        results[name] = (secs, out)
        print(f"{name:>9}: {secs:8.3f} s  ({secs / cloud.n * 1e6:7.1f} us/point)")

    if len(results) == 2:
        a = results["compiled"][1]
        b = results["python"][1]
        same = all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b))
        print(f"speedup: {results['python'][0] / results['compiled'][0]:.1f}x, outputs identical: {same}")


if __name__ == "__main__":
    main()
