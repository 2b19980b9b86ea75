"""Compare the compiled and pure-Python kernel backends.

Run with ``python benchmarks/bench_kernels.py``. Both modules are imported
directly, so the comparison does not depend on ``LSRK_BACKEND``.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from lsrk import _kernels_py

try:
    from lsrk import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None


def _cases(rng, sizes):
    for n in sizes:
        pts = rng.uniform(0, 1, n)
        knots = rng.uniform(0, 1, n)
        t = np.linspace(0, 1, 500)
        coefs = np.array([50.0, 12.5])  # product of two Gaussians
        w = rng.standard_normal((n, 4))
        yield n, {
            "gram": lambda m, p=pts, c=coefs: m.gram(p, c),
            "cross_gram": lambda m, p=pts, c=coefs: m.cross_gram(t, p, c),
            "expansion": lambda m, k=knots, c=coefs, w=w: m.expansion(t, k, c, w),
        }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="100,500,2000")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["c"] = _kernels_c
    print(f"{'op':<11} {'n':>5} " + " ".join(f"{b + ' ms':>10}" for b in backends) + f" {'speedup':>8}")
    for n, ops in _cases(rng, sizes):
        for name, op in ops.items():
            ref = op(_kernels_py)
            times = {}
            for b, mod in backends.items():
                if not np.allclose(op(mod), ref, rtol=1e-12, atol=1e-12):
                    raise SystemExit(f"backend {b} disagrees on {name} (n={n})")
                times[b] = min(timeit.repeat(lambda: op(mod), number=1, repeat=args.repeat)) * 1e3
            speed = times["python"] / times["c"] if "c" in times else float("nan")
            print(f"{name:<11} {n:>5} " + " ".join(f"{times[b]:>10.2f}" for b in backends) + f" {speed:>8.2f}")


if __name__ == "__main__":
    main()
