"""Compare the compiled kernel-sum core with the NumPy fallback.

    python benchmarks/bench_kernels.py [--sizes 50,200,800] [--repeat 5]

Times the two hot paths (pairwise kernel sums at the data points and the
leave-one-out criterion terms) on both backends and checks they agree.
"""

import argparse
import timeit

import numpy as np

from l1indep import _backend
from l1indep.bandwidth import criterion_terms
from l1indep.data import BlockSpec, Sample
from l1indep.estimators import Bandwidths, kernel_sums


def _case(n, spec, seed=0):
    rng = np.random.default_rng(seed)
    s = Sample(rng.standard_normal((n, spec.d)), spec)
    return s, Bandwidths.uniform(0.6, spec)


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="50,200,800")
    ap.add_argument("--dims", default="1,1")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        _backend.get("cython")
    except ImportError:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    spec = BlockSpec.parse(args.dims)
    print(f"dims={args.dims}  best of {args.repeat}")
    print(f"{'op':<16}{'n':>6}{'cython ms':>12}{'python ms':>12}{'speedup':>9}  max|diff|")
    for n in (int(v) for v in args.sizes.split(",")):
        s, b = _case(n, spec)
        ops = {
            "kernel_sums": lambda be: kernel_sums(s, b, s.values, exclude_self=True, backend=be),
            "criterion": lambda be: criterion_terms(s, b, backend=be),
        }
        for name, op in ops.items():
            tc = _best(lambda: op("cython"), args.repeat)
            tp = _best(lambda: op("python"), args.repeat)
            a, c = op("cython"), op("python")
            parts = zip(a, c) if isinstance(a, tuple) else [(a, c)]
            diff = max(float(np.nanmax(np.abs(np.asarray(u) - np.asarray(v)))) for u, v in parts)
            print(f"{name:<16}{n:>6}{tc * 1e3:>12.2f}{tp * 1e3:>12.2f}{tp / tc:>8.1f}x  {diff:.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
