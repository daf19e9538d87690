"""Time the compiled scan kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are checked for identical results before timing.
"""
import argparse
import timeit

import numpy as np

from duetreact import _kernels
from duetreact._kernels import _fallback

try:
    from duetreact._kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    # sizes match one desk-scale training batch / evaluation call
    z = rng.normal(size=(16 * 16 * 4, 32))
    book = rng.normal(size=(64, 32))
    foll, lead = rng.normal(size=(128, 23, 3)), rng.normal(size=(128, 23, 3))
    feats = rng.normal(size=(200, 100))
    return {
        "nearest_codes 1024x64x32": ("nearest_codes", (z, book)),
        "contact_mask 128x23x23": ("contact_mask", (foll, lead, 0.5)),
        "mean_pairwise_distance 200x100": ("mean_pairwise_distance", (feats,)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    print(f"active backend: {_kernels.BACKEND}")
    if _ckernels is None:
        print("compiled extension not built; only the fallback can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<34}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for label, (fn, inputs) in cases(rng).items():
        slow = getattr(_fallback, fn)
        t_np = min(timeit.repeat(lambda: slow(*inputs), repeat=args.repeat, number=args.number)) / args.number
        if _ckernels is None:
            print(f"{label:<34}{t_np * 1e3:>10.3f}{'-':>11}{'-':>9}")
            continue
        fast = getattr(_ckernels, fn)
        a, b = np.asarray(slow(*inputs)), np.asarray(fast(*inputs))
        if not np.allclose(a, b, rtol=1e-12, atol=0):
            raise SystemExit(f"{fn}: backends disagree")
        t_c = min(timeit.repeat(lambda: fast(*inputs), repeat=args.repeat, number=args.number)) / args.number
        print(f"{label:<34}{t_np * 1e3:>10.3f}{t_c * 1e3:>11.3f}{t_np / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
