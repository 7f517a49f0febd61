"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--span 200000]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ordercsp import kernels
from ordercsp.classify import byte_luts
from ordercsp.predicate import nfirst_atoms, pair_atoms


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(span: int):
    lut = byte_luts(4)
    rng = np.random.default_rng(0)
    sats = rng.integers(1, (1 << 24) - 1, size=200_000, dtype=np.uint32)
    full = np.uint32((1 << 24) - 1)
    atoms = np.array([m for _, m in nfirst_atoms(4) + pair_atoms(4)], dtype=np.uint32)
    kinds = np.array([0, 1, 2, 0, 1, 2], dtype=np.int32)
    w = np.full(6, 1 / 6)
    return {
        f"canonical_classes k=4, {span} masks": lambda m: m.canonical_classes(24, lut, 1, span),
        "closure_masks 200k masks": lambda m: m.closure_masks(sats, atoms, full),
        "profile_float k=6, 6 blocks x200": lambda m: [m.profile_float(6, kinds, w) for _ in range(200)],
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--span", type=int, default=200_000)
    args = ap.parse_args()
    py = kernels.get("python")
    try:
        cy = kernels.get("cython")
    except ImportError:
        cy = None
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':<42}{'python s':>11}{'cython s':>11}{'speedup':>9}")
    for name, fn in cases(args.span).items():
        tp = best_of(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<42}{tp:>11.4f}{'n/a':>11}{'':>9}")
            continue
        tc = best_of(lambda: fn(cy), args.repeat)
        print(f"{name:<42}{tp:>11.4f}{tc:>11.4f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
