"""Pure Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

from math import factorial

import numpy as np


def canonical_classes(nbits: int, lut: np.ndarray, start: int = 1, stop: int | None = None,
                      chunk: int = 1 << 20):
    G, nbytes, _ = lut.shape
    top = (1 << nbits) - 1 if stop is None else min(stop, (1 << nbits) - 1)
    start = max(start, 1)
    out_m = []
    out_o = []
    for lo in range(start, top, chunk):
        m = np.arange(lo, min(lo + chunk, top), dtype=np.uint32)
        canon = np.ones(m.shape, dtype=bool)
        stab = np.ones(m.shape, dtype=np.int64)
        parts = [(m >> np.uint32(8 * b)) & np.uint32(255) for b in range(nbytes)]
        for g in range(1, G):
            img = lut[g, 0][parts[0]]
            for b in range(1, nbytes):
                img = img | lut[g, b][parts[b]]
            canon &= img >= m
            stab += img == m
        out_m.append(m[canon])
        out_o.append(G // stab[canon])
    if not out_m:
        return np.zeros(0, np.uint32), np.zeros(0, np.int64)
    return np.concatenate(out_m), np.concatenate(out_o)


def closure_masks(sats: np.ndarray, atoms: np.ndarray, full: int) -> np.ndarray:
    acc = np.full(sats.shape, full, dtype=np.uint32)
    for a in atoms:
        a = np.uint32(a)
        hit = (sats & ~a) == 0
        acc = np.where(hit, acc & a, acc)
    return acc


def kpoly_float(sig: int, k: int, kinds, w) -> float:
    B = len(kinds)
    f = [[0.0] * (B + 1) for _ in range(k + 1)]
    f[0][0] = 1.0
    for i in range(k):
        for b in range(B + 1):
            fib = f[i][b]
            if fib == 0.0:
                continue
            for bp in range(b + 1, B + 1):
                kind = kinds[bp - 1]
                wb = float(w[bp - 1])
                if wb == 0.0:
                    continue
                wp = 1.0
                for j in range(i + 1, k + 1):
                    if j - 1 > i:
                        t = j - 2
                        desc = (sig >> t) & 1
                        if (kind == 0 and desc) or (kind == 1 and not desc):
                            break
                    wp *= wb
                    f[j][bp] += fib * wp / (factorial(j - i) if kind == 2 else 1)
    return sum(f[k][1:])


def profile_float(k: int, kinds, w) -> np.ndarray:
    return np.array([kpoly_float(s, k, kinds, w) for s in range(1 << (k - 1))])
