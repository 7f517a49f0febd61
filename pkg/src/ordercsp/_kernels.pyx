# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: orbit canonicalization, relaxation masks, float profiles."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint32_t, int32_t, int64_t

cnp.import_array()


def canonical_classes(int nbits, cnp.ndarray[uint32_t, ndim=3] lut, start=1, stop=None):
    """Scan non-constant bitsets in [start, stop); keep those minimal in their orbit.

    lut[g, b, v] is the image under group element g of byte b holding value v.
    Returns (canonical masks, orbit sizes), both sorted by mask.
    """
    cdef int G = lut.shape[0]
    cdef int nbytes = lut.shape[1]
    cdef uint32_t top = (<uint32_t>1 << nbits) - 1
    cdef uint32_t lo = max(<uint32_t>start, 1)
    cdef uint32_t hi = top if stop is None else min(<uint32_t>stop, top)
    cdef uint32_t m, img
    cdef int g, b, stab
    cdef bint canon
    cdef uint32_t[:, :, :] L = lut
    out_m = []
    out_o = []
    for m in range(lo, hi):
        canon = True
        stab = 1
        for g in range(1, G):
            img = 0
            for b in range(nbytes):
                img |= L[g, b, (m >> (8 * b)) & 255]
            if img < m:
                canon = False
                break
            if img == m:
                stab += 1
        if canon:
            out_m.append(m)
            out_o.append(G // stab)
    return np.asarray(out_m, dtype=np.uint32), np.asarray(out_o, dtype=np.int64)


def closure_masks(cnp.ndarray[uint32_t, ndim=1] sats,
                  cnp.ndarray[uint32_t, ndim=1] atoms, uint32_t full):
    """For each sat, AND of the atom masks that contain it (the implied atoms)."""
    cdef Py_ssize_t n = sats.shape[0], na = atoms.shape[0], i, j
    cdef uint32_t s, acc, a
    cdef cnp.ndarray[uint32_t, ndim=1] out = np.empty(n, dtype=np.uint32)
    for i in range(n):
        s = sats[i]
        acc = full
        for j in range(na):
            a = atoms[j]
            if s & ~a == 0:
                acc &= a
        out[i] = acc
    return out


def kpoly_float(int sig, int k, cnp.ndarray[int32_t, ndim=1] kinds,
                cnp.ndarray[double, ndim=1] w):
    """Partition-function sum for the signature index ``sig`` (bit i = descent at step i+1).

    kinds: 0 = I, 1 = D, 2 = U.
    """
    cdef int B = kinds.shape[0]
    cdef double f[9][17]
    cdef double tot, wp, wb
    cdef int i, j, b, bp, t, kind
    cdef bint ok
    cdef double fact[10]
    fact[0] = 1.0
    for i in range(1, 10):
        fact[i] = fact[i - 1] * i
    for i in range(k + 1):
        for b in range(B + 1):
            f[i][b] = 0.0
    # f[i][b]: weight of labelings of the first i positions whose last run lies in block b-1
    f[0][0] = 1.0
    for i in range(k):
        for b in range(B + 1):
            if f[i][b] == 0.0:
                continue
            for bp in range(b + 1, B + 1):
                kind = kinds[bp - 1]
                wb = w[bp - 1]
                if wb == 0.0:
                    continue
                wp = 1.0
                for j in range(i + 1, k + 1):
                    # run covers positions i..j-1; check the step j-2 -> j-1
                    if j - 1 > i:
                        t = j - 2
                        if kind == 0 and (sig >> t) & 1:
                            break
                        if kind == 1 and not (sig >> t) & 1:
                            break
                    wp *= wb
                    if kind == 2:
                        f[j][bp] += f[i][b] * wp / fact[j - i]
                    else:
                        f[j][bp] += f[i][b] * wp
    tot = 0.0
    for b in range(1, B + 1):
        tot += f[k][b]
    return tot


def profile_float(int k, cnp.ndarray[int32_t, ndim=1] kinds, cnp.ndarray[double, ndim=1] w):
    cdef int ns = 1 << (k - 1)
    cdef int s
    cdef cnp.ndarray[double, ndim=1] out = np.empty(ns, dtype=np.float64)
    for s in range(ns):
        out[s] = kpoly_float(s, k, kinds, w)
    return out
