"""Census of non-isomorphic predicates of arity <= 4 and a resumable optimizer sweep."""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from functools import lru_cache
from math import factorial
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ArityUnsupported, OrderCspError
from .optimize import (
    Infeasible,
    SearchConfig,
    certify,
    optimize_p,
    perturbation_mixture,
    sufficient_condition,
)
from .predicate import (
    Predicate,
    group_tables,
    nfirst_atoms,
    nlast_atoms,
    pair_atoms,
    relaxation,
)

COLUMNS = [
    "canon_hex",
    "arity",
    "sat_size",
    "tractable",
    "precedence",
    "nontrivial_L",
    "nontrivial_R",
    "nontrivial_eps",
    "alpha_random",
    "p_L",
    "p_R",
    "p_eps",
]


@dataclass
class CensusRow:
    canon: int
    arity: int
    sat_size: int
    tractable: bool
    precedence: bool
    nontrivial_L: bool
    nontrivial_R: bool
    nontrivial_eps: bool
    alpha_random: Fraction
    orbit_size: int = 0
    p_L: Fraction | None = None
    p_R: Fraction | None = None
    p_eps: Fraction | None = None

    @property
    def predicate(self) -> Predicate:
        return Predicate(self.arity, self.canon)

    @property
    def canon_hex(self) -> str:
        width = (factorial(self.arity) + 3) // 4
        return format(self.canon, f"0{width}x")


@dataclass
class CensusSummary:
    arity: int
    classes: int
    tractable: int
    precedence: int
    nontrivial_LR: int  # among the non-tractable classes
    nontrivial_eps: int
    orbit_total: int

    def as_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=None)
def byte_luts(k: int) -> np.ndarray:
    """lut[g, b, v]: image under group element g of the bits v placed in byte b."""
    N = factorial(k)
    tabs = group_tables(k)
    nb = (N + 7) // 8
    lut = np.zeros((len(tabs), nb, 256), dtype=np.uint32)
    for g, row in enumerate(tabs):
        for b in range(nb):
            bits = [row[8 * b + t] if 8 * b + t < N else None for t in range(8)]
            for v in range(256):
                img = 0
                for t in range(8):
                    if (v >> t) & 1 and bits[t] is not None:
                        img |= 1 << bits[t]
                lut[g, b, v] = img
    return lut


def _scan(args):
    k, lo, hi, backend = args
    return kernels.get(backend).canonical_classes(factorial(k), byte_luts(k), lo, hi)


def canonical_classes(k: int, threads: int = 1, backend: str | None = None):
    """Canonical masks and orbit sizes of all non-constant predicates of arity k."""
    N = factorial(k)
    top = (1 << N) - 1
    if threads <= 1:
        return kernels.get(backend).canonical_classes(N, byte_luts(k), 1, top)
    step = -(-top // threads)
    jobs = [(k, lo, min(lo + step, top), backend) for lo in range(1, top, step)]
    with ProcessPoolExecutor(threads) as ex:
        parts = list(ex.map(_scan, jobs))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _atom_array(atoms) -> np.ndarray:
    return np.array([m for _, m in atoms], dtype=np.uint32)


def census(k: int, budget: SearchConfig | None = None, threads: int = 1, backend: str | None = None,
           with_summary: bool = False):
    """One row per isomorphism class of non-constant arity-k predicates.

    With a budget, every class with a nontrivial relaxation also gets an optimized p.
    """
    if k not in (2, 3, 4):
        raise ArityUnsupported(f"census supports arity 2..4, not {k}")
    impl = kernels.get(backend)
    masks, orbits = canonical_classes(k, threads, backend)
    full = np.uint32((1 << factorial(k)) - 1)
    L = impl.closure_masks(masks, _atom_array(nfirst_atoms(k)), full)
    R = impl.closure_masks(masks, _atom_array(nlast_atoms(k)), full)
    E = impl.closure_masks(masks, _atom_array(pair_atoms(k)), full)
    not_first = L == masks
    not_last = R == masks
    tract = not_first | not_last
    prec = E == masks
    nt_L = (L != masks) & (L != full)
    nt_R = (R != masks) & (R != full)
    nt_E = (E != masks) & (E != full)
    sizes = np.array([bin(int(m)).count("1") for m in masks], dtype=np.int64)
    kf = factorial(k)
    rows = [
        CensusRow(
            canon=int(masks[i]),
            arity=k,
            sat_size=int(sizes[i]),
            tractable=bool(tract[i]),
            precedence=bool(prec[i]),
            nontrivial_L=bool(nt_L[i]),
            nontrivial_R=bool(nt_R[i]),
            nontrivial_eps=bool(nt_E[i]),
            alpha_random=Fraction(int(sizes[i]), kf),
            orbit_size=int(orbits[i]),
        )
        for i in range(len(masks))
    ]
    if budget is not None:
        sweep(rows, budget)
    if with_summary:
        return rows, summarize(rows)
    return rows


def summarize(rows: Sequence[CensusRow]) -> CensusSummary:
    k = rows[0].arity if rows else 0
    return CensusSummary(
        arity=k,
        classes=len(rows),
        tractable=sum(r.tractable for r in rows),
        precedence=sum(r.precedence for r in rows),
        nontrivial_LR=sum((r.nontrivial_L or r.nontrivial_R) and not r.tractable for r in rows),
        nontrivial_eps=sum(r.nontrivial_eps for r in rows),
        orbit_total=sum(r.orbit_size for r in rows),
    )


# ---------------------------------------------------------------- optimizer sweep


def perturbation_starts(phi: Predicate, phi_prime: Predicate, eps_grid=(Fraction(1, 2), Fraction(1, 5), Fraction(1, 10))):
    w = sufficient_condition(phi, phi_prime)
    if w is Infeasible:
        return []
    return [perturbation_mixture(w.y, e) for e in eps_grid]


def best_certified_p(phi: Predicate, phi_prime: Predicate, cfg: SearchConfig) -> Fraction:
    """Certified p from the search (seeded with perturbations of U when the LP allows)."""
    starts = perturbation_starts(phi, phi_prime)
    mix, _ = optimize_p(phi, phi_prime, cfg, extra_starts=starts)
    best = certify(phi, phi_prime, mix).p
    for s in starts:
        best = max(best, certify(phi, phi_prime, s).p)
    return best


def _checkpoint_path(arity: int) -> Path | None:
    d = os.environ.get("ORDERCSP_CHECKPOINT_DIR")
    if not d:
        return None
    Path(d).mkdir(parents=True, exist_ok=True)
    return Path(d) / f"sweep_arity{arity}.json"


def sweep(rows: Sequence[CensusRow], cfg: SearchConfig, kinds: Iterable[str] = ("L", "R", "eps"),
          checkpoint_every: int = 1000) -> Sequence[CensusRow]:
    """Fill p_L/p_R/p_eps for rows with nontrivial relaxations; resumable via checkpoints."""
    rows = sorted(rows, key=lambda r: r.canon)
    ck = _checkpoint_path(rows[0].arity) if rows else None
    done: dict[str, dict] = {}
    last = -1
    if ck is not None and ck.exists():
        state = json.loads(ck.read_text())
        last = int(state["last_canon"], 16)
        done = state["results"]
    for count, row in enumerate(rows, 1):
        key = row.canon_hex
        if row.canon <= last:
            for attr, val in done.get(key, {}).items():
                setattr(row, attr, Fraction(val))
            continue
        phi = row.predicate
        res = {}
        for kind in kinds:
            flag = {"L": row.nontrivial_L, "R": row.nontrivial_R, "eps": row.nontrivial_eps}[kind]
            if not flag:
                continue
            phi_p = relaxation(phi, kind)
            p = best_certified_p(phi, phi_p, cfg)
            setattr(row, f"p_{kind}", p)
            res[f"p_{kind}"] = str(p)
        if res:
            done[key] = res
        if ck is not None and (count % checkpoint_every == 0 or count == len(rows)):
            ck.write_text(json.dumps({"last_canon": key, "results": done}))
    return rows


@dataclass(frozen=True)
class SweepResult:
    row: CensusRow
    kind: str
    p: Fraction

    @property
    def gain(self) -> Fraction:
        return self.p - self.row.alpha_random


def _flags(row: CensusRow) -> dict[str, bool]:
    return {"L": row.nontrivial_L, "R": row.nontrivial_R, "eps": row.nontrivial_eps}


def sampled_sweep(rows: Sequence[CensusRow], count: int, seed: int, cfg: SearchConfig | None = None,
                  time_budget: float | None = None) -> list[SweepResult]:
    """Certify p for `count` randomly drawn (class, relaxation) pairs flagged by sufficient_condition."""
    import random
    import time

    cfg = cfg or SearchConfig(restarts=8, max_iter=800, polish_rounds=1, seed=seed)
    pairs = [(r, kd) for r in sorted(rows, key=lambda r: r.canon) for kd, f in _flags(r).items() if f]
    random.Random(seed).shuffle(pairs)
    t0 = time.monotonic()
    out = []
    for row, kind in pairs:
        if len(out) >= count or (time_budget is not None and time.monotonic() - t0 > time_budget):
            break
        phi = row.predicate
        phi_p = relaxation(phi, kind)
        if sufficient_condition(phi, phi_p) is Infeasible:
            continue
        out.append(SweepResult(row, kind, best_certified_p(phi, phi_p, cfg)))
    return out


# ---------------------------------------------------------------- export


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)


def row_record(r: CensusRow) -> dict:
    rec = {c: _fmt(getattr(r, c)) for c in COLUMNS}
    return rec


def export(rows: Sequence[CensusRow], fmt: str, path) -> None:
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=COLUMNS)
                w.writeheader()
                for r in rows:
                    w.writerow(row_record(r))
        elif fmt == "json":
            path.write_text(json.dumps([row_record(r) for r in rows], indent=1))
        else:
            raise OrderCspError(f"unknown format {fmt!r}")
    except OSError as e:
        raise OrderCspError(f"cannot write {path}: {e}") from None


def _from_record(rec: dict) -> CensusRow:
    opt = lambda s: Fraction(s) if s else None  # noqa: E731
    return CensusRow(
        canon=int(rec["canon_hex"], 16),
        arity=int(rec["arity"]),
        sat_size=int(rec["sat_size"]),
        tractable=rec["tractable"] == "1",
        precedence=rec["precedence"] == "1",
        nontrivial_L=rec["nontrivial_L"] == "1",
        nontrivial_R=rec["nontrivial_R"] == "1",
        nontrivial_eps=rec["nontrivial_eps"] == "1",
        alpha_random=Fraction(rec["alpha_random"]),
        p_L=opt(rec.get("p_L")),
        p_R=opt(rec.get("p_R")),
        p_eps=opt(rec.get("p_eps")),
    )


def load(path, fmt: str | None = None) -> list[CensusRow]:
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".")
    if fmt == "csv":
        with path.open(newline="") as fh:
            return [_from_record(rec) for rec in csv.DictReader(fh)]
    return [_from_record(rec) for rec in json.loads(path.read_text())]


def comparable(r: CensusRow) -> tuple:
    """Fields that survive export (orbit size is not exported)."""
    return tuple(getattr(r, f.name) for f in fields(CensusRow) if f.name != "orbit_size")
