"""Hot loops, compiled with numba when available.

Set ``MTPLAB_NUMBA=0`` to force the plain numpy implementations (useful for
debugging and for the benchmark in ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("MTPLAB_NUMBA", "1") != "0"


# random walk

def _walk_path_numpy(cum, start, u):
    n = cum.shape[0]
    out = np.empty(u.shape[0] + 1, dtype=np.int64)
    out[0] = start
    x = start
    for i in range(u.shape[0]):
        x = min(int(np.searchsorted(cum[x], u[i], side="right")), n - 1)
        out[i + 1] = x
    return out


def _walk_path_loop(cum, start, u):
    n = cum.shape[0]
    out = np.empty(u.shape[0] + 1, dtype=np.int64)
    out[0] = start
    x = start
    for i in range(u.shape[0]):
        row = cum[x]
        lo, hi = 0, n - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if row[mid] > u[i]:
                hi = mid
            else:
                lo = mid + 1
        x = lo
        out[i + 1] = x
    return out


# greedy stable allocation over a global pair order

def _greedy_numpy(xs, ys, supply, demand):
    """Saturate pairs in the given order; returns the allocation matrix."""
    n = supply.shape[0]
    alloc = np.zeros((n, n))
    s = supply.copy()
    d = demand.copy()
    for k in range(xs.shape[0]):
        x, y = xs[k], ys[k]
        m = min(s[x], d[y])
        if m > 0:
            alloc[x, y] += m
            s[x] -= m
            d[y] -= m
    return alloc


def _extra_head_numpy(dist_rank, occupied, marks, roots, u, supply_per_site):
    """Re-rooted index for each trial of the extra-head scheme.

    Every site carries ``supply_per_site`` and every occupied site demands 1.
    Pairs are saturated in order of (distance rank, mark of x, mark of y); the
    new root is drawn from the root's allocation row.
    """
    trials, n = occupied.shape
    out = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        occ = np.flatnonzero(occupied[t])
        rank = np.empty(n, dtype=np.int64)
        rank[np.argsort(marks[t])] = np.arange(n)
        xs = np.repeat(np.arange(n), occ.size)
        ys = np.tile(occ, n)
        key = (dist_rank[xs, ys] * n + rank[xs]) * n + rank[ys]
        order = np.argsort(key)
        alloc = _greedy_numpy(xs[order], ys[order], np.full(n, supply_per_site),
                              occupied[t].astype(np.float64))
        row = np.cumsum(alloc[roots[t]]) / supply_per_site
        last = int(np.flatnonzero(alloc[roots[t]] > 0)[-1])
        out[t] = min(int(np.searchsorted(row, u[t], side="right")), last)
    return out


def _greedy_loop(xs, ys, supply, demand):
    n = supply.shape[0]
    alloc = np.zeros((n, n))
    s = supply.copy()
    d = demand.copy()
    for k in range(xs.shape[0]):
        x = xs[k]
        y = ys[k]
        m = s[x] if s[x] < d[y] else d[y]
        if m > 0:
            alloc[x, y] += m
            s[x] -= m
            d[y] -= m
    return alloc


def _extra_head_loop(dist_rank, occupied, marks, roots, u, supply_per_site):
    trials, n = occupied.shape
    out = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        nocc = 0
        for j in range(n):
            if occupied[t, j]:
                nocc += 1
        occ = np.empty(nocc, dtype=np.int64)
        k = 0
        for j in range(n):
            if occupied[t, j]:
                occ[k] = j
                k += 1
        rank = np.empty(n, dtype=np.int64)
        perm = np.argsort(marks[t])
        for j in range(n):
            rank[perm[j]] = j
        m = n * nocc
        xs = np.empty(m, dtype=np.int64)
        ys = np.empty(m, dtype=np.int64)
        key = np.empty(m, dtype=np.int64)
        k = 0
        for x in range(n):
            for j in range(nocc):
                y = occ[j]
                xs[k] = x
                ys[k] = y
                key[k] = (dist_rank[x, y] * n + rank[x]) * n + rank[y]
                k += 1
        order = np.argsort(key)
        demand = np.zeros(n)
        for j in range(nocc):
            demand[occ[j]] = 1.0
        alloc = _greedy_loop(xs[order], ys[order], np.full(n, supply_per_site), demand)
        r = roots[t]
        acc = 0.0
        pick = n - 1
        for j in range(n):
            if alloc[r, j] > 0:
                pick = j
        for j in range(n):
            acc += alloc[r, j] / supply_per_site
            if acc > u[t]:
                pick = j
                break
        out[t] = pick
    return out


if USE_NUMBA:
    walk_path = numba.njit(cache=True)(_walk_path_loop)
    greedy_allocate = numba.njit(cache=True)(_greedy_loop)
    _greedy_loop = greedy_allocate
    extra_head_batch = numba.njit(cache=True)(_extra_head_loop)
else:
    walk_path = _walk_path_numpy
    greedy_allocate = _greedy_numpy
    extra_head_batch = _extra_head_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

IMPLEMENTATIONS = {
    "walk_path": {"numpy": _walk_path_numpy, "numba": walk_path if USE_NUMBA else None},
    "greedy_allocate": {"numpy": _greedy_numpy, "numba": greedy_allocate if USE_NUMBA else None},
    "extra_head_batch": {"numpy": _extra_head_numpy, "numba": extra_head_batch if USE_NUMBA else None},
}
