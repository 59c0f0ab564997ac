"""Isomorphism classes of finite decorated rmm spaces.

The canonical form of an unrooted space is the lexicographically smallest
serialization over all relabelings.  It is found by a breadth-first search
over orderings of the points in which each position contributes a block
``(refined color, point signature, distances to earlier points)``; only
partial orderings whose prefix is minimal survive each level.  Points that
are interchangeable by a transposition ("twins") are visited in index order
only, which keeps stars and uniform spaces cheap.

All optimal orderings differ by automorphisms, so the same search yields the
automorphism orbits, the group order, and with those the canonical label of
any root.  Rooted digests are therefore cheap once the unrooted structure is
cached.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .space import (DEFAULT_CAP, DEFAULT_GRID, MATRIX_TOL, FiniteRmmSpace,
                    SizeLimitError)


@dataclass(frozen=True)
class CanonicalData:
    base: bytes                 # digest of the unrooted canonical serialization
    order: tuple[int, ...]      # one optimal ordering (position -> point)
    orbit_label: tuple[int, ...]  # point -> smallest canonical position in its orbit
    orbits: tuple[tuple[int, ...], ...]
    group_order: int


def _quantize(x: np.ndarray, grid: float) -> np.ndarray:
    return np.rint(np.asarray(x, dtype=np.float64) / grid).astype(np.int64)


def _point_signatures(space: FiniteRmmSpace, grid: float) -> list[tuple]:
    """Relabeling-invariant data attached to each point."""
    n = space.n
    mu_q = _quantize(space.mu, grid)
    per_point: list[list] = [[int(mu_q[i])] for i in range(n)]
    for name, dec in space.decorations.items():
        if dec.kind == "trajectory":
            hits = [[] for _ in range(n)]
            for pos, p in enumerate(dec.values.tolist()):
                hits[p].append(pos)
            for i in range(n):
                per_point[i].append(tuple(hits[i]))
        else:
            vals = _quantize(dec.as_measure(), grid)
            for i in range(n):
                per_point[i].append(int(vals[i]))
    return [tuple(s) for s in per_point]


def _refined_colors(sig: list[tuple], dq: np.ndarray) -> list[int]:
    """Color refinement on the complete weighted graph, returned as ranks."""
    n = len(sig)
    dl = dq.tolist()
    rows = [tuple(sorted(dl[i])) for i in range(n)]
    keys = [(sig[i], rows[i]) for i in range(n)]
    table = sorted(set(keys))
    colors = [table.index(k) for k in keys]
    while True:
        keys = [
            (colors[i], tuple(sorted((dl[i][j], colors[j]) for j in range(n) if j != i)))
            for i in range(n)
        ]
        table = sorted(set(keys))
        new = [table.index(k) for k in keys]
        if len(table) == len(set(colors)):
            return new
        colors = new


def _twin_classes(sig: list[tuple], dq: np.ndarray) -> list[int]:
    """Class id per point; twins share an id (the transposition is an automorphism)."""
    n = len(sig)
    # same[i, j]: rows i and j agree away from columns i and j
    eq = dq[:, None, :] == dq[None, :, :]
    idx = np.arange(n)
    eq[idx[:, None], idx[None, :], idx[:, None]] = True
    eq[idx[:, None], idx[None, :], idx[None, :]] = True
    same = eq.all(axis=2).tolist()
    cls = list(range(n))
    for i in range(n):
        if cls[i] != i:
            continue
        for j in range(i + 1, n):
            if cls[j] == j and same[i][j] and sig[i] == sig[j]:
                cls[j] = i
    return cls


def _traj_free(space: FiniteRmmSpace) -> bool:
    return not any(d.kind == "trajectory" for d in space.decorations.values())


class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.p[max(ra, rb)] = min(ra, rb)


def _canonical_search(space: FiniteRmmSpace, grid: float) -> CanonicalData:
    n = space.n
    dq = _quantize(space.dist, grid)
    sig = _point_signatures(space, grid)
    color = _refined_colors(sig, dq)
    twins = _twin_classes(sig, dq)
    # twins are interchangeable unless a trajectory tells them apart
    if not _traj_free(space):
        twins = list(range(n))

    head = (color, sig)
    dl = dq.tolist()
    frontier: list[list[int]] = [[]]
    blocks: list[tuple] = []
    for depth in range(n):
        best = None
        nxt: list[list[int]] = []
        for prefix in frontier:
            used = set(prefix)
            seen_twin = set()
            for p in range(n):
                if p in used or twins[p] in seen_twin:
                    continue
                seen_twin.add(twins[p])
                blk = (head[0][p], head[1][p], tuple([dl[p][q] for q in prefix]))
                if best is None or blk < best:
                    best = blk
                    nxt = [prefix + [p]]
                elif blk == best:
                    nxt.append(prefix + [p])
        blocks.append(best)
        frontier = nxt

    payload = [n, [[name, dec.kind] for name, dec in space.decorations.items()]]
    payload.append([[b[0], list(_jsonable(b[1])), list(b[2])] for b in blocks])
    base = hashlib.sha256(json.dumps(payload, separators=(",", ":")).encode()).digest()

    first = frontier[0]
    pos_first = {p: k for k, p in enumerate(first)}
    uf = _UnionFind(n)
    for leaf in frontier[1:]:
        for k, p in enumerate(first):
            uf.union(p, leaf[k])
    for p in range(n):
        uf.union(p, twins[p])
    groups: dict[int, list[int]] = {}
    for p in range(n):
        groups.setdefault(uf.find(p), []).append(p)
    orbits = tuple(tuple(sorted(g)) for g in sorted(groups.values()))
    label = [0] * n
    for orb in orbits:
        lab = min(pos_first[q] for q in orb)
        for q in orb:
            label[q] = lab
    twin_sizes: dict[int, int] = {}
    for t in twins:
        twin_sizes[t] = twin_sizes.get(t, 0) + 1
    order = len(frontier) * math.prod(math.factorial(s) for s in twin_sizes.values())
    return CanonicalData(base, tuple(first), tuple(label), orbits, order)


def _jsonable(sig: tuple):
    return [list(x) if isinstance(x, tuple) else x for x in sig]


class _Cache:
    def __init__(self, maxsize: int = 1 << 16):
        self.maxsize = maxsize
        self.data: OrderedDict = OrderedDict()

    def get(self, key):
        val = self.data.get(key)
        if val is not None:
            self.data.move_to_end(key)
        return val

    def put(self, key, val):
        self.data[key] = val
        if len(self.data) > self.maxsize:
            self.data.popitem(last=False)


_CACHE = _Cache()


def canonical_data(space: FiniteRmmSpace, cap: int = DEFAULT_CAP,
                   grid: float = DEFAULT_GRID) -> CanonicalData:
    if space.n > cap:
        raise SizeLimitError(f"canonical search on {space.n} points exceeds cap {cap}")
    key = (space.key, grid)
    data = _CACHE.get(key)
    if data is None:
        data = _canonical_search(space, grid)
        _CACHE.put(key, data)
    return data


def canonical_hash(space: FiniteRmmSpace, cap: int = DEFAULT_CAP,
                   grid: float = DEFAULT_GRID) -> bytes:
    """Digest of the isomorphism class of the rooted decorated space."""
    data = canonical_data(space, cap, grid)
    root_label = data.orbit_label[space.root]
    return hashlib.sha256(data.base + root_label.to_bytes(4, "little")).digest()


def automorphism_orbits(space: FiniteRmmSpace, cap: int = DEFAULT_CAP) -> tuple[tuple[int, ...], ...]:
    """Orbits of the automorphism group of the unrooted space (root ignored)."""
    return canonical_data(space, cap).orbits


def automorphism_group_order(space: FiniteRmmSpace, cap: int = DEFAULT_CAP) -> int:
    return canonical_data(space, cap).group_order


def stabilizer_order(space: FiniteRmmSpace, x: int, cap: int = DEFAULT_CAP) -> int:
    data = canonical_data(space, cap)
    orbit = next(o for o in data.orbits if x in o)
    return data.group_order // len(orbit)


# explicit witnesses

def _same_decorations(a: FiniteRmmSpace, b: FiniteRmmSpace) -> bool:
    if list(a.decorations) != list(b.decorations):
        return False
    return all(a.decorations[k].kind == b.decorations[k].kind for k in a.decorations)


def is_witness(a: FiniteRmmSpace, b: FiniteRmmSpace, perm, tol: float = MATRIX_TOL) -> bool:
    """Check that ``perm`` (point of ``a`` -> point of ``b``) is an isomorphism."""
    perm = np.asarray(perm, dtype=np.int64)
    if a.n != b.n or sorted(perm.tolist()) != list(range(a.n)):
        return False
    if perm[a.root] != b.root or not _same_decorations(a, b):
        return False
    if not np.allclose(b.dist[np.ix_(perm, perm)], a.dist, atol=tol, rtol=0):
        return False
    if not np.allclose(b.mu[perm], a.mu, atol=tol, rtol=0):
        return False
    for k, dec in a.decorations.items():
        other = b.decorations[k].values
        if dec.kind == "trajectory":
            if not np.array_equal(perm[dec.values], other):
                return False
        elif not np.allclose(other[perm].astype(float), dec.values.astype(float), atol=tol, rtol=0):
            return False
    return True


def find_isomorphism(a: FiniteRmmSpace, b: FiniteRmmSpace, fixed: dict[int, int] | None = None,
                     cap: int = DEFAULT_CAP, tol: float = MATRIX_TOL):
    """First witness (lexicographic search order) extending ``fixed``, or None.

    The root of ``a`` is always sent to the root of ``b``.
    """
    n = a.n
    if n != b.n or not _same_decorations(a, b):
        return None
    if n > cap:
        raise SizeLimitError(f"isomorphism search on {n} points exceeds cap {cap}")
    fixed = dict(fixed or {})
    if fixed.get(a.root, b.root) != b.root:
        return None
    fixed[a.root] = b.root

    def point_data(s):
        cols = [np.sort(s.dist, axis=1), s.mu[:, None]]
        for dec in s.decorations.values():
            if dec.kind != "trajectory":
                cols.append(dec.as_measure()[:, None])
        return np.hstack(cols)

    pa, pb = point_data(a), point_data(b)
    compat = np.all(np.abs(pa[:, None, :] - pb[None, :, :]) <= tol, axis=2)
    trajs = [(a.decorations[k].values, b.decorations[k].values)
             for k in a.decorations if a.decorations[k].kind == "trajectory"]
    for ta, tb in trajs:
        if ta.shape != tb.shape:
            return None

    # assignment order: fixed points first, then by index
    order = list(fixed) + [i for i in range(n) if i not in fixed]
    image = [-1] * n
    taken = [False] * n

    def consistent(i, y):
        if not compat[i, y] or taken[y]:
            return False
        for j in range(n):
            yj = image[j]
            if yj >= 0 and abs(a.dist[i, j] - b.dist[y, yj]) > tol:
                return False
        for ta, tb in trajs:
            hit = ta == i
            if np.any(tb[hit] != y):
                return False
            if np.any(ta[tb == y] != i):
                return False
        return True

    def search(k):
        if k == n:
            return True
        i = order[k]
        cands = [fixed[i]] if i in fixed else range(n)
        for y in cands:
            if consistent(i, y):
                image[i] = y
                taken[y] = True
                if search(k + 1):
                    return True
                image[i] = -1
                taken[y] = False
        return False

    if search(0):
        perm = np.array(image, dtype=np.int64)
        return perm if is_witness(a, b, perm, tol) else None
    return None


def are_isomorphic(a: FiniteRmmSpace, b: FiniteRmmSpace, cap: int = DEFAULT_CAP):
    """Witness permutation mapping ``a`` onto ``b`` (root to root), or None."""
    if a.n != b.n:
        return None
    if a.n > cap:
        raise SizeLimitError(f"isomorphism search on {a.n} points exceeds cap {cap}")
    if canonical_hash(a, cap) != canonical_hash(b, cap):
        return None
    return find_isomorphism(a, b, cap=cap)
