"""Independent reference implementations used by the tests.

Everything here is deliberately naive: explicit loops and exhaustive
enumeration, sharing no code with the package beyond the space container.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.sparse.csgraph import shortest_path

from mtplab.space import FiniteRmmSpace


def permutation_automorphisms(s: FiniteRmmSpace, tol: float = 1e-9):
    """All permutations preserving dist, mu and every decoration (n <= 8)."""
    n = s.n
    if n > 8:
        raise ValueError("brute-force automorphisms limited to 8 points")
    out = []
    for perm in itertools.permutations(range(n)):
        p = np.array(perm)
        if np.max(np.abs(s.dist[np.ix_(p, p)] - s.dist)) > tol:
            continue
        if np.max(np.abs(s.mu[p] - s.mu)) > tol:
            continue
        if any(np.max(np.abs(d.values[p] - d.values)) > tol for d in s.decorations.values()):
            continue
        out.append(p)
    return out


def brute_orbits(s: FiniteRmmSpace) -> set[frozenset]:
    auts = permutation_automorphisms(s)
    return {frozenset(int(p[x]) for p in auts) for x in range(s.n)}


def brute_isomorphic(a: FiniteRmmSpace, b: FiniteRmmSpace, tol: float = 1e-9) -> bool:
    """Rooted isomorphism by trying every permutation (n <= 8)."""
    if a.n != b.n or set(a.decorations) != set(b.decorations):
        return False
    for perm in itertools.permutations(range(a.n)):
        p = np.array(perm)  # a-point i maps to b-point p[i]
        if p[a.root] != b.root:
            continue
        if np.max(np.abs(b.dist[np.ix_(p, p)] - a.dist)) > tol:
            continue
        if np.max(np.abs(b.mu[p] - a.mu)) > tol:
            continue
        if any(np.max(np.abs(b.decorations[k].values[p] - a.decorations[k].values)) > tol
               for k in a.decorations):
            continue
        return True
    return False


def mtp_sums(atoms, g) -> tuple[float, float]:
    """``E[sum_x g(o, x) mu(x)]`` and ``E[sum_x g(x, o) mu(x)]`` with ``g(space, u, v)``."""
    lhs = rhs = 0.0
    for w, s in atoms:
        o = s.root
        for x in range(s.n):
            lhs += w * g(s, o, x) * s.mu[x]
            rhs += w * g(s, x, o) * s.mu[x]
    return lhs, rhs


def class_law_uniform(s: FiniteRmmSpace) -> dict[frozenset, float]:
    """Root law ``mu / mu(X)`` aggregated over automorphism orbits."""
    law = {}
    for orb in brute_orbits(s):
        law[orb] = sum(s.mu[x] for x in orb) / s.total_mass
    return law


def g_positive_loops(s: FiniteRmmSpace) -> np.ndarray:
    """Positive kernel with unit outgoing mass, by literal summation of the series."""
    n = s.n
    out = np.zeros((n, n))
    for u in range(n):
        realized = sorted({float(r) for r in s.dist[u] if r > 0})
        if realized and all(abs(r - round(r)) < 1e-9 for r in realized):
            # integer metrics use every integer radius, realized or not
            radii = [float(r) for r in range(1, int(round(max(realized))) + 1)]
        else:
            radii = realized
        ball = lambda r: [v for v in range(n) if s.dist[u, v] <= r + 1e-12]
        start = None
        for r in radii:
            if sum(s.mu[v] for v in ball(r)) > 0:
                start = r
                break
        if start is None:
            # one point carries all the mass
            out[u] = [1.0 / s.mu[u] if v == u else 0.0 for v in range(n)]
            continue
        later = [r for r in radii if r > start]
        if not later:
            later = [start]
        total_w = 0.0
        for k, r in enumerate(later, start=1):
            w = 0.5**k if k < len(later) else 0.5 ** (k - 1)
            members = ball(r)
            m = sum(s.mu[v] for v in members)
            for v in members:
                out[u, v] += w / m
            total_w += w
        assert abs(total_w - 1.0) < 1e-12
    return out


def random_metric_space(rng: np.random.Generator, n: int, integer: bool = False,
                        zero_mass: bool = False) -> FiniteRmmSpace:
    """Shortest-path metric of a random connected weighted graph with random masses."""
    w = np.zeros((n, n))
    for v in range(1, n):
        u = int(rng.integers(0, v))
        w[u, v] = w[v, u] = rng.integers(1, 4) if integer else rng.uniform(0.5, 3.0)
    extra = rng.random((n, n)) < 0.3
    for u, v in zip(*np.nonzero(np.triu(extra, 1))):
        w[u, v] = w[v, u] = rng.integers(1, 4) if integer else rng.uniform(0.5, 3.0)
    d = shortest_path(w, directed=False)
    mu = rng.uniform(0.2, 2.0, size=n)
    if zero_mass and n > 1:
        mu[rng.integers(0, n)] = 0.0
    return FiniteRmmSpace(d, mu, int(rng.integers(0, n)))


def stable_matchings_by_permutation(dist_rank, marks, src, dst):
    """Stable perfect matchings of unit atoms ``src -> dst`` by enumerating bijections."""
    rank = {x: r for r, x in enumerate(np.argsort(marks))}
    n = len(marks)

    def key_x(x, y):
        return dist_rank[x, y] * n + rank[y]

    def key_y(x, y):
        return dist_rank[x, y] * n + rank[x]

    stable = []
    for perm in itertools.permutations(dst):
        match = dict(zip(src, perm))
        inv = {y: x for x, y in match.items()}
        ok = True
        for x in src:
            for y in dst:
                if match[x] == y:
                    continue
                if key_x(x, y) < key_x(x, match[x]) and key_y(x, y) < key_y(inv[y], y):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            stable.append(match)
    return stable


def poisson_count_mean_plus_one(c: float, mass: float) -> float:
    return c * mass + 1.0


def binomial_ball_palm(n_ball: int, p: float) -> float:
    """Palm mean of the ball count for i.i.d. Bernoulli points: 1 + (n_ball - 1) p."""
    return 1.0 + (n_ball - 1) * p


def comb(n, k):
    return math.comb(n, k)
