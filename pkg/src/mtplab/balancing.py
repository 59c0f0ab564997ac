"""Stable balancing transport between two measures on a finite space.

Preferences are shared: a pair ``(x, y)`` ranks by distance, then by the
mark of ``x``, then by the mark of ``y``.  Saturating pairs greedily in that
global order gives an allocation with no blocking pair, and with shared
preferences it is the unique stable one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _kernels
from .point_processes import CountFunctional, ball_count, distinct_uniforms, nearest_other_distance
from .reports import DEFAULT_Z, MtpReport, compare_estimates
from .space import MATRIX_TOL, FiniteRmmSpace


class BalancingError(ValueError):
    pass


@dataclass
class TransportDensity:
    """``K`` with ``k(x, .) = K[x, .] psi(.)`` Markovian for phi-a.e. ``x``."""

    space: FiniteRmmSpace
    K: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    alloc: np.ndarray
    marks: np.ndarray
    phi_name: str = "phi"
    psi_name: str = "psi"

    def kernel(self) -> np.ndarray:
        return self.K * self.psi[None, :]


@dataclass
class BalanceReport:
    row_residual: float
    col_residual: float
    tol: float = MATRIX_TOL

    @property
    def passed(self) -> bool:
        return self.row_residual <= self.tol and self.col_residual <= self.tol

    def to_dict(self):
        return {"row_residual": self.row_residual, "col_residual": self.col_residual,
                "tol": self.tol, "passed": self.passed}


@dataclass
class StabilityCertificate:
    blocking_pairs: list = field(default_factory=list)
    exhausted: bool = True

    @property
    def stable(self) -> bool:
        return not self.blocking_pairs


def _measure(space, m):
    if isinstance(m, str):
        return np.array(space.decoration(m), dtype=np.float64)
    return np.asarray(m, dtype=np.float64)


def _marks(space, marks, seed):
    if marks is None:
        if "marks" in space.decorations:
            return space.decorations["marks"].as_measure()
        from .point_processes import point_order

        order = point_order(space)
        out = np.empty(space.n)
        out[order] = distinct_uniforms(np.random.default_rng(seed), space.n)
        return out
    m = _measure(space, marks)
    if np.unique(m).size < m.size:
        raise BalancingError("marks must be pairwise distinct")
    return m


def distance_ranks(dist: np.ndarray) -> np.ndarray:
    q = np.rint(dist / MATRIX_TOL).astype(np.int64)
    _, inv = np.unique(q, return_inverse=True)
    return inv.reshape(dist.shape).astype(np.int64)


def pair_order(space: FiniteRmmSpace, xs: np.ndarray, ys: np.ndarray, marks: np.ndarray) -> np.ndarray:
    rank = np.empty(space.n, dtype=np.int64)
    rank[np.argsort(marks)] = np.arange(space.n)
    dr = distance_ranks(space.dist)
    n = space.n
    key = (dr[xs, ys] * n + rank[xs]) * n + rank[ys]
    return np.argsort(key, kind="stable")


def stable_transport(space: FiniteRmmSpace, phi="phi", psi="psi", marks=None,
                     mark_seed: int = 0, tol: float = MATRIX_TOL) -> TransportDensity:
    """Stable allocation of ``phi`` onto ``psi`` and its density ``K``."""
    a, b = _measure(space, phi), _measure(space, psi)
    if np.any(a < 0) or np.any(b < 0):
        raise BalancingError("measures must be nonnegative")
    ta, tb = a.sum(), b.sum()
    if ta <= 0 or tb <= 0:
        raise BalancingError("both measures must be nonzero")
    if abs(ta - tb) > tol:
        raise BalancingError(f"totals differ ({ta!r} vs {tb!r}): no balancing kernel exists")
    mk = _marks(space, marks, mark_seed)
    src, dst = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    xs = np.repeat(src, dst.size)
    ys = np.tile(dst, src.size)
    order = pair_order(space, xs, ys, mk)
    alloc = _kernels.greedy_allocate(xs[order].astype(np.int64), ys[order].astype(np.int64), a, b)
    K = np.zeros_like(alloc)
    denom = a[:, None] * b[None, :]
    pos = denom > 0
    K[pos] = alloc[pos] / denom[pos]
    return TransportDensity(space, K, a, b, alloc, mk,
                            phi if isinstance(phi, str) else "phi",
                            psi if isinstance(psi, str) else "psi")


def verify_balancing(td: TransportDensity, tol: float = MATRIX_TOL) -> BalanceReport:
    """Row sums ``sum_y K psi`` on phi-atoms and column sums ``sum_x K phi`` on psi-atoms."""
    rows = td.K @ td.psi
    cols = td.K.T @ td.phi
    r = np.abs(rows - 1)[td.phi > 0]
    c = np.abs(cols - 1)[td.psi > 0]
    return BalanceReport(float(r.max(initial=0.0)), float(c.max(initial=0.0)), tol)


def blocking_pairs(td: TransportDensity, tol: float = 1e-12) -> StabilityCertificate:
    """Exhaustive scan for pairs that both prefer each other to some current partner."""
    s, alloc, mk = td.space, td.alloc, td.marks
    n = s.n
    dr = distance_ranks(s.dist)
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(mk)] = np.arange(n)
    # preference keys: smaller is better
    key_x = dr * n + rank[None, :]        # x's view of y
    key_y = dr * n + rank[:, None]        # y's view of x
    has = alloc > tol
    worst_x = np.where(has, key_x, -1).max(axis=1)
    worst_y = np.where(has, key_y, -1).max(axis=0)
    spare_x = td.phi - alloc.sum(axis=1) > tol
    spare_y = td.psi - alloc.sum(axis=0) > tol
    out = []
    for x in np.flatnonzero(td.phi > 0):
        for y in np.flatnonzero(td.psi > 0):
            if has[x, y] and alloc[x, y] >= min(td.phi[x], td.psi[y]) - tol:
                continue
            want_x = spare_x[x] or key_x[x, y] < worst_x[x]
            want_y = spare_y[y] or key_y[x, y] < worst_y[y]
            if want_x and want_y:
                out.append((int(x), int(y)))
    return StabilityCertificate(out, True)


# extra head scheme

def indicator_occupied() -> CountFunctional:
    return CountFunctional("root_in_phi", lambda s, c: (c > 0).astype(float))


def default_extra_head_functionals() -> list[CountFunctional]:
    return [indicator_occupied(), ball_count(1.0), ball_count(2.0), nearest_other_distance()]


def _conditioned_configs(rng, n, p, target, size, budget):
    """Bernoulli(p) configurations, resampled until exactly ``target`` sites are occupied."""
    if not 0 < target <= n:
        raise ValueError(f"occupied count {target} outside [1, {n}]")
    out = np.empty((0, n), dtype=bool)
    attempts = 0
    prob = math.comb(n, target) * p**target * (1 - p) ** (n - target)
    chunk = max(64, int(1.3 * size / max(prob, 1e-9)))
    while out.shape[0] < size:
        draws = rng.random((chunk, n)) < p
        attempts += chunk
        out = np.vstack([out, draws[draws.sum(axis=1) == target]])
        if attempts > budget * size:
            raise BalancingError("resampling budget exhausted while conditioning on the occupied count")
    return out[:size]


def palm_statistics_exact(space: FiniteRmmSpace, p: float, target: int | None,
                          functionals) -> list[float]:
    """Palm expectations of the Bernoulli decoration (conditioned on ``target`` sites if given).

    Under uniform rooting and any kernel of unit incoming mass, the Palm law
    reduces to ``E[sum_z Phi(z) F_z] / E[Phi(X)]``.
    """
    n = space.n
    num = np.zeros(len(functionals))
    den = 0.0
    sites = np.flatnonzero(space.mu > 0)
    sizes = [target] if target is not None else range(len(sites) + 1)
    for k in sizes:
        if k == 0:
            continue
        wk = p**k * (1 - p) ** (len(sites) - k)
        combos = np.array(list(combinations(sites, k)), dtype=np.int64)
        counts = np.zeros((len(combos), n))
        np.put_along_axis(counts, combos, 1.0, axis=1)
        den += wk * counts.sum()
        for f, F in enumerate(functionals):
            num[f] += wk * float((counts * F.table(space, counts)).sum())
    return [float(x) for x in num / den]


def extra_head_demo(space: FiniteRmmSpace, p: float, trials: int, seed: int,
                    target: int | None = None, functionals=None, z: float = DEFAULT_Z,
                    budget: int = 100_000, block: int = 8192) -> list[MtpReport]:
    """Re-root by the stable transport from ``c mu`` to Bernoulli(p) and compare with Palm.

    ``c = Phi(X) / mu(X)`` makes the totals equal, the finite stand-in for
    equal intensities.  Each trial draws a configuration (conditioned on
    ``target`` occupied sites, by default ``round(p n)``), fresh marks and a
    root with law ``mu``; the new root is drawn from the allocation row of the
    old one.  Without the conditioning the scale ``c`` would vary between
    configurations and re-rooting would weight them equally instead of by
    ``Phi(X)``.
    """
    if not 0 < p < 1:
        raise ValueError("extra head demo needs 0 < p < 1")
    if np.any(space.mu != space.mu[0]):
        raise ValueError("extra head demo expects a constant measure")
    if target is None:
        target = int(round(p * space.n))
    functionals = list(functionals or default_extra_head_functionals())
    n = space.n
    dr = distance_ranks(space.dist)
    exact = palm_statistics_exact(space, p, target, functionals)
    vals = [[] for _ in functionals]
    for b in range(-(-trials // block)):
        size = min(block, trials - b * block)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        occ = _conditioned_configs(rng, n, p, target, size, budget)
        marks = rng.random((size, n))
        roots = rng.integers(0, n, size=size)
        u = rng.random(size)
        new_roots = _kernels.extra_head_batch(dr, occ, marks, roots.astype(np.int64), u, target / n)
        counts = occ.astype(float)
        for f, F in enumerate(functionals):
            vals[f].append(F.table(space, counts)[np.arange(size), new_roots])
    reports = []
    for f, F in enumerate(functionals):
        v = np.concatenate(vals[f])
        se = float(v.std(ddof=1) / math.sqrt(v.size))
        reports.append(compare_estimates(float(v.mean()), se, exact[f], 0.0, z, seed=seed,
                                         trials=trials, label=f"extra-head[{F.name}]",
                                         p=p, target=target, minimum=float(v.min()), maximum=float(v.max())))
    return reports


def extra_head_exact(space: FiniteRmmSpace, p: float, target: int, functionals=None,
                     mark_seed: int = 0) -> tuple[list[float], list[float]]:
    """Re-rooting expectation by exact enumeration, next to the Palm values.

    For each configuration the stable kernel is built with fixed marks and
    the root is averaged exactly, so the two lists agree to rounding.
    """
    functionals = list(functionals or default_extra_head_functionals())
    n = space.n
    num = np.zeros(len(functionals))
    tot = 0.0
    marks = distinct_uniforms(np.random.default_rng(mark_seed), n)
    for bits in range(1, 2**n):
        occ = np.array([(bits >> j) & 1 for j in range(n)], dtype=float)
        k = int(occ.sum())
        if k != target:
            continue
        w = p**k * (1 - p) ** (n - k)
        src = np.full(n, k / n)
        td = stable_transport(space, src, occ, marks=marks)
        kern = td.alloc / src[:, None]
        counts = occ[None, :]
        for f, F in enumerate(functionals):
            table = F.table(space, counts)[0]
            num[f] += w * float(np.mean(kern @ table))
        tot += w
    return [float(x) for x in num / tot], palm_statistics_exact(space, p, target, functionals)
