"""Equivariant random decorations: Bernoulli, Poisson, marks, couplings.

Randomness is attached to points through their rank in a root-free
ordering (the canonical ordering when the space is small enough), so a
decoration never depends on where the root sits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .canon import canonical_data
from .ensembles import RootedEnsemble, normalized
from .reports import DEFAULT_Z, MtpReport, compare_estimates
from .space import MATRIX_TOL, Decoration, FiniteRmmSpace

SEED_ORDER_CAP = 16
RECIPE_KINDS = ("bernoulli", "poisson", "marks_uniform", "independent_pair")
BLOCK = 4096


def point_order(space: FiniteRmmSpace) -> np.ndarray:
    """Root-free ordering of the points (position -> point index)."""
    if space.n <= SEED_ORDER_CAP:
        return np.array(canonical_data(space, cap=SEED_ORDER_CAP).order, dtype=np.int64)
    return np.arange(space.n)


@dataclass
class Recipe:
    kind: str
    params: dict = field(default_factory=dict)
    name: str = "phi"

    def __post_init__(self):
        if self.kind not in RECIPE_KINDS:
            raise ValueError(f"unknown recipe kind {self.kind!r}")
        p = self.params
        if self.kind == "bernoulli" and not 0 <= float(p.get("p", -1)) <= 1:
            raise ValueError("bernoulli recipe needs 0 <= p <= 1")
        if self.kind == "poisson" and not float(p.get("c", -1)) >= 0:
            raise ValueError("poisson recipe needs c >= 0")
        if self.kind == "independent_pair":
            p["first"] = _as_recipe(p["first"])
            p["second"] = _as_recipe(p["second"])

    @classmethod
    def from_dict(cls, d: dict) -> "Recipe":
        d = dict(d)
        kind = d.pop("kind")
        name = d.pop("name", "phi")
        params = dict(d.pop("params", {}))
        params.update(d)
        return cls(kind, params, name)

    def to_dict(self) -> dict:
        params = {k: (v.to_dict() if isinstance(v, Recipe) else v) for k, v in self.params.items()}
        return {"kind": self.kind, "name": self.name, "params": params}


def _as_recipe(r) -> Recipe:
    return r if isinstance(r, Recipe) else Recipe.from_dict(r)


def bernoulli(p: float, name: str = "phi") -> Recipe:
    return Recipe("bernoulli", {"p": p}, name)


def poisson(c: float, name: str = "phi") -> Recipe:
    return Recipe("poisson", {"c": c}, name)


def marks_uniform(name: str = "marks", on: str | None = None) -> Recipe:
    return Recipe("marks_uniform", {"on": on}, name)


def independent_pair(first: Recipe, second: Recipe) -> Recipe:
    return Recipe("independent_pair", {"first": first, "second": second}, "")


def distinct_uniforms(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform [0,1) values, redrawn until pairwise distinct."""
    u = rng.random(size)
    while np.unique(u).size < size:
        _, first = np.unique(u, return_index=True)
        dup = np.setdiff1d(np.arange(size), first)
        u[dup] = rng.random(dup.size)
    return u


def apply_recipe(space: FiniteRmmSpace, recipe: Recipe, seed: int) -> FiniteRmmSpace:
    """Decorate ``space``; the result depends on (root-free structure, seed) only."""
    recipe = _as_recipe(recipe)
    if recipe.kind == "independent_pair":
        ss = np.random.SeedSequence(seed)
        a, b = (int(x.generate_state(1, np.uint64)[0]) for x in ss.spawn(2))
        out = apply_recipe(space, recipe.params["first"], a)
        return apply_recipe(out, recipe.params["second"], b)
    order = point_order(space)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = space.n
    vals = np.zeros(n)
    if recipe.kind == "bernoulli":
        u = rng.random(n)
        vals[order] = (u < float(recipe.params["p"])).astype(float)
        vals[space.mu <= 0] = 0.0
        dec = Decoration("measure", vals)
    elif recipe.kind == "poisson":
        c = float(recipe.params["c"])
        vals[order] = rng.poisson(c * space.mu[order])
        dec = Decoration("measure", vals)
    else:
        on = recipe.params.get("on")
        u = distinct_uniforms(rng, n)
        vals[order] = u
        if on:
            vals[space.decoration(on) <= 0] = 0.0
        dec = Decoration("marks", vals)
    return space.with_decoration(recipe.name, dec)


# exact enumeration of finite decoration laws

def bernoulli_configurations(space: FiniteRmmSpace, p: float):
    """All 0/1 configurations on the support of ``mu`` with their probabilities."""
    support = np.flatnonzero(space.mu > 0)
    k = support.size
    for bits in itertools.product((0, 1), repeat=k):
        ones = sum(bits)
        prob = p**ones * (1 - p) ** (k - ones)
        if prob == 0:
            continue
        vals = np.zeros(space.n)
        vals[support] = bits
        yield prob, vals


def bernoulli_ensemble(e: RootedEnsemble, p: float, name: str = "phi",
                       kind: str = "measure") -> RootedEnsemble:
    """Exact law of ``e`` decorated by independent Bernoulli(p) points."""
    atoms = []
    for w, s in e.atoms:
        for prob, vals in bernoulli_configurations(s, p):
            atoms.append((w * prob, s.with_decoration(name, Decoration(kind, vals))))
    return normalized(atoms)


def independent_bernoulli_pair_ensemble(e: RootedEnsemble, p1: float, p2: float,
                                        names=("phi", "psi")) -> RootedEnsemble:
    first = bernoulli_ensemble(e, p1, names[0])
    return bernoulli_ensemble(first, p2, names[1])


def fixed_subset_ensemble(space: FiniteRmmSpace, subset, name: str = "phi") -> RootedEnsemble:
    """Uniform rooting of ``space`` carrying the deterministic subset ``subset``."""
    from .ensembles import uniform_rooting

    mask = np.zeros(space.n, dtype=bool)
    mask[list(subset)] = True
    return uniform_rooting(space.with_decoration(name, Decoration("subset", mask)), merge_atoms=False)


# Voronoi cells with mark tie-breaking

def voronoi(space: FiniteRmmSpace, phi="phi", marks="marks") -> np.ndarray:
    """Map each point to its closest phi-point; ties go to the smallest mark."""
    centers_w = space.decoration(phi) if isinstance(phi, str) else np.asarray(phi, dtype=float)
    centers = np.flatnonzero(centers_w > 0)
    if centers.size == 0:
        raise ValueError("voronoi needs at least one phi point")
    mk = space.decoration(marks) if isinstance(marks, str) else np.asarray(marks, dtype=float)
    tau = np.empty(space.n, dtype=np.int64)
    for x in range(space.n):
        d = space.dist[x, centers]
        tied = centers[np.abs(d - d.min()) <= MATRIX_TOL]
        if tied.size > 1:
            m = mk[tied]
            if np.unique(m).size < m.size:
                raise ValueError(f"duplicate marks among tied centers of point {x}")
            tau[x] = tied[np.argmin(m)]
        else:
            tau[x] = tied[0]
    return tau


# Palm of a Poisson process

@dataclass(frozen=True)
class CountFunctional:
    """Functional of (space, counts); ``table(space, counts)`` gives its value at every root.

    ``counts`` has shape (trials, n); the result has the same shape.
    """

    name: str
    table: Callable[[FiniteRmmSpace, np.ndarray], np.ndarray]

    def at_root(self, space: FiniteRmmSpace, counts: np.ndarray) -> np.ndarray:
        return self.table(space, counts)[..., space.root]


def count_at_root() -> CountFunctional:
    return CountFunctional("count_at_root", lambda s, c: c.astype(float))


def ball_count(r: float = 1.0) -> CountFunctional:
    def table(s, c):
        ball = (s.dist <= r + MATRIX_TOL).astype(float)
        return c @ ball.T
    return CountFunctional(f"ball_count:r={r:g}", table)


def multiple_at_root(k: int = 2) -> CountFunctional:
    return CountFunctional(f"count_at_root>={k}", lambda s, c: (c >= k).astype(float))


def total_count() -> CountFunctional:
    return CountFunctional("total_count", lambda s, c: np.repeat(c.sum(axis=-1, keepdims=True), s.n, axis=-1).astype(float))


def nearest_other_distance() -> CountFunctional:
    """Distance to the nearest occupied point other than the root (diam + 1 if none)."""

    def table(s, c):
        far = s.dist.max() + 1.0
        occ = c > 0
        out = np.empty(c.shape, dtype=float)
        for j in range(s.n):
            d = np.where(occ, s.dist[j][None, :], far)
            d[..., j] = far
            out[..., j] = d.min(axis=-1)
        return out

    return CountFunctional("nearest_other_distance", table)


def constant_one() -> CountFunctional:
    return CountFunctional("one", lambda s, c: np.ones(c.shape))


def default_poisson_functionals() -> list[CountFunctional]:
    return [count_at_root(), ball_count(1.0), multiple_at_root(2), total_count(), nearest_other_distance()]


def _block_rng(seed: int, side: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(side, block)))


def _poisson_counts(space: FiniteRmmSpace, c: float, rng, size: int) -> np.ndarray:
    order = point_order(space)
    counts = np.zeros((size, space.n))
    counts[:, order] = rng.poisson(c * space.mu[order], size=(size, space.n))
    return counts


def _atom_choice(e: RootedEnsemble, rng, size: int) -> np.ndarray:
    if len(e.atoms) == 1:
        return np.zeros(size, dtype=np.int64)
    return rng.choice(len(e.atoms), p=e.weights, size=size)


def palm_of_poisson_check(e: RootedEnsemble, c: float, functionals: Sequence[CountFunctional] | None = None,
                          trials: int = 100_000, seed: int = 0, h=None, z: float = DEFAULT_Z,
                          block: int = BLOCK) -> list[MtpReport]:
    """Palm of Poisson(c mu) against the law of ``Phi + delta_o``.

    Side (a) follows the explicit Palm construction with self-normalized
    weights ``h(o, z) Phi(z)``.  Side (b) draws Phi independently and adds an
    atom at the root.  Each functional gets its own report.
    """
    from .transport import H_BALANCED, as_transport, require_unit_incoming

    if not c > 0:
        raise ValueError("poisson intensity must be positive")
    functionals = list(functionals or default_poisson_functionals())
    h = as_transport(h or H_BALANCED)
    hmats = [require_unit_incoming(s, h) for s in e.spaces]
    k = len(functionals)
    num = [[] for _ in range(k)]      # per-trial sum_z w F for side (a)
    den = []
    direct = [[] for _ in range(k)]
    nblocks = -(-trials // block)
    for b in range(nblocks):
        size = min(block, trials - b * block)
        ra, rb = _block_rng(seed, 0, b), _block_rng(seed, 1, b)
        atoms_a = _atom_choice(e, ra, size)
        atoms_b = _atom_choice(e, rb, size)
        wa = np.zeros(size)
        fa = np.zeros((k, size))
        fb = np.zeros((k, size))
        for i, (w, s) in enumerate(e.atoms):
            sel = np.flatnonzero(atoms_a == i)
            if sel.size:
                counts = _poisson_counts(s, c, ra, sel.size)
                weights = hmats[i][s.root][None, :] * counts
                wa[sel] = weights.sum(axis=1)
                for f, F in enumerate(functionals):
                    fa[f, sel] = (weights * F.table(s, counts)).sum(axis=1)
            sel = np.flatnonzero(atoms_b == i)
            if sel.size:
                counts = _poisson_counts(s, c, rb, sel.size)
                counts[:, s.root] += 1
                for f, F in enumerate(functionals):
                    fb[f, sel] = F.at_root(s, counts)
        den.append(wa)
        for f in range(k):
            num[f].append(fa[f])
            direct[f].append(fb[f])
    den = np.concatenate(den)
    mean_den = den.mean()
    ess = den.sum() ** 2 / max(np.sum(den**2), 1e-300)
    reports = []
    for f, F in enumerate(functionals):
        a = np.concatenate(num[f])
        ratio = a.mean() / mean_den
        resid = a - ratio * den
        se_a = resid.std(ddof=1) / math.sqrt(trials) / mean_den
        bvals = np.concatenate(direct[f])
        mb = bvals.mean()
        se_b = bvals.std(ddof=1) / math.sqrt(trials)
        rep = compare_estimates(float(ratio), float(se_a), float(mb), float(se_b), z, seed=seed,
                                trials=trials, label=f"palm-poisson[{F.name}]", c=c, ess=float(ess))
        reports.append(rep)
    return reports


def poisson_pmf_table(lam: float, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    return np.exp(-lam + k * math.log(lam) - np.array([math.lgamma(x + 1) for x in k])) if lam > 0 \
        else (k == 0).astype(float)
