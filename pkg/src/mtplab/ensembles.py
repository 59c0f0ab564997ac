"""Finite probability laws over rooted spaces, and seeded model samplers."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import space as sp
from .canon import canonical_data, canonical_hash
from .space import DEFAULT_CAP, MATRIX_TOL, SCALAR_TOL, FiniteRmmSpace, root_values


class EnsembleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RootedEnsemble:
    """Finitely supported law: a list of ``(weight, space)`` atoms."""

    atoms: tuple

    def __post_init__(self):
        atoms = tuple((float(w), s) for w, s in self.atoms)
        if not atoms:
            raise EnsembleError("an ensemble needs at least one atom")
        ws = [w for w, _ in atoms]
        if any(not math.isfinite(w) or w < 0 for w in ws):
            raise EnsembleError("ensemble weights must be finite and nonnegative")
        total = math.fsum(ws)
        if abs(total - 1.0) > 1e-9:
            raise EnsembleError(f"ensemble weights sum to {total!r}, not 1")
        object.__setattr__(self, "atoms", atoms)

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.atoms])

    @property
    def spaces(self) -> list[FiniteRmmSpace]:
        return [s for _, s in self.atoms]

    def merged(self, cap: int = DEFAULT_CAP) -> "RootedEnsemble":
        return merge(self.atoms, cap=cap)

    def class_weights(self, cap: int = DEFAULT_CAP) -> dict[bytes, float]:
        out: dict[bytes, list[float]] = {}
        for w, s in self.atoms:
            out.setdefault(canonical_hash(s, cap), []).append(w)
        return {k: math.fsum(v) for k, v in out.items()}

    def map(self, fn: Callable[[FiniteRmmSpace], FiniteRmmSpace]) -> "RootedEnsemble":
        return RootedEnsemble(tuple((w, fn(s)) for w, s in self.atoms))

    def to_list(self) -> list[dict]:
        return [{"weight": w, "space": s.to_dict()} for w, s in self.atoms]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "RootedEnsemble":
        return cls(tuple((d["weight"], FiniteRmmSpace.from_dict(d["space"])) for d in items))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_list()))

    @classmethod
    def load(cls, path) -> "RootedEnsemble":
        return cls.from_list(json.loads(Path(path).read_text()))

    def __repr__(self):
        return f"RootedEnsemble({len(self.atoms)} atoms)"


def normalized(pairs: Iterable, drop_zero: bool = True) -> RootedEnsemble:
    """Ensemble from unnormalized ``(weight, space)`` pairs."""
    pairs = [(float(w), s) for w, s in pairs if not (drop_zero and w == 0)]
    total = math.fsum(w for w, _ in pairs)
    if not total > 0 or not math.isfinite(total):
        raise EnsembleError(f"cannot normalize total weight {total!r}")
    return RootedEnsemble(tuple((w / total, s) for w, s in pairs))


def merge(atoms, cap: int = DEFAULT_CAP) -> RootedEnsemble:
    """Combine atoms with equal canonical digests (first representative kept)."""
    groups: dict[bytes, list] = {}
    for w, s in atoms:
        if w == 0:
            continue
        key = canonical_hash(s, cap)
        if key in groups:
            groups[key][0].append(w)
        else:
            groups[key] = [[w], s]
    pairs = [(math.fsum(ws), s) for ws, s in groups.values()]
    return normalized(pairs)


def single(space: FiniteRmmSpace) -> RootedEnsemble:
    return RootedEnsemble(((1.0, space),))


def exact_expectation(e: RootedEnsemble, f: Callable[[FiniteRmmSpace], float]) -> float:
    terms = []
    for w, s in e.atoms:
        v = float(f(s))
        if not math.isfinite(v):
            raise EnsembleError(f"functional is not finite on {s!r}")
        terms.append(w * v)
    return math.fsum(terms)


def class_weight_gap(a: RootedEnsemble, b: RootedEnsemble, cap: int = DEFAULT_CAP) -> float:
    """Largest difference of canonical-class weights between two laws."""
    wa, wb = a.class_weights(cap), b.class_weights(cap)
    return max((abs(wa.get(k, 0.0) - wb.get(k, 0.0)) for k in set(wa) | set(wb)), default=0.0)


def same_law(a: RootedEnsemble, b: RootedEnsemble, tol: float = MATRIX_TOL,
             cap: int = DEFAULT_CAP) -> bool:
    return class_weight_gap(a, b, cap) <= tol


# constructions

def uniform_rooting(space: FiniteRmmSpace, merge_atoms: bool = True,
                    cap: int = DEFAULT_CAP) -> RootedEnsemble:
    """Root chosen with probability proportional to ``mu``."""
    mass = space.total_mass
    if not mass > 0:
        raise EnsembleError("uniform rooting needs positive total mass")
    atoms = [(space.mu[j] / mass, space.with_root(j)) for j in range(space.n) if space.mu[j] > 0]
    return merge(atoms, cap) if merge_atoms else normalized(atoms)


def quasi_transitive_unimodularization(space: FiniteRmmSpace,
                                       cap: int = DEFAULT_CAP) -> RootedEnsemble:
    """Root law on orbit representatives, weighted by ``mu(x) / |Stab(x)|``.

    Orbits and stabilizer orders come from the automorphism group of the
    (decorated) unrooted space; the representative of an orbit is its
    smallest index.
    """
    data = canonical_data(space, cap)
    pairs = []
    for orbit in data.orbits:
        x = orbit[0]
        stab = data.group_order // len(orbit)
        pairs.append((space.mu[x] / stab, space.with_root(x)))
    return normalized(pairs)


def class_uniform_rooting(space: FiniteRmmSpace, cap: int = DEFAULT_CAP) -> RootedEnsemble:
    """Equal weight on every class of rooted spaces; not unimodular in general.

    Used as a negative control.
    """
    data = canonical_data(space, cap)
    return normalized((1.0, space.with_root(orbit[0])) for orbit in data.orbits)


def graph_degrees(s: FiniteRmmSpace) -> np.ndarray:
    return s.degrees(1.0)


def degree_biased(e: RootedEnsemble, cap: int = DEFAULT_CAP) -> RootedEnsemble:
    """Replace the measure by the degree vector and bias the law by ``deg(o)``."""
    pairs = []
    for w, s in e.atoms:
        deg = graph_degrees(s)
        pairs.append((w * deg[s.root], s.with_mu(deg).with_root(s.root)))
    if not math.fsum(p[0] for p in pairs) > 0:
        raise EnsembleError("expected degree is zero")
    return merge(pairs, cap)


def _kernel_array(k, s: FiniteRmmSpace) -> np.ndarray:
    km = k(s)
    mat = np.asarray(getattr(km, "matrix", km), dtype=np.float64)
    if mat.shape != (s.n, s.n):
        raise EnsembleError(f"kernel shape {mat.shape} does not match n={s.n}")
    rows = mat.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > MATRIX_TOL) or np.any(mat < 0):
        raise EnsembleError("kernel rows are not probability vectors")
    return mat


def reroot_by_kernel(e: RootedEnsemble, k: Callable, merge_atoms: bool = True,
                     cap: int = DEFAULT_CAP) -> RootedEnsemble:
    """Move the root one step along the Markov kernel ``k(space)``."""
    pairs = []
    for w, s in e.atoms:
        row = _kernel_array(k, s)[s.root]
        for j in np.flatnonzero(row > 0):
            pairs.append((w * row[j], s.with_root(int(j))))
    return merge(pairs, cap) if merge_atoms else normalized(pairs)


def bias_law(e: RootedEnsemble, b: Callable) -> RootedEnsemble:
    """Law biased by the root functional ``b``."""
    return normalized((w * float(b(s)), s) for w, s in e.atoms)


def condition(e: RootedEnsemble, event: Callable[[FiniteRmmSpace], bool]) -> RootedEnsemble:
    return normalized((w, s) for w, s in e.atoms if event(s))


# model zoo

MODEL_NAMES = ("cycle", "path", "torus_grid", "star", "uniform_tree", "petersen", "custom_file")
ROOTINGS = ("uniform", "quasi_transitive", "class_uniform")


@dataclass
class ModelSpec:
    model: str
    params: dict = field(default_factory=dict)
    measure: str = "counting"
    mu: list | None = None
    recipes: list = field(default_factory=list)
    rooting: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODEL_NAMES}")
        if self.measure not in ("counting", "custom"):
            raise ValueError(f"unknown measure rule {self.measure!r}")
        if self.rooting not in ROOTINGS:
            raise ValueError(f"unknown rooting {self.rooting!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned value")
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        name = d.pop("model")
        known = {"measure", "mu", "recipes", "rooting", "seed", "params"}
        params = dict(d.pop("params", {}))
        for k in list(d):
            if k not in known:
                params[k] = d.pop(k)
        return cls(name, params, **d)

    def to_dict(self) -> dict:
        return {"model": self.model, "params": self.params, "measure": self.measure,
                "mu": self.mu, "recipes": self.recipes, "rooting": self.rooting, "seed": self.seed}

    @property
    def stochastic(self) -> bool:
        return self.model == "uniform_tree" or bool(self.recipes)


def _positive_int(params: dict, key: str, lo: int = 1, hi: int = 4096) -> int:
    try:
        v = int(params[key])
    except KeyError:
        raise ValueError(f"missing parameter {key!r}") from None
    if not lo <= v <= hi:
        raise ValueError(f"parameter {key}={v} outside [{lo}, {hi}]")
    return v


def uniform_tree(n: int, rng: np.random.Generator) -> FiniteRmmSpace:
    """Uniform labeled tree on ``n`` vertices (Pruefer decoding), unrooted."""
    if n == 1:
        return sp.point()
    adj = np.zeros((n, n))
    if n == 2:
        adj[0, 1] = adj[1, 0] = 1
        return sp.graph_space(adj)
    seq = rng.integers(0, n, size=n - 2)
    degree = np.ones(n, dtype=np.int64)
    for v in seq:
        degree[v] += 1
    for v in seq:
        leaf = int(np.flatnonzero(degree == 1)[0])
        adj[leaf, v] = adj[v, leaf] = 1
        degree[leaf] -= 1
        degree[v] -= 1
    u, w = np.flatnonzero(degree == 1)
    adj[u, w] = adj[w, u] = 1
    return sp.graph_space(adj)


def base_space(spec: ModelSpec, rng: np.random.Generator | None = None) -> FiniteRmmSpace:
    p = spec.params
    m = spec.model
    if m == "cycle":
        s = sp.cycle(_positive_int(p, "n", 1))
    elif m == "path":
        s = sp.path(_positive_int(p, "n", 1))
    elif m == "star":
        s = sp.star(_positive_int(p, "leaves", 1))
    elif m == "torus_grid":
        s = sp.torus_grid(_positive_int(p, "rows", 1, 64), _positive_int(p, "cols", 1, 64))
    elif m == "petersen":
        s = sp.petersen()
    elif m == "uniform_tree":
        if rng is None:
            raise ValueError("uniform_tree needs a random generator")
        s = uniform_tree(_positive_int(p, "n", 1), rng)
    else:
        if "path" not in p:
            raise ValueError("custom_file model needs a 'path' parameter")
        s = FiniteRmmSpace.load(p["path"])
    if spec.measure == "custom":
        if spec.mu is None:
            raise ValueError("custom measure needs 'mu'")
        s = s.with_mu(spec.mu)
    sp.check(s)
    return s


def draw_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Generator for draw ``index``; a pure function of (seed, stream, index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


class Sampler:
    """Seeded sampler of rooted (decorated) spaces from a :class:`ModelSpec`.

    ``draw(i)`` depends only on the spec, the seed and ``i``, so draws can be
    generated in any order or in parallel.
    """

    def __init__(self, spec: ModelSpec, seed: int | None = None):
        self.spec = spec
        self.seed = spec.seed if seed is None else int(seed)
        self._fixed = None if spec.model == "uniform_tree" else base_space(spec)

    def with_seed(self, seed: int) -> "Sampler":
        return Sampler(self.spec, seed)

    def draw(self, i: int) -> FiniteRmmSpace:
        from .point_processes import Recipe, apply_recipe

        rng = draw_rng(self.seed, i)
        s = self._fixed if self._fixed is not None else base_space(self.spec, rng)
        probs = s.mu / s.total_mass
        s = s.with_root(int(rng.choice(s.n, p=probs)))
        for k, r in enumerate(self.spec.recipes):
            recipe = r if isinstance(r, Recipe) else Recipe.from_dict(r)
            sub = int(rng.integers(0, 2**63))
            s = apply_recipe(s, recipe, sub + k)
        return s

    def draws(self, count: int, start: int = 0):
        for i in range(start, start + count):
            yield self.draw(i)


def build_model(spec: ModelSpec | dict, cap: int = DEFAULT_CAP):
    """Exact ensemble for deterministic models, a :class:`Sampler` otherwise."""
    if isinstance(spec, dict):
        spec = ModelSpec.from_dict(spec)
    if spec.stochastic:
        return Sampler(spec)
    s = base_space(spec)
    if spec.rooting == "quasi_transitive":
        return quasi_transitive_unimodularization(s, cap)
    if spec.rooting == "class_uniform":
        return class_uniform_rooting(s, cap)
    # beyond the canonical-form cap the law is kept as one atom per root
    return uniform_rooting(s, merge_atoms=s.n <= cap, cap=cap)


def zoo(max_n: int = 12) -> dict[str, FiniteRmmSpace]:
    """Unrooted spaces used by the exact suites."""
    spaces = {
        "point": sp.point(),
        "P2": sp.path(2),
        "C3": sp.cycle(3), "C4": sp.cycle(4), "C5": sp.cycle(5), "C6": sp.cycle(6),
        "P3": sp.path(3), "P4": sp.path(4), "P5": sp.path(5),
        "star3": sp.star(3), "star5": sp.star(5),
        "torus3x3": sp.torus_grid(3, 3),
        "petersen": sp.petersen(),
        "C12": sp.cycle(12),
    }
    return {k: v for k, v in spaces.items() if v.n <= max_n}


def zoo_ensembles(max_n: int = 12) -> dict[str, RootedEnsemble]:
    out = {}
    for name, s in zoo(max_n).items():
        out[f"{name}/uniform"] = uniform_rooting(s)
        out[f"{name}/qt"] = quasi_transitive_unimodularization(s)
    return out
