"""Finite rooted measured metric spaces.

A :class:`FiniteRmmSpace` is a distance matrix, a nonnegative mass vector,
a root index and a bag of named decorations (extra measures, marks,
trajectories, subsets).  Values are immutable once built; every operation
returns a new space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

MATRIX_TOL = 1e-9
SCALAR_TOL = 1e-12
DEFAULT_GRID = 1e-9
DEFAULT_CAP = 12

DECORATION_KINDS = ("measure", "marks", "trajectory", "subset")


class SizeLimitError(ValueError):
    """Raised when a combinatorial search is asked to exceed its size cap."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Decoration:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in DECORATION_KINDS:
            raise ValueError(f"unknown decoration kind {self.kind!r}")
        if self.kind == "trajectory":
            vals = np.array(self.values, dtype=np.int64).reshape(-1)
        elif self.kind == "subset":
            vals = np.array(self.values, dtype=bool).reshape(-1)
        else:
            vals = np.array(self.values, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "values", _frozen(vals))

    def as_measure(self) -> np.ndarray:
        """Values as a float vector (subsets become 0/1 indicators)."""
        if self.kind == "trajectory":
            raise TypeError("a trajectory is not a measure")
        return self.values.astype(np.float64)

    def relabeled(self, perm: np.ndarray) -> "Decoration":
        """Decoration carried along the point map ``i -> perm[i]``."""
        if self.kind == "trajectory":
            return Decoration(self.kind, perm[self.values])
        out = np.empty_like(self.values)
        out[perm] = self.values
        return Decoration(self.kind, out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Decoration":
        return cls(d["kind"], np.asarray(d["values"]))


@dataclass(frozen=True, eq=False)
class FiniteRmmSpace:
    """A finite rooted measured metric space with optional decorations."""

    dist: np.ndarray
    mu: np.ndarray
    root: int = 0
    decorations: Mapping[str, Decoration] = field(default_factory=dict)

    def __post_init__(self):
        dist = np.array(self.dist, dtype=np.float64)
        mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError(f"dist must be square, got shape {dist.shape}")
        if mu.shape[0] != dist.shape[0]:
            raise ValueError("mu length does not match dist")
        if dist.shape[0] == 0:
            raise ValueError("a space needs at least one point")
        decs = {}
        for name, dec in dict(self.decorations).items():
            if not isinstance(dec, Decoration):
                dec = Decoration.from_dict(dec)
            decs[str(name)] = dec
        object.__setattr__(self, "dist", _frozen(dist))
        object.__setattr__(self, "mu", _frozen(mu))
        object.__setattr__(self, "root", int(self.root))
        object.__setattr__(self, "decorations", dict(sorted(decs.items())))

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    def decoration(self, name: str) -> np.ndarray:
        if name == "mu":
            return self.mu
        try:
            return self.decorations[name].as_measure()
        except KeyError:
            raise KeyError(f"space has no decoration {name!r}") from None

    @cached_property
    def key(self) -> bytes:
        """Root-independent byte key of the labeled structure (cache key)."""
        parts = [np.int64(self.n).tobytes(), self.dist.tobytes(), self.mu.tobytes()]
        for name, dec in self.decorations.items():
            parts.append(name.encode() + b"\0" + dec.kind.encode() + b"\0")
            parts.append(np.int64(dec.values.size).tobytes())
            parts.append(dec.values.tobytes())
        return b"".join(parts)

    @cached_property
    def metric_key(self) -> bytes:
        """Like ``key`` but ignoring decorations."""
        return b"".join([np.int64(self.n).tobytes(), self.dist.tobytes(), self.mu.tobytes()])

    def with_root(self, j: int) -> "FiniteRmmSpace":
        if not 0 <= j < self.n:
            raise IndexError(f"root index {j} out of range for n={self.n}")
        out = FiniteRmmSpace.__new__(FiniteRmmSpace)
        object.__setattr__(out, "dist", self.dist)
        object.__setattr__(out, "mu", self.mu)
        object.__setattr__(out, "root", int(j))
        object.__setattr__(out, "decorations", self.decorations)
        for k in ("key", "metric_key"):
            if k in self.__dict__:
                out.__dict__[k] = self.__dict__[k]
        return out

    def with_mu(self, mu) -> "FiniteRmmSpace":
        return FiniteRmmSpace(self.dist, mu, self.root, self.decorations)

    def with_decoration(self, name: str, dec: Decoration | None) -> "FiniteRmmSpace":
        decs = dict(self.decorations)
        if dec is None:
            decs.pop(name, None)
        else:
            decs[name] = dec
        return FiniteRmmSpace(self.dist, self.mu, self.root, decs)

    def without_decorations(self) -> "FiniteRmmSpace":
        return FiniteRmmSpace(self.dist, self.mu, self.root)

    def relabel(self, perm) -> "FiniteRmmSpace":
        """Copy with point ``i`` renamed to ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.argsort(perm)
        dist = self.dist[np.ix_(inv, inv)]
        mu = self.mu[inv]
        decs = {k: d.relabeled(perm) for k, d in self.decorations.items()}
        return FiniteRmmSpace(dist, mu, int(perm[self.root]), decs)

    def degrees(self, radius: float = 1.0) -> np.ndarray:
        """Number of other points within ``radius`` (graph degree for unit edges)."""
        close = self.dist <= radius + MATRIX_TOL
        np.fill_diagonal(close, False)
        return close.sum(axis=1).astype(np.float64)

    # serialization

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "dist": self.dist.tolist(),
            "mu": self.mu.tolist(),
            "root": self.root,
            "decorations": {k: d.to_dict() for k, d in self.decorations.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FiniteRmmSpace":
        space = cls(d["dist"], d["mu"], d.get("root", 0), d.get("decorations", {}))
        if "n" in d and int(d["n"]) != space.n:
            raise ValueError(f"declared n={d['n']} but dist has {space.n} points")
        return space

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FiniteRmmSpace":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "FiniteRmmSpace":
        return cls.from_json(Path(path).read_text())

    def __repr__(self) -> str:
        decs = ",".join(self.decorations)
        return f"FiniteRmmSpace(n={self.n}, root={self.root}, mass={self.total_mass:g}, decorations=[{decs}])"


def validate(space: FiniteRmmSpace, tol: float = MATRIX_TOL) -> list[str]:
    """List every violated invariant of ``space``; empty means valid."""
    out = []
    d, n = space.dist, space.n
    if not np.all(np.isfinite(d)):
        out.append("non-finite distance entries")
        return out
    for i in range(n):
        if abs(d[i, i]) > tol:
            out.append(f"nonzero diagonal at ({i},{i})")
    symmetric = True
    for i in range(n):
        for j in range(i + 1, n):
            if abs(d[i, j] - d[j, i]) > tol:
                out.append(f"asymmetry at ({i},{j})")
                symmetric = False
            if min(d[i, j], d[j, i]) <= tol:
                out.append(f"non-positive distance at ({i},{j})")
    if symmetric:
        # d[i,j] > min_k d[i,k] + d[k,j]
        via = (d[:, :, None] + d[None, :, :]).min(axis=1)
        bad = d > via + tol
        for i in range(n):
            for j in range(i + 1, n):
                if bad[i, j]:
                    out.append(f"triangle inequality at ({i},{j})")
    mu = space.mu
    if not np.all(np.isfinite(mu)) or np.any(mu < 0):
        idx = np.flatnonzero(~np.isfinite(mu) | (mu < 0)).tolist()
        out.append(f"negative or non-finite mass at {idx}")
    if not 0 <= space.root < n:
        out.append(f"root index {space.root} out of range")
    for name, dec in space.decorations.items():
        vals = dec.values
        if dec.kind == "trajectory":
            if np.any((vals < 0) | (vals >= n)):
                out.append(f"decoration {name}: trajectory index out of range")
            continue
        if vals.shape[0] != n:
            out.append(f"decoration {name}: length {vals.shape[0]} != {n}")
            continue
        if dec.kind == "measure" and (np.any(vals < 0) or not np.all(np.isfinite(vals))):
            out.append(f"decoration {name}: negative or non-finite measure")
        if dec.kind == "marks" and np.any((vals < 0) | (vals > 1)):
            out.append(f"decoration {name}: marks outside [0,1]")
    return out


def check(space: FiniteRmmSpace) -> FiniteRmmSpace:
    """Return ``space`` unchanged or raise ValueError listing its violations."""
    problems = validate(space)
    if problems:
        raise ValueError("invalid space: " + "; ".join(problems))
    return space


def reroot(space: FiniteRmmSpace, j: int) -> FiniteRmmSpace:
    return space.with_root(j)


def product_space(a: FiniteRmmSpace, b: FiniteRmmSpace, metric_rule: str = "max",
                  cap: int = 4096) -> FiniteRmmSpace:
    """Product space with measure ``mu_a (x) mu_b``, rooted at ``(root_a, root_b)``.

    Point ``(x, y)`` gets index ``x * b.n + y``.  Decorations are dropped.
    """
    if a.n * b.n > cap:
        raise SizeLimitError(f"product of {a.n} and {b.n} points exceeds cap {cap}")
    da = a.dist[:, None, :, None]
    db = b.dist[None, :, None, :]
    if metric_rule == "max":
        d = np.maximum(da, db)
    elif metric_rule == "sum":
        d = da + db
    else:
        raise ValueError(f"metric_rule must be 'max' or 'sum', got {metric_rule!r}")
    n = a.n * b.n
    return FiniteRmmSpace(d.reshape(n, n), np.outer(a.mu, b.mu).reshape(n),
                          a.root * b.n + b.root)


def root_values(f: Callable, space: FiniteRmmSpace) -> np.ndarray:
    """Evaluate a root functional at every point (``f(reroot(space, j))``)."""
    vec = getattr(f, "values", None)
    if vec is not None:
        return np.asarray(vec(space), dtype=np.float64)
    return np.array([f(space.with_root(j)) for j in range(space.n)], dtype=np.float64)


def bias_measure(space: FiniteRmmSpace, b: Callable) -> FiniteRmmSpace:
    """Replace ``mu`` by ``b mu``, where ``b`` is a root functional."""
    vals = root_values(b, space)
    if not np.all(np.isfinite(vals)) or np.any(vals < 0):
        raise ValueError("bias function returned negative or non-finite values")
    return space.with_mu(vals * space.mu)


def swap_measure(space: FiniteRmmSpace, name: str) -> FiniteRmmSpace:
    """Exchange the base measure with the measure decoration ``name``."""
    dec = space.decorations[name]
    if dec.kind not in ("measure", "subset"):
        raise TypeError(f"decoration {name!r} is not a measure")
    decs = dict(space.decorations)
    decs[name] = Decoration("measure", space.mu)
    return FiniteRmmSpace(space.dist, dec.as_measure(), space.root, decs)


# constructors used throughout the model zoo

def graph_space(adjacency, mu=None, root: int = 0) -> FiniteRmmSpace:
    """Shortest-path metric of a connected unweighted graph."""
    from scipy.sparse.csgraph import shortest_path

    adj = np.asarray(adjacency, dtype=np.float64)
    d = shortest_path(adj, method="D", unweighted=True)
    if not np.all(np.isfinite(d)):
        raise ValueError("graph is disconnected")
    if mu is None:
        mu = np.ones(adj.shape[0])
    return FiniteRmmSpace(d, mu, root)


def cycle(n: int, length: float = 1.0) -> FiniteRmmSpace:
    i = np.arange(n)
    gap = np.abs(i[:, None] - i[None, :])
    return FiniteRmmSpace(np.minimum(gap, n - gap) * length, np.ones(n))


def path(n: int, length: float = 1.0) -> FiniteRmmSpace:
    i = np.arange(n)
    return FiniteRmmSpace(np.abs(i[:, None] - i[None, :]) * length, np.ones(n))


def star(leaves: int) -> FiniteRmmSpace:
    n = leaves + 1
    d = np.full((n, n), 2.0)
    d[0, :] = d[:, 0] = 1.0
    np.fill_diagonal(d, 0.0)
    return FiniteRmmSpace(d, np.ones(n))


def torus_grid(rows: int, cols: int) -> FiniteRmmSpace:
    """Graph metric of the discrete torus C_rows x C_cols (sum rule)."""
    return product_space(cycle(rows), cycle(cols), "sum")


def petersen() -> FiniteRmmSpace:
    adj = np.zeros((10, 10))
    for i in range(5):
        for a, b in ((i, (i + 1) % 5), (i, i + 5), (i + 5, (i + 2) % 5 + 5)):
            adj[a, b] = adj[b, a] = 1
    return graph_space(adj)


def point(mass: float = 1.0) -> FiniteRmmSpace:
    return FiniteRmmSpace([[0.0]], [mass])
