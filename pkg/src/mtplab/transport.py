"""Transport functions, mass transport checks and the balancing kernels.

A transport function is stored as a builder ``space -> n x n matrix`` whose
entry ``[u, v]`` is the mass sent from ``u`` to ``v``.  Building the whole
matrix at once is what makes exact sums over ensembles cheap; single values
are available through ``g(space, u, v)``.
"""

from __future__ import annotations

import hashlib
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .ensembles import RootedEnsemble, draw_rng
from .reports import MtpReport, mc_verdict
from .space import MATRIX_TOL, FiniteRmmSpace, root_values


class TransportError(ValueError):
    pass


class TransportFunction:
    """Isomorphism-invariant nonnegative function of doubly rooted spaces.

    ``metric_only`` declares that the matrix ignores decorations, so it is
    cached on the metric and measure alone.
    """

    def __init__(self, name: str, matrix_fn: Callable[[FiniteRmmSpace], np.ndarray],
                 deps: Sequence[str] = (), cache_size: int = 8192, metric_only: bool = False):
        self.name = name
        self.metric_only = metric_only
        self.matrix_fn = matrix_fn
        self.deps = tuple(deps)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size

    def matrix(self, space: FiniteRmmSpace) -> np.ndarray:
        key = space.metric_key if self.metric_only else space.key
        m = self._cache.get(key)
        if m is not None:
            self._cache.move_to_end(key)
            return m
        for d in self.deps:
            if d != "mu" and d not in space.decorations:
                raise TransportError(f"{self.name} needs decoration {d!r}")
        m = np.array(self.matrix_fn(space), dtype=np.float64)
        if m.shape != (space.n, space.n):
            raise TransportError(f"{self.name} returned shape {m.shape} for n={space.n}")
        if not np.all(np.isfinite(m)):
            raise TransportError(f"{self.name} produced non-finite values")
        if np.any(m < 0):
            raise TransportError(f"{self.name} produced negative values")
        m.setflags(write=False)
        self._cache[key] = m
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return m

    def __call__(self, space: FiniteRmmSpace, u: int, v: int) -> float:
        return float(self.matrix(space)[u, v])

    def __repr__(self):
        return f"TransportFunction({self.name!r})"


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Markov kernel on the points of ``space``; rows are distributions."""

    space: FiniteRmmSpace
    matrix: np.ndarray
    reference: str = "mu"
    name: str = ""

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (self.space.n, self.space.n):
            raise TransportError("kernel shape does not match the space")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise TransportError("kernel entries must be finite and nonnegative")
        rows = m.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > MATRIX_TOL)
        if bad.size:
            raise TransportError(f"kernel rows {bad.tolist()} do not sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def stationary_defect(self, weights: np.ndarray) -> float:
        w = np.asarray(weights, dtype=np.float64)
        return float(np.max(np.abs(w @ self.matrix - w)))


def as_transport(g) -> TransportFunction:
    if isinstance(g, TransportFunction):
        return g
    if isinstance(g, str):
        return builtin(g)
    if callable(g):
        def fn(s, g=g):
            return np.array([[g(s, u, v) for v in range(s.n)] for u in range(s.n)])
        return TransportFunction(getattr(g, "__name__", "custom"), fn)
    raise TypeError(f"cannot interpret {g!r} as a transport function")


def eval_out_in(space: FiniteRmmSpace, g) -> tuple[float, float]:
    """Outgoing and incoming mass at the root."""
    m = as_transport(g).matrix(space)
    o = space.root
    return float(m[o] @ space.mu), float(m[:, o] @ space.mu)


def eval_out_in_against(space: FiniteRmmSpace, g, measure: np.ndarray) -> tuple[float, float]:
    m = as_transport(g).matrix(space)
    o = space.root
    return float(m[o] @ measure), float(m[:, o] @ measure)


def mtp_check_exact(e: RootedEnsemble, g, tol: float = MATRIX_TOL,
                    label: str = "") -> MtpReport:
    g = as_transport(g)
    lhs, rhs = [], []
    for w, s in e.atoms:
        out, inc = eval_out_in(s, g)
        lhs.append(w * out)
        rhs.append(w * inc)
    return MtpReport.exact(math.fsum(lhs), math.fsum(rhs), tol, label or f"mtp[{g.name}]")


def mtp_check_mc(sampler, g, trials: int, seed: int, z: float = 4.0,
                 lhs_weight: Callable[[FiniteRmmSpace], float] | None = None,
                 label: str = "") -> MtpReport:
    """Monte-Carlo MTP check on draws ``sampler.draw(i)`` for ``i < trials``.

    ``lhs_weight`` multiplies the outgoing side per draw; it exists only to
    build deliberately broken controls.
    """
    if trials < 100:
        raise ValueError("mtp_check_mc needs at least 100 trials")
    g = as_transport(g)
    seeded = sampler.with_seed(seed) if hasattr(sampler, "with_seed") else sampler
    outs = np.empty(trials)
    ins = np.empty(trials)
    for i in range(trials):
        s = seeded.draw(i)
        out, inc = eval_out_in(s, g)
        if lhs_weight is not None:
            out *= float(lhs_weight(s))
        outs[i], ins[i] = out, inc
    if not (np.all(np.isfinite(outs)) and np.all(np.isfinite(ins))):
        raise TransportError("non-finite accumulation in MC check")
    return mc_verdict(outs, ins, z=z, seed=seed, paired=True, label=label or f"mtp-mc[{g.name}]")


# positive kernel g and balanced kernel h

def _radius_sequence(row: np.ndarray) -> np.ndarray:
    """Candidate ball radii around one point."""
    pos = np.unique(row[row > 0])
    if pos.size == 0:
        return np.array([0.0])
    if np.allclose(pos, np.round(pos), atol=MATRIX_TOL, rtol=0):
        return np.arange(1.0, np.round(pos.max()) + 1.0)
    return pos


def g_positive_matrix(space: FiniteRmmSpace) -> np.ndarray:
    """``g(u, .) = sum_k 2^-k * uniform(B(u, N+k))`` with the tail folded in."""
    mu = space.mu
    if not space.total_mass > 0:
        raise TransportError("positive kernel needs a space of positive mass")
    n = space.n
    out = np.zeros((n, n))
    for u in range(n):
        row = space.dist[u]
        radii = _radius_sequence(row)
        masses = [mu[row <= r + MATRIX_TOL].sum() for r in radii]
        first = next((i for i, m in enumerate(masses) if m > 0), len(radii) - 1)
        k, weight_left = 1, 1.0
        while True:
            idx = first + k
            inside = row <= (radii[idx] if idx < len(radii) else np.inf) + MATRIX_TOL
            full = bool(inside.all())
            wk = weight_left if full else 2.0 ** -k
            out[u, inside] += wk / mu[inside].sum()
            weight_left -= wk
            if full:
                break
            k += 1
    return out


def h_balanced_matrix(space: FiniteRmmSpace, b: np.ndarray | None = None) -> np.ndarray:
    """Symmetric balanced kernel with ``h+ = h- = b`` (default 1)."""
    g = g_positive_matrix(space)
    mu = space.mu
    bg = g if b is None else g * np.asarray(b, dtype=np.float64)[:, None]
    denom = bg.T @ mu          # denom[x] = sum_y b(y) g(y,x) mu(y)
    pos = mu > 0
    if np.any(denom[pos] <= 0):
        raise TransportError("incoming mass vanishes at a point of positive mass")
    w = np.zeros_like(mu)
    w[pos] = mu[pos] / denom[pos]
    h = (bg * w) @ bg.T
    return (h + h.T) / 2.0


def build_g_positive(space: FiniteRmmSpace | None = None) -> TransportFunction:
    if space is not None and not space.total_mass > 0:
        raise TransportError("positive kernel needs a space of positive mass")
    return G_POSITIVE


def build_h_balanced(space: FiniteRmmSpace | None = None, b=None) -> TransportFunction:
    """Balanced kernel; ``b`` is an optional positive root functional."""
    if space is not None and not space.total_mass > 0:
        raise TransportError("balanced kernel needs a space of positive mass")
    if b is None:
        return H_BALANCED

    def fn(s):
        vals = root_values(b, s)
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise TransportError("bias must be positive and finite")
        return h_balanced_matrix(s, vals)

    return TransportFunction(f"h_balanced[{getattr(b, '__name__', 'b')}]", fn)


G_POSITIVE = TransportFunction("g_positive", g_positive_matrix, metric_only=True)
H_BALANCED = TransportFunction("h_balanced", h_balanced_matrix, metric_only=True)


def _h_uniform(space):
    return np.full((space.n, space.n), 1.0 / space.total_mass)


def _h_column_normalized(space):
    g = g_positive_matrix(space)
    return g / (g.T @ space.mu)[None, :]


# two further kernels with unit incoming mass, structurally unlike h_balanced
H_UNIFORM = TransportFunction("h_uniform", _h_uniform, metric_only=True)
H_COLUMN = TransportFunction("h_column", _h_column_normalized, metric_only=True)

H_KERNELS = {"h_balanced": H_BALANCED, "h_uniform": H_UNIFORM, "h_column": H_COLUMN}


def out_in_vectors(space: FiniteRmmSpace, g) -> tuple[np.ndarray, np.ndarray]:
    m = as_transport(g).matrix(space)
    return m @ space.mu, m.T @ space.mu


def kernel_defects(space: FiniteRmmSpace, h) -> tuple[float, float]:
    """Largest deviation of ``h+`` and ``h-`` from 1 over all points."""
    plus, minus = out_in_vectors(space, h)
    return float(np.max(np.abs(plus - 1))), float(np.max(np.abs(minus - 1)))


def require_unit_incoming(space: FiniteRmmSpace, h, tol: float = MATRIX_TOL) -> np.ndarray:
    m = as_transport(h).matrix(space)
    minus = m.T @ space.mu
    if np.max(np.abs(minus - 1.0)) > tol:
        raise TransportError(f"{as_transport(h).name}: incoming mass is not 1 at every point")
    return m


# builtin battery

def _degrees(s):
    return s.degrees(1.0)


def _ecc(s):
    return s.dist.max(axis=1)


def _decoration_or_fail(s, name):
    if name == "mu":
        return s.mu
    if name not in s.decorations:
        raise TransportError(f"space has no decoration {name!r}")
    return s.decorations[name].as_measure()


def _nearest(s):
    d = s.dist.copy()
    np.fill_diagonal(d, np.inf)
    if s.n == 1:
        return np.ones((1, 1))
    m = np.isclose(d, d.min(axis=1, keepdims=True), atol=MATRIX_TOL, rtol=0).astype(float)
    return m / m.sum(axis=1, keepdims=True)


def _q(x, grid=1e-9):
    return np.rint(np.asarray(x, dtype=np.float64) / grid).astype(np.int64)


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays."""
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def _random_invariant(seed: int):
    """Seeded pseudo-random transport function keyed on invariant pair profiles.

    Each point gets a hashed profile (sorted distance row, mass and decoration
    values); a pair value mixes the two profiles with their distance.
    """

    def fn(s):
        dq = _q(s.dist)
        extra = [_q(s.mu)] + [_q(d.as_measure()) for d in s.decorations.values()
                              if d.kind != "trajectory"]
        salt = struct.pack("<Q", seed)
        prof = np.empty(s.n, dtype=np.uint64)
        for i in range(s.n):
            blob = np.sort(dq[i]).tobytes() + b"".join(e[i:i + 1].tobytes() for e in extra)
            prof[i] = int.from_bytes(hashlib.blake2b(salt + blob, digest_size=8).digest(), "little")
        with np.errstate(over="ignore"):
            x = _mix64(prof[:, None] ^ _mix64(dq.astype(np.uint64)))
            x = _mix64(x ^ (prof[None, :] * np.uint64(0xD6E8FEB86659FD93)))
        return (x >> np.uint64(11)).astype(np.float64) / 2.0**53

    return fn


def _parse(spec: str) -> tuple[str, dict[str, str]]:
    name, _, rest = spec.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            k, _, v = item.partition("=")
            if not _:
                params["arg"] = k
            else:
                params[k.strip()] = v.strip()
    return name.strip(), params


def builtin(spec: str) -> TransportFunction:
    """Builtin transport function by name, e.g. ``"ball_indicator:r=2"``."""
    name, p = _parse(spec)
    r = float(p.get("r", 1))
    beta = float(p.get("beta", 1))
    tol = MATRIX_TOL
    if name == "zero":
        fn = lambda s: np.zeros((s.n, s.n))
    elif name == "const":
        c = float(p.get("c", 1))
        fn = lambda s: np.full((s.n, s.n), c)
    elif name == "ball_indicator":
        fn = lambda s: (s.dist <= r + tol).astype(float)
    elif name == "sphere_indicator":
        fn = lambda s: (np.abs(s.dist - r) <= tol).astype(float)
    elif name == "exp_decay":
        fn = lambda s: np.exp(-beta * s.dist)
    elif name == "inverse_distance":
        fn = lambda s: 1.0 / (1.0 + s.dist)
    elif name == "degree_out":
        fn = lambda s: _degrees(s)[:, None] * (np.abs(s.dist - 1) <= tol)
    elif name == "degree_in":
        fn = lambda s: _degrees(s)[None, :] * (s.dist <= 1 + tol)
    elif name == "degree_gradient":
        fn = lambda s: (_degrees(s)[:, None] > _degrees(s)[None, :]) * (np.abs(s.dist - 1) <= tol).astype(float)
    elif name == "mass_out":
        fn = lambda s: s.mu[:, None] * np.exp(-s.dist)
    elif name == "mass_in":
        fn = lambda s: s.mu[None, :] ** 2 / (1.0 + s.dist)
    elif name == "nearest":
        fn = _nearest
    elif name == "farthest":
        fn = lambda s: (np.abs(s.dist - _ecc(s)[:, None]) <= tol).astype(float)
    elif name == "ecc_ratio":
        fn = lambda s: _ecc(s)[:, None] / (1.0 + _ecc(s)[None, :])
    elif name == "closeness":
        fn = lambda s: (s.dist @ s.mu)[None, :] * (s.dist <= 2 + tol)
    elif name == "two_step":
        fn = lambda s: ((s.dist <= 1 + tol).astype(float) @ (s.dist <= 1 + tol).astype(float))
    elif name == "to_decoration":
        dec = p.get("arg", p.get("name", "phi"))
        fn = lambda s: _decoration_or_fail(s, dec)[None, :] * np.exp(-s.dist)
        return TransportFunction(spec, fn, deps=(dec,))
    elif name == "from_decoration":
        dec = p.get("arg", p.get("name", "phi"))
        fn = lambda s: _decoration_or_fail(s, dec)[:, None] * (s.dist <= r + tol)
        return TransportFunction(spec, fn, deps=(dec,))
    elif name == "random":
        fn = _random_invariant(int(p.get("seed", p.get("arg", 0))))
    elif name in ("g_positive", "h_balanced", "h_uniform", "h_column"):
        return {"g_positive": G_POSITIVE, **H_KERNELS}[name]
    else:
        raise KeyError(f"unknown transport function {spec!r}")
    return TransportFunction(spec, fn, metric_only=name != "random")


def battery(n_random: int = 5, decorations: Sequence[str] = ()) -> list[TransportFunction]:
    """The standard collection of builtin transport functions."""
    names = [
        "zero", "const", "ball_indicator:r=1", "ball_indicator:r=2", "sphere_indicator:r=1",
        "sphere_indicator:r=2", "exp_decay:beta=1", "exp_decay:beta=0.3", "inverse_distance",
        "degree_out", "degree_in", "degree_gradient", "mass_out", "mass_in", "nearest",
        "farthest", "ecc_ratio", "closeness", "two_step", "g_positive", "h_balanced",
    ]
    names += [f"random:seed={k}" for k in range(n_random)]
    for d in decorations:
        names += [f"to_decoration:{d}", f"from_decoration:{d}"]
    return [builtin(x) for x in names]


# factor subsets

@dataclass
class FactorSubsetReport:
    p_root_in_s: float
    p_mass_positive: float
    p_full_measure: float
    p_root_in_complement: float
    biconditional: bool
    full_measure_equivalence: bool

    @property
    def passed(self) -> bool:
        return self.biconditional and self.full_measure_equivalence

    def to_dict(self):
        return {**self.__dict__, "passed": self.passed}


def factor_subset_check(e: RootedEnsemble, predicate: Callable[[FiniteRmmSpace], bool],
                        tol: float = 1e-12) -> FactorSubsetReport:
    """Root is in S with positive probability iff S has positive mass with positive probability.

    Also checks the full-measure form: S has full mass a.s. iff the root is in S a.s.
    """
    root_in, mass_pos, full, comp = [], [], [], []
    for w, s in e.atoms:
        if not s.total_mass > 0:
            raise ValueError("factor subset check needs nonzero measures on every atom")
        member = root_values(lambda t: float(bool(predicate(t))), s) > 0
        root_in.append(w * member[s.root])
        comp.append(w * (not member[s.root]))
        mass_pos.append(w * (s.mu[member].sum() > 0))
        full.append(w * (s.mu[~member].sum() == 0))
    a, b, c, d = (math.fsum(x) for x in (root_in, mass_pos, full, comp))
    bic = (a > tol) == (b > tol)
    fm = (abs(c - 1) <= tol) == (d <= tol)
    return FactorSubsetReport(a, b, c, d, bic, fm)
