"""Random walks driven by equivariant kernels, and their diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ensembles import RootedEnsemble
from .reports import DEFAULT_Z, EstimateReport, MtpReport
from .space import MATRIX_TOL, Decoration, FiniteRmmSpace, root_values
from .transport import H_BALANCED, KernelMatrix, TransportError, as_transport


def kernel_from_transport(space: FiniteRmmSpace, h=None, b=None) -> KernelMatrix:
    """``k(u, v) = h(u, v) mu(v) / b(u)``; requires ``h+ = b`` (default 1)."""
    h = as_transport(h if h is not None else H_BALANCED)
    m = h.matrix(space)
    bvals = np.ones(space.n) if b is None else root_values(b, space)
    k = m * space.mu[None, :] / bvals[:, None]
    rows = k.sum(axis=1)
    if np.any(np.abs(rows - 1) > MATRIX_TOL):
        raise TransportError(f"{h.name}: outgoing mass does not match b; kernel is not Markovian")
    return KernelMatrix(space, k, "mu", f"walk[{h.name}]")


def identity_kernel(space: FiniteRmmSpace) -> KernelMatrix:
    return KernelMatrix(space, np.eye(space.n), "mu", "identity")


def neighbors(space: FiniteRmmSpace) -> np.ndarray:
    adj = np.abs(space.dist - 1.0) <= MATRIX_TOL
    return adj


def simple_random_walk_kernel(space: FiniteRmmSpace) -> KernelMatrix:
    """Uniform step to a point at distance 1 (stationary for the degree measure)."""
    adj = neighbors(space).astype(float)
    deg = adj.sum(axis=1)
    if np.any(deg == 0):
        raise TransportError("isolated point: simple random walk undefined")
    return KernelMatrix(space, adj / deg[:, None], "deg", "srw")


def lazy_nearest_neighbor_kernel(space: FiniteRmmSpace, hold: float = 0.5) -> KernelMatrix:
    adj = neighbors(space).astype(float)
    deg = adj.sum(axis=1)
    k = (1 - hold) * adj / np.where(deg > 0, deg, 1)[:, None]
    k[np.arange(space.n), np.arange(space.n)] += np.where(deg > 0, hold, 1.0)
    return KernelMatrix(space, k, "mu", f"lazy_nn[{hold:g}]")


@dataclass
class WalkTrace:
    space: FiniteRmmSpace
    trajectory: np.ndarray
    center: int
    kernel: str
    seed: int

    @property
    def steps(self) -> int:
        return len(self.trajectory) - 1 - self.center

    @property
    def forward(self) -> np.ndarray:
        return self.trajectory[self.center:]

    @property
    def two_sided(self) -> bool:
        return self.center > 0

    def as_space(self, name: str = "walk") -> FiniteRmmSpace:
        return self.space.with_decoration(name, Decoration("trajectory", self.trajectory))

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "trajectory": self.trajectory.tolist(),
                "center": self.center, "kernel": self.kernel, "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "WalkTrace":
        return cls(FiniteRmmSpace.from_dict(d["space"]), np.asarray(d["trajectory"], dtype=np.int64),
                   int(d["center"]), d["kernel"], int(d["seed"]))


def _cumulative(kernel: KernelMatrix) -> np.ndarray:
    cum = np.cumsum(kernel.matrix, axis=1)
    # make the last positive entry of each row (and everything after it) exactly 1
    for i in range(cum.shape[0]):
        last = np.flatnonzero(kernel.matrix[i] > 0)[-1]
        cum[i, last:] = 1.0
    return np.ascontiguousarray(cum)


def simulate_walk(space: FiniteRmmSpace, kernel: KernelMatrix, steps: int, seed: int,
                  two_sided: bool = False, start: int | None = None) -> WalkTrace:
    """Markov chain from the root; two-sided traces use two independent chains."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    cum = _cumulative(kernel)
    x0 = space.root if start is None else int(start)
    ss = np.random.SeedSequence(seed)
    fwd_seq, back_seq = ss.spawn(2)
    u = np.random.default_rng(fwd_seq).random(steps)
    fwd = _kernels.walk_path(cum, x0, u)
    if not two_sided:
        return WalkTrace(space, fwd, 0, kernel.name, seed)
    v = np.random.default_rng(back_seq).random(steps)
    back = _kernels.walk_path(cum, x0, v)
    traj = np.concatenate([back[:0:-1], fwd])
    return WalkTrace(space, traj, steps, kernel.name, seed)


def reversibility_check(e: RootedEnsemble, h=None, F=None, tol: float = MATRIX_TOL) -> MtpReport:
    """``E[F(o, x1)] = E[F(x1, o)]`` for one step of the walk driven by ``h``."""
    h = as_transport(h if h is not None else H_BALANCED)
    F = as_transport(F)
    fwd, rev = [], []
    for w, s in e.atoms:
        k = h.matrix(s)[s.root] * s.mu
        f = F.matrix(s)
        fwd.append(w * float(k @ f[s.root]))
        rev.append(w * float(k @ f[:, s.root]))
    return MtpReport.exact(math.fsum(fwd), math.fsum(rev), tol, f"reversibility[{h.name},{F.name}]")


def batch_means_se(x: np.ndarray, batches: int = 50) -> float:
    """Standard error of the mean of a correlated series by batch means."""
    x = np.asarray(x, dtype=np.float64)
    size = x.size // batches
    if size < 2:
        raise ValueError("series too short for batch means")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def time_average_se(x: np.ndarray, batches: int = 50) -> float:
    """Batch-means error, floored at the boundary error ``(max - min) / len``.

    A periodic chain can make every batch mean identical while the full
    average still carries an O(1/len) edge effect.
    """
    x = np.asarray(x, dtype=np.float64)
    return max(batch_means_se(x, batches), float(x.max() - x.min()) / x.size)


def speed_estimate(traces, reference: float | None = None, z: float = DEFAULT_Z) -> EstimateReport:
    """Average of ``d(o, x_n) / n`` over traces (forward halves)."""
    traces = list(traces)
    if not traces:
        raise ValueError("speed_estimate needs at least one trace")
    vals = []
    for t in traces:
        fwd = t.forward
        n = len(fwd) - 1
        vals.append(t.space.dist[fwd[0], fwd[-1]] / n if n > 0 else 0.0)
    vals = np.array(vals)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    seed = traces[0].seed
    return EstimateReport(float(vals.mean()), se, len(traces), seed, reference, z, "speed")


def lazy_cycle_distance_law(n: int, steps: int, hold: float = 0.5) -> np.ndarray:
    """Exact law of the graph distance after ``steps`` lazy steps on ``C_n``."""
    # the step law is circulant, so its powers diagonalize under the DFT
    step = np.zeros(n)
    step[0] = hold
    step[1 % n] += (1 - hold) / 2
    step[-1 % n] += (1 - hold) / 2
    lam = np.fft.fft(step)
    pos = np.real(np.fft.ifft(lam**steps))
    pos = np.clip(pos, 0, None)
    pos /= pos.sum()
    k = np.arange(n)
    d = np.minimum(k, n - k)
    law = np.zeros(n // 2 + 1)
    np.add.at(law, d, pos)
    return law


def ergodic_average(trace: WalkTrace, f) -> float:
    """``(1 / len) * sum f(x_i)`` over the stored (one- or two-sided) trajectory."""
    vals = root_values(f, trace.space)
    if not np.all(np.isfinite(vals)):
        raise ValueError("functional is not finite")
    return float(vals[trace.trajectory].mean())


def ergodic_average_report(trace: WalkTrace, f, reference: float, z: float = DEFAULT_Z,
                           batches: int = 50, label: str = "ergodic") -> EstimateReport:
    vals = root_values(f, trace.space)[trace.trajectory]
    return EstimateReport(float(vals.mean()), time_average_se(vals, batches), len(vals), trace.seed,
                          reference, z, label)


def occupation_reports(trace: WalkTrace, weights: np.ndarray | None = None, z: float = DEFAULT_Z,
                       batches: int = 50) -> list[EstimateReport]:
    """Visit frequency of every point against ``weights / sum(weights)`` (default mu)."""
    w = trace.space.mu if weights is None else np.asarray(weights, dtype=float)
    target = w / w.sum()
    out = []
    for x in range(trace.space.n):
        hits = (trace.trajectory == x).astype(float)
        out.append(EstimateReport(float(hits.mean()), time_average_se(hits, batches), hits.size,
                                  trace.seed, float(target[x]), z, f"occupation[{x}]"))
    return out
