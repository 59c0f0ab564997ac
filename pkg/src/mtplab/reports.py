"""Report records shared by the checking modules."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .space import MATRIX_TOL

DEFAULT_Z = 4.0


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, (np.floating,)):
        return _clean(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


@dataclass
class MtpReport:
    """Two-sided comparison with a verdict.

    Exact mode passes iff ``|lhs - rhs| <= tolerance``.  Monte-Carlo mode
    passes iff ``|lhs - rhs| <= z * se_diff``.
    """

    lhs: float
    rhs: float
    mode: str
    tolerance: float
    passed: bool
    label: str = ""
    se_lhs: float | None = None
    se_rhs: float | None = None
    se_diff: float | None = None
    z: float | None = None
    trials: int | None = None
    seed: int | None = None
    degenerate: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def abs_diff(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_diff(self) -> float:
        scale = max(abs(self.lhs), abs(self.rhs))
        return self.abs_diff / scale if scale > 0 else 0.0

    @classmethod
    def exact(cls, lhs: float, rhs: float, tol: float = MATRIX_TOL, label: str = "",
              **extra) -> "MtpReport":
        return cls(float(lhs), float(rhs), "exact", tol, abs(lhs - rhs) <= tol, label, extra=extra)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["abs_diff"] = self.abs_diff
        d["rel_diff"] = self.rel_diff
        return _clean(d)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        if self.mode == "exact":
            return f"{verdict} {self.label}: lhs={self.lhs:.12g} rhs={self.rhs:.12g} diff={self.abs_diff:.3g}"
        return (f"{verdict} {self.label}: lhs={self.lhs:.6g} rhs={self.rhs:.6g} "
                f"diff={self.abs_diff:.3g} se={self.se_diff:.3g} z={self.z:g}")


def mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return float(x.mean()), float("inf")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def mc_verdict(a: np.ndarray, b: np.ndarray, z: float = DEFAULT_Z, seed: int | None = None,
               paired: bool = True, label: str = "", **extra) -> MtpReport:
    """Compare the means of two samples at ``z`` standard errors."""
    ma, sa = mean_se(a)
    mb, sb = mean_se(b)
    if paired and len(a) == len(b):
        _, sd = mean_se(np.asarray(a) - np.asarray(b))
    else:
        sd = math.hypot(sa, sb)
    return compare_estimates(ma, sa, mb, sb, z, sd, seed=seed, trials=len(a), label=label, **extra)


def compare_estimates(ma: float, sa: float, mb: float, sb: float, z: float = DEFAULT_Z,
                      sd: float | None = None, seed: int | None = None, trials: int | None = None,
                      label: str = "", **extra) -> MtpReport:
    if sd is None:
        sd = math.hypot(sa, sb)
    degenerate = sd == 0.0
    if degenerate:
        ok = abs(ma - mb) <= 1e-12
    else:
        ok = abs(ma - mb) <= z * sd
    return MtpReport(ma, mb, "monte_carlo", z * sd, bool(ok), label, sa, sb, sd, z,
                     trials, seed, degenerate, extra=extra)


@dataclass
class EstimateReport:
    """Monte-Carlo estimate with its standard error and a verdict against a reference."""

    estimate: float
    se: float
    trials: int
    seed: int | None
    reference: float | None = None
    z: float = DEFAULT_Z
    label: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        if self.reference is None:
            return True
        if self.se == 0:
            return abs(self.estimate - self.reference) <= 1e-12
        return abs(self.estimate - self.reference) <= self.z * self.se

    @property
    def ci(self) -> tuple[float, float]:
        return self.estimate - self.z * self.se, self.estimate + self.z * self.se

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        d["ci"] = list(self.ci)
        return _clean(d)
