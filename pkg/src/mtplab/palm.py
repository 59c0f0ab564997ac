"""Intensities and Palm laws of decorations, with the identities they satisfy.

Everything here is exact: ensembles are finite, so expectations are finite
sums and the Palm law is again a finite ensemble.  The construction biases
by ``h+_phi(o) = sum_z h(o, z) phi(z)`` and re-roots at ``z`` with probability
proportional to ``h(o, z) phi(z)``; it requires ``h- = 1`` on every atom,
which is checked rather than assumed.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .ensembles import RootedEnsemble, class_weight_gap, condition, merge, normalized
from .reports import MtpReport
from .space import MATRIX_TOL, Decoration, FiniteRmmSpace, swap_measure
from .transport import H_BALANCED, as_transport, require_unit_incoming


class PalmUndefined(ValueError):
    """The decoration has zero (or infinite) intensity."""


@dataclass
class PalmResult:
    intensity: float
    palm: RootedEnsemble
    h_used: str

    def to_dict(self):
        return {"intensity": self.intensity, "h_used": self.h_used, "palm": self.palm.to_list()}


def _phi(space: FiniteRmmSpace, phi: str) -> np.ndarray:
    return space.decoration(phi)


def _h(h):
    return as_transport(h if h is not None else H_BALANCED)


def intensity(e: RootedEnsemble, phi: str, h=None) -> float:
    """``E[sum_z h(o, z) phi(z)]``."""
    h = _h(h)
    terms = []
    for w, s in e.atoms:
        m = require_unit_incoming(s, h)
        terms.append(w * float(m[s.root] @ _phi(s, phi)))
    return math.fsum(terms)


# the checks below rebuild the same Palm law many times; remember the last few
_RECENT: OrderedDict = OrderedDict()
_RECENT_SIZE = 8


def palm_ensemble_exact(e: RootedEnsemble, phi: str, h=None, merge_atoms: bool = True) -> PalmResult:
    h = _h(h)
    key = (id(e), phi, id(h), merge_atoms)
    hit = _RECENT.get(key)
    if hit is not None and hit[0] is e:
        _RECENT.move_to_end(key)
        return hit[1]
    res = _palm_ensemble(e, phi, h, merge_atoms)
    _RECENT[key] = (e, res)
    if len(_RECENT) > _RECENT_SIZE:
        _RECENT.popitem(last=False)
    return res


def _palm_ensemble(e: RootedEnsemble, phi: str, h, merge_atoms: bool) -> PalmResult:
    pairs = []
    for w, s in e.atoms:
        m = require_unit_incoming(s, h)
        weights = m[s.root] * _phi(s, phi)
        for z in np.flatnonzero(weights > 0):
            pairs.append((w * weights[z], s.with_root(int(z))))
    lam = math.fsum(p[0] for p in pairs)
    if not lam > 0:
        raise PalmUndefined(f"decoration {phi!r} has zero intensity; the Palm law is undefined")
    if not math.isfinite(lam):
        raise PalmUndefined(f"decoration {phi!r} has non-finite intensity")
    palm = merge(pairs) if merge_atoms else normalized(pairs)
    return PalmResult(lam, palm, h.name)


def _pooled(e: RootedEnsemble) -> list:
    """``[(space, weight per root)]``: atoms sharing a labeled space differ only in the root."""
    key = (id(e), "pooled")
    hit = _RECENT.get(key)
    if hit is not None and hit[0] is e:
        return hit[1]
    pooled: dict[bytes, list] = {}
    for w, s in e.atoms:
        entry = pooled.get(s.key)
        if entry is None:
            entry = pooled[s.key] = [s, np.zeros(s.n)]
        entry[1][s.root] += w
    out = list(pooled.values())
    _RECENT[key] = (e, out)
    if len(_RECENT) > _RECENT_SIZE:
        _RECENT.popitem(last=False)
    return out


def _root_integral(e: RootedEnsemble, g, against: str, incoming: bool = False) -> float:
    """``E[sum_y g(o, y) nu(y)]`` (or ``g(y, o)`` when ``incoming``) with ``nu = against``."""
    terms = []
    for s, weights in _pooled(e):
        m = g.matrix(s)
        terms.append(float(weights @ ((m.T if incoming else m) @ _phi(s, against))))
    return math.fsum(terms)


def campbell_check(e: RootedEnsemble, phi: str, g, h=None, tol: float = MATRIX_TOL) -> MtpReport:
    """``E[sum_y g(o, y) phi(y)] = lambda * E_palm[sum_y g(y, o) mu(y)]``."""
    g = as_transport(g)
    res = palm_ensemble_exact(e, phi, h, merge_atoms=False)
    lhs = _root_integral(e, g, phi)
    rhs = res.intensity * _root_integral(res.palm, g, "mu", incoming=True)
    return MtpReport.exact(lhs, rhs, tol, f"campbell[{phi},{g.name}]", intensity=res.intensity)


def exchange_check(e: RootedEnsemble, phi: str, psi: str, g, h=None, tol: float = MATRIX_TOL) -> MtpReport:
    """``lambda_phi E_phi[sum g(o, y) psi(y)] = lambda_psi E_psi[sum g(y, o) phi(y)]``."""
    g = as_transport(g)
    a = palm_ensemble_exact(e, phi, h, merge_atoms=False)
    b = palm_ensemble_exact(e, psi, h, merge_atoms=False)
    lhs = a.intensity * _root_integral(a.palm, g, psi)
    rhs = b.intensity * _root_integral(b.palm, g, phi, incoming=True)
    return MtpReport.exact(lhs, rhs, tol, f"exchange[{phi},{psi},{g.name}]")


def palm_mtp_sums(e: RootedEnsemble, phi: str, g) -> tuple[float, float]:
    g = as_transport(g)
    return _root_integral(e, g, phi), _root_integral(e, g, phi, incoming=True)


def palm_mtp_check(e: RootedEnsemble, phi: str, g, h=None, tol: float = MATRIX_TOL) -> MtpReport:
    """Under the Palm law of ``phi`` the MTP holds with integrals against ``phi``."""
    g = as_transport(g)
    res = palm_ensemble_exact(e, phi, h, merge_atoms=False)
    lhs, rhs = palm_mtp_sums(res.palm, phi, g)
    return MtpReport.exact(lhs, rhs, tol, f"palm-mtp[{phi},{g.name}]")


def _swap(s: FiniteRmmSpace, phi: str, kind: str = "measure") -> FiniteRmmSpace:
    if phi == "mu":
        return s
    out = swap_measure(s, phi)
    if kind != "measure":
        out = out.with_decoration(phi, Decoration(kind, out.decorations[phi].values))
    return out


def palm_inversion_check(e: RootedEnsemble, phi: str, h=None, tol: float = MATRIX_TOL) -> MtpReport:
    """Round trip: Palm of ``phi``, then the Palm of ``mu`` seen from ``phi``.

    After exchanging the roles of ``mu`` and ``phi`` on the Palm law, the Palm
    of the old base measure is taken and the roles are exchanged back.  The
    result must be the original law conditioned on ``phi != 0``, and the two
    intensities multiply to ``P(phi != 0)`` (which is 1 when ``phi`` never
    vanishes).  The report compares canonical-class weights; ``lhs`` is the
    intensity product and ``rhs`` that probability.
    """
    kind = "measure" if phi == "mu" else e.atoms[0][1].decorations[phi].kind
    first = palm_ensemble_exact(e, phi, h)
    swapped = first.palm.map(lambda s: _swap(s, phi))
    for w, s in swapped.atoms:
        if w > 0 and not s.total_mass > 0:
            raise ValueError("role swap invalid: phi vanishes on an atom of the Palm law")
    second = palm_ensemble_exact(swapped, phi, h)
    back = second.palm.map(lambda s: _swap(s, phi, kind))
    p_nonzero = math.fsum(w for w, s in e.atoms if np.any(_phi(s, phi) > 0))
    target = condition(e, lambda s: bool(np.any(_phi(s, phi) > 0)))
    gap = class_weight_gap(back, target)
    prod = first.intensity * second.intensity
    rep = MtpReport.exact(prod, p_nonzero, tol, f"palm-inversion[{phi}]",
                          class_weight_gap=gap, intensity=first.intensity,
                          inverse_intensity=second.intensity)
    rep.passed = rep.passed and gap <= tol
    return rep
