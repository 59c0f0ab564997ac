"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines are printed
even without ``-s``) or as a script with ``python3 tests/test_acceptance.py``.
"""

import json
import math
import time

import numpy as np
import pytest

from mtplab import balancing as bl
from mtplab import ensembles as en
from mtplab import ghp
from mtplab import palm
from mtplab import point_processes as pp
from mtplab import space as sp
from mtplab import transport as tr
from mtplab import walks
from mtplab.cli import check_seed
from mtplab.ensembles import (class_uniform_rooting, degree_biased, quasi_transitive_unimodularization,
                              reroot_by_kernel, single, uniform_rooting)
from mtplab.space import Decoration

from oracles import random_metric_space

MASTER_SEED = 20_260_101
TOL = 1e-9
_FIRST_RUN = {}


def seed_for(name, index=0):
    return check_seed(MASTER_SEED, name, index)


def announce(capsys, number, title, passed, detail, elapsed, limit=None):
    budget = f" (limit {limit:g}s)" if limit else ""
    line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'} {title}: {detail}; {elapsed:.2f}s{budget}"
    with capsys.disabled():
        print("\n" + line)
    return line


def zoo_ensembles():
    return en.zoo_ensembles(12)


def battery():
    return tr.battery(n_random=5)


# 1 ---------------------------------------------------------------------------

def test_criterion_01_exact_mtp_suite(capsys):
    t0 = time.perf_counter()
    gs = battery()
    worst, count = 0.0, 0
    failures = []
    for name, e in zoo_ensembles().items():
        for g in gs:
            rep = tr.mtp_check_exact(e, g, TOL)
            worst = max(worst, rep.abs_diff)
            count += 1
            if not rep.passed:
                failures.append(f"{name}:{g.name}")
    elapsed = time.perf_counter() - t0
    ok = not failures and len(gs) >= 20 and elapsed < 10
    announce(capsys, 1, "exact MTP over zoo x battery",
             ok, f"{count} checks, {len(gs)} functions, max |lhs-rhs|={worst:.2e}", elapsed, 10)
    assert not failures, failures
    assert len(gs) >= 20
    assert elapsed < 10


# 2 ---------------------------------------------------------------------------

def center_to_leaf(s, u, v):
    return float(s.degrees()[u] > 1 and s.degrees()[v] == 1 and s.dist[u, v] == 1)


def negative_controls():
    return {
        "star3 class-uniform": class_uniform_rooting(sp.star(3)),
        "P3 class-uniform": class_uniform_rooting(sp.path(3)),
        "star5 rooted at center": single(sp.star(5)),
        "P4 rooted at an end": single(sp.path(4)),
    }


def test_criterion_02_negative_controls(capsys):
    t0 = time.perf_counter()
    gs = battery() + [tr.as_transport(center_to_leaf)]
    gaps = {}
    for name, e in negative_controls().items():
        gaps[name] = max(tr.mtp_check_exact(e, g, TOL).abs_diff for g in gs)
    star = tr.mtp_check_exact(class_uniform_rooting(sp.star(3)), center_to_leaf, TOL)
    elapsed = time.perf_counter() - t0
    failing = [k for k, v in gaps.items() if v >= 0.1]
    ok = len(failing) >= 3 and abs(star.lhs - 1.5) < 1e-12 and abs(star.rhs - 0.5) < 1e-12
    detail = ", ".join(f"{k} gap={v:.3g}" for k, v in gaps.items())
    announce(capsys, 2, "non-unimodular laws fail", ok,
             f"{detail}; star lhs={star.lhs:g} rhs={star.rhs:g}", elapsed)
    assert ok


# 3 ---------------------------------------------------------------------------

def test_criterion_03_balancing_kernel(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed_for("balancing_kernel"))
    worst = 0.0
    sym = pos = True
    for i in range(100):
        s = random_metric_space(rng, int(rng.integers(1, 11)), integer=bool(i % 2))
        h = tr.h_balanced_matrix(s)
        sym &= bool(np.array_equal(h, h.T))
        pos &= bool(h.min() > 0)
        worst = max(worst, float(np.abs(h @ s.mu - 1).max()), float(np.abs(h.T @ s.mu - 1).max()))
    elapsed = time.perf_counter() - t0
    ok = sym and pos and worst <= TOL and elapsed < 5
    announce(capsys, 3, "balanced kernel invariants", ok,
             f"100 spaces, symmetric={sym}, positive={pos}, max |h+-1|,|h--1|={worst:.2e}", elapsed, 5)
    assert ok


# 4 ---------------------------------------------------------------------------

def test_criterion_04_rerooting_invariance(capsys):
    t0 = time.perf_counter()
    worst_h = worst_deg = 0.0
    for name, e in zoo_ensembles().items():
        worst_h = max(worst_h, en.class_weight_gap(reroot_by_kernel(e, walks.kernel_from_transport), e))
        if name.startswith("point"):
            continue
        biased = degree_biased(e)
        moved = reroot_by_kernel(biased, walks.simple_random_walk_kernel)
        worst_deg = max(worst_deg, en.class_weight_gap(moved, biased))
    elapsed = time.perf_counter() - t0
    ok = worst_h <= TOL and worst_deg <= TOL
    announce(capsys, 4, "re-rooting invariance", ok,
             f"balanced-h max gap={worst_h:.2e}, deg-biased SRW max gap={worst_deg:.2e}", elapsed)
    assert ok


# 5 ---------------------------------------------------------------------------

PALM_G = ["const", "exp_decay:beta=1", "degree_gradient", "random:seed=0", "from_decoration:phi",
          "to_decoration:psi"]


_PALM_FUNCTIONS = {}


def palm_functions(psi):
    """Builtin functions built once so their matrix caches are shared across cases."""
    if psi not in _PALM_FUNCTIONS:
        _PALM_FUNCTIONS[psi] = [tr.as_transport(g.replace(":psi", f":{psi}")) for g in PALM_G]
    return _PALM_FUNCTIONS[psi]


def fixed_subsets(s):
    phi = np.zeros(s.n, dtype=bool)
    phi[: max(1, s.n // 2)] = True
    psi = np.zeros(s.n, dtype=bool)
    psi[::3] = True
    return phi, psi


def palm_cases():
    """(label, ensemble, psi) triples.

    Bernoulli(p) points ``phi`` on every zoo ensemble are exchanged against
    ``mu``; two fixed subsets ``phi`` and ``psi`` carried by the space are
    exchanged against each other.
    """
    zoo_e = zoo_ensembles()
    for p in (1 / 3, 1 / 2, 2 / 3):
        for name, e in zoo_e.items():
            yield f"{name}/bernoulli p={p:.3g}", pp.bernoulli_ensemble(e, p, "phi"), "mu"
    for name, s in en.zoo(12).items():
        phi, psi = fixed_subsets(s)
        decorated = s.with_decoration("phi", Decoration("subset", phi)).with_decoration(
            "psi", Decoration("subset", psi))
        yield f"{name}/uniform/subsets", uniform_rooting(decorated), "psi"
        yield f"{name}/qt/subsets", quasi_transitive_unimodularization(decorated), "psi"


def test_criterion_05_palm_suite(capsys):
    t0 = time.perf_counter()
    failures, worst, count, states = [], 0.0, 0, 0
    for label, e, psi in palm_cases():
        states = max(states, len(e.atoms))
        reps = []
        for g in palm_functions(psi):
            reps.append(palm.campbell_check(e, "phi", g, tol=TOL))
            reps.append(palm.exchange_check(e, "phi", psi, g, tol=TOL))
            reps.append(palm.palm_mtp_check(e, "phi", g, tol=TOL))
            if psi != "mu":
                reps.append(palm.campbell_check(e, psi, g, tol=TOL))
        reps.append(palm.palm_inversion_check(e, "phi", tol=TOL))
        if psi != "mu":
            reps.append(palm.palm_inversion_check(e, psi, tol=TOL))
        for r in reps:
            count += 1
            worst = max(worst, r.abs_diff)
            if not r.passed:
                failures.append(f"{label}:{r.label}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 60 and states <= 2**12
    announce(capsys, 5, "Palm identities by exact enumeration", ok,
             f"{count} checks, largest law has {states} atoms, max diff={worst:.2e}", elapsed, 60)
    assert not failures, failures[:10]
    assert elapsed < 60


# 6 ---------------------------------------------------------------------------

def test_criterion_06_palm_h_independence(capsys):
    t0 = time.perf_counter()
    worst_lam = worst_law = 0.0
    cases = 0
    for name, s in en.zoo(12).items():
        subset = np.zeros(s.n, dtype=bool)
        subset[::2] = True
        for e, phi in ((pp.bernoulli_ensemble(uniform_rooting(s), 0.5), "phi"),
                       (uniform_rooting(s.with_decoration("phi", Decoration("subset", subset))), "phi")):
            base = palm.palm_ensemble_exact(e, phi)
            for h in (tr.H_UNIFORM, tr.H_COLUMN):
                other = palm.palm_ensemble_exact(e, phi, h=h)
                worst_lam = max(worst_lam, abs(base.intensity - other.intensity))
                worst_law = max(worst_law, en.class_weight_gap(base.palm, other.palm))
                cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst_lam <= TOL and worst_law <= TOL
    announce(capsys, 6, "Palm law independent of h", ok,
             f"{cases} comparisons, max intensity diff={worst_lam:.2e}, max class-weight gap={worst_law:.2e}",
             elapsed)
    assert ok


# 7 ---------------------------------------------------------------------------

def poisson_reports():
    out = {}
    for name, s in (("C5", sp.cycle(5)), ("torus3x3", sp.torus_grid(3, 3))):
        e = uniform_rooting(s)
        for i, c in enumerate((0.5, 1.0, 2.0)):
            reps = pp.palm_of_poisson_check(e, c, trials=100_000, seed=seed_for(f"poisson:{name}", i))
            out[f"{name}/c={c:g}"] = [r.to_dict() for r in reps]
    return out


def test_criterion_07_palm_of_poisson(capsys):
    t0 = time.perf_counter()
    out = poisson_reports()
    _FIRST_RUN[7] = json.dumps(out, sort_keys=True)
    elapsed = time.perf_counter() - t0
    failures = [f"{k}:{r['label']}" for k, reps in out.items() for r in reps if not r["passed"]]
    ref_fail = []
    for key, reps in out.items():
        c = float(key.split("=")[1])
        count = reps[0]
        if abs(count["rhs"] - (c + 1)) > 4 * count["se_rhs"]:
            ref_fail.append(key)
    worst_z = max(abs(r["lhs"] - r["rhs"]) / r["se_diff"] for reps in out.values() for r in reps if r["se_diff"])
    ok = not failures and not ref_fail and elapsed < 60
    announce(capsys, 7, "Palm of Poisson = Poisson plus root atom", ok,
             f"{sum(map(len, out.values()))} comparisons at 1e5 trials, max |z|={worst_z:.2f}", elapsed, 60)
    assert not failures and not ref_fail, (failures, ref_fail)
    assert elapsed < 60


# 8 ---------------------------------------------------------------------------

WALK_SPACES = {"C4": sp.cycle(4), "star3": sp.star(3), "P4": sp.path(4), "petersen": sp.petersen()}


def walk_reports():
    out = {}
    for i, (name, s) in enumerate(WALK_SPACES.items()):
        trace = walks.simulate_walk(s, walks.kernel_from_transport(s), 100_000, seed_for("walk", i))
        out[name] = [r.to_dict() for r in walks.occupation_reports(trace)]
    s = sp.star(3)
    trace = walks.simulate_walk(s, walks.kernel_from_transport(s), 100_000, seed_for("ergodic"), two_sided=True)
    out["star3/ergodic-deg"] = [walks.ergodic_average_report(trace, lambda t: t.degrees()[t.root], 1.5).to_dict()]
    return out


def test_criterion_08_random_walks(capsys):
    t0 = time.perf_counter()
    rev_fail = []
    for name, e in zoo_ensembles().items():
        for F in battery():
            if not walks.reversibility_check(e, F=F).passed:
                rev_fail.append(f"{name}:{F.name}")
    out = walk_reports()
    _FIRST_RUN[8] = json.dumps(out, sort_keys=True)
    elapsed = time.perf_counter() - t0
    mc_fail = [f"{k}:{r['label']}" for k, reps in out.items() for r in reps if not r["passed"]]
    erg = out["star3/ergodic-deg"][0]
    ok = not rev_fail and not mc_fail
    announce(capsys, 8, "walk reversibility, occupation, ergodic average", ok,
             f"reversibility failures={len(rev_fail)}, occupation/ergodic failures={len(mc_fail)}, "
             f"star deg average={erg['estimate']:.4f} (se {erg['se']:.4f}) vs 1.5", elapsed)
    assert ok, (rev_fail, mc_fail)


# 9 ---------------------------------------------------------------------------

def test_criterion_09_stable_transport(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed_for("stable"))
    worst, blocking = 0.0, 0
    for i in range(50):
        n = int(rng.integers(2, 65))
        s = random_metric_space(rng, n, integer=bool(i % 2))
        phi = rng.uniform(0, 1, n) * (rng.random(n) < 0.6)
        psi = rng.uniform(0, 1, n) * (rng.random(n) < 0.6)
        phi[0] += 0.5
        psi[-1] += 0.5
        psi *= phi.sum() / psi.sum()
        td = bl.stable_transport(s, phi, psi, mark_seed=i)
        rep = bl.verify_balancing(td)
        worst = max(worst, rep.row_residual, rep.col_residual)
        blocking += len(bl.blocking_pairs(td).blocking_pairs)
    try:
        bl.stable_transport(sp.cycle(4), [1, 1, 0, 0], [0, 0, 0, 1])
        refused = False
    except bl.BalancingError:
        refused = True
    elapsed = time.perf_counter() - t0
    ok = worst <= TOL and blocking == 0 and refused and elapsed < 30
    announce(capsys, 9, "stable balancing transport", ok,
             f"50 instances, max residual={worst:.2e}, blocking pairs={blocking}, refuses unequal totals={refused}",
             elapsed, 30)
    assert ok


# 10 --------------------------------------------------------------------------

def extra_head_reports():
    reps = bl.extra_head_demo(sp.torus_grid(4, 4), 0.5, 100_000, seed_for("extra_head"), target=8)
    return [r.to_dict() for r in reps]


def test_criterion_10_extra_head(capsys):
    t0 = time.perf_counter()
    reps = extra_head_reports()
    _FIRST_RUN[10] = json.dumps(reps, sort_keys=True)
    elapsed = time.perf_counter() - t0
    ind = reps[0]
    exact_one = ind["lhs"] == 1.0 and ind["extra"]["minimum"] == 1.0 and ind["rhs"] == 1.0
    ok = all(r["passed"] for r in reps) and exact_one
    detail = ", ".join(f"{r['label']} {r['lhs']:.4f} vs {r['rhs']:.4f}" for r in reps)
    announce(capsys, 10, "extra head scheme on 4x4 torus", ok, detail, elapsed)
    assert ok


# 11 --------------------------------------------------------------------------

def test_criterion_11_ghp(capsys):
    t0 = time.perf_counter()
    self_zero = all(ghp.ghp_upper(s, s).value == 0.0 for s in (sp.cycle(6), sp.star(4), sp.petersen()))
    gap = ghp.ghp_upper(sp.point(1.0), sp.point(2.0)).value
    table = ghp.scaling_cauchy_demo("path", (4, 8, 16, 32))
    last = table["rows"][-1]["distance"]
    rng = np.random.default_rng(seed_for("ghp"))
    agree = 0
    for _ in range(20):
        a = random_metric_space(rng, int(rng.integers(1, 5)))
        b = random_metric_space(rng, int(rng.integers(1, 5)))
        if ghp.round_up(ghp.ghp_upper(a, b).value) == pytest.approx(ghp.ghp_bruteforce(a, b), abs=1e-12):
            agree += 1
    elapsed = time.perf_counter() - t0
    ok = (self_zero and abs(gap - 1.0) <= 1e-3 and table["strictly_decreasing"] and last <= 0.1
          and agree == 20 and elapsed < 30)
    dists = ", ".join(f"{r['distance']:.6g}" for r in table["rows"])
    announce(capsys, 11, "GHP surrogate demos", ok,
             f"self-distance zero={self_zero}, mass gap={gap:.4f}, path table [{dists}], "
             f"upper=brute on {agree}/20", elapsed, 30)
    assert ok


# 12 --------------------------------------------------------------------------

def test_criterion_12_determinism(capsys):
    t0 = time.perf_counter()
    first = {k: _FIRST_RUN.get(k) for k in (7, 8, 10)}
    runs = {7: poisson_reports, 8: walk_reports, 10: extra_head_reports}
    same = {}
    for k, fn in runs.items():
        if first[k] is None:
            first[k] = json.dumps(fn(), sort_keys=True)
        same[k] = json.dumps(fn(), sort_keys=True) == first[k]
    elapsed = time.perf_counter() - t0
    ok = all(same.values())
    announce(capsys, 12, "stochastic criteria reproduce byte-identically", ok,
             ", ".join(f"criterion {k}: {'identical' if v else 'DIFFERENT'}" for k, v in same.items()), elapsed)
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
