import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtplab import ensembles as en
from mtplab import palm
from mtplab import point_processes as pp
from mtplab import space as sp
from mtplab.canon import canonical_hash
from mtplab.ensembles import quasi_transitive_unimodularization, single, uniform_rooting
from mtplab.space import Decoration
from mtplab.transport import H_COLUMN, H_UNIFORM, TransportError, builtin

from oracles import random_metric_space


def palm_oracle(e_unrooted_space, configs):
    """Palm class weights for a uniformly rooted fixed space carrying a random decoration.

    ``configs`` lists ``(probability, phi-vector)``.  The Palm law puts mass
    ``P(phi) phi(z)`` on the space rooted at ``z``, normalized.
    """
    out = {}
    for prob, vals in configs:
        s = e_unrooted_space.with_decoration("phi", Decoration("measure", vals))
        for z in range(s.n):
            if vals[z] > 0:
                key = canonical_hash(s.with_root(z))
                out[key] = out.get(key, 0.0) + prob * vals[z]
    total = sum(out.values())
    return {k: v / total for k, v in out.items()}


def _star_leaves(leaves=3):
    s = sp.star(leaves)
    vals = np.ones(leaves + 1)
    vals[0] = 0
    return s.with_decoration("phi", Decoration("measure", vals))


def test_intensity_examples():
    e = quasi_transitive_unimodularization(sp.star(3))
    assert palm.intensity(e, "mu") == pytest.approx(1.0)
    c3 = pp.bernoulli_ensemble(uniform_rooting(sp.cycle(3)), 0.5)
    assert palm.intensity(c3, "phi") == pytest.approx(0.5)


def test_intensity_of_biased_measure_is_mean_bias():
    e = uniform_rooting(sp.path(4))
    def deg_mu(s):
        return s.with_decoration("phi", Decoration("measure", s.degrees() * s.mu))
    eb = e.map(deg_mu)
    expected = en.exact_expectation(e, lambda s: s.degrees()[s.root])
    assert palm.intensity(eb, "phi") == pytest.approx(expected, abs=1e-12)
    # the Palm law is the law biased by deg(o)
    biased = en.bias_law(eb, lambda s: s.degrees()[s.root])
    assert en.class_weight_gap(palm.palm_ensemble_exact(eb, "phi").palm, biased) <= 1e-9


def test_palm_of_root_delta_is_original():
    s = sp.cycle(5)
    delta = np.zeros(5)
    delta[0] = 1
    e = single(s.with_decoration("phi", Decoration("measure", delta)))
    res = palm.palm_ensemble_exact(e, "phi")
    assert en.class_weight_gap(res.palm, e) <= 1e-9


def test_palm_of_leaves_is_leaf_rooted_star():
    e = uniform_rooting(_star_leaves())
    res = palm.palm_ensemble_exact(e, "phi")
    assert len(res.palm) == 1 and res.palm.atoms[0][1].root != 0
    assert res.intensity == pytest.approx(0.75)


def test_palm_of_base_measure_is_identity():
    for e in en.zoo_ensembles(10).values():
        res = palm.palm_ensemble_exact(e, "mu")
        assert res.intensity == pytest.approx(1.0)
        assert en.class_weight_gap(res.palm, e) <= 1e-9


def test_zero_intensity_raises():
    e = uniform_rooting(sp.cycle(3).with_decoration("phi", Decoration("measure", np.zeros(3))))
    with pytest.raises(palm.PalmUndefined):
        palm.palm_ensemble_exact(e, "phi")


def test_h_without_unit_incoming_rejected():
    e = pp.bernoulli_ensemble(uniform_rooting(sp.path(3)), 0.5)
    with pytest.raises(TransportError):
        palm.intensity(e, "phi", h=builtin("const"))


@pytest.mark.parametrize("name", ["C4", "P4", "star3", "C5"])
@pytest.mark.parametrize("p", [1 / 3, 0.5])
def test_palm_matches_oracle(name, p):
    s = en.zoo()[name]
    configs = list(pp.bernoulli_configurations(s, p))
    res = palm.palm_ensemble_exact(pp.bernoulli_ensemble(uniform_rooting(s), p), "phi")
    got = res.palm.class_weights()
    want = palm_oracle(s, configs)
    assert set(got) == set(want)
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


def test_campbell_examples():
    e = pp.bernoulli_ensemble(uniform_rooting(sp.cycle(4)), 0.5)
    assert palm.campbell_check(e, "phi", "zero").passed
    assert palm.campbell_check(e, "phi", "ball_indicator:r=1").passed
    assert palm.campbell_check(e, "phi", "from_decoration:phi").passed
    assert palm.campbell_check(e, "phi", "to_decoration:phi").passed


def test_exchange_examples():
    e = pp.independent_bernoulli_pair_ensemble(uniform_rooting(sp.cycle(3)), 1 / 3, 2 / 3)
    assert len(e) == 64
    for g in ("const", "exp_decay:beta=1", "degree_gradient", "random:seed=1"):
        assert palm.exchange_check(e, "phi", "psi", g).passed
    same = pp.bernoulli_ensemble(uniform_rooting(sp.cycle(4)), 0.5)
    assert palm.exchange_check(same, "phi", "phi", "exp_decay:beta=1").passed
    mu_case = palm.exchange_check(same, "mu", "phi", "ball_indicator:r=1")
    camp = palm.campbell_check(same, "phi", "ball_indicator:r=1")
    assert mu_case.lhs == pytest.approx(camp.lhs) and mu_case.passed


def test_inversion_examples():
    star = uniform_rooting(_star_leaves())
    rep = palm.palm_inversion_check(star, "phi")
    assert rep.passed and rep.lhs == pytest.approx(1.0)
    c4 = pp.fixed_subset_ensemble(sp.cycle(4), [0, 1])
    assert palm.palm_inversion_check(c4, "phi").passed
    assert palm.palm_inversion_check(star, "mu").passed


def test_inversion_with_vanishing_decoration():
    e = pp.bernoulli_ensemble(uniform_rooting(sp.cycle(4)), 0.5)
    rep = palm.palm_inversion_check(e, "phi")
    assert rep.passed
    assert rep.rhs == pytest.approx(1 - 0.5**4)


def test_palm_mtp_and_control():
    star = uniform_rooting(_star_leaves())
    g = "sphere_indicator:r=2"
    assert palm.palm_mtp_check(star, "phi", g).passed
    bad = palm.palm_mtp_sums(star, "phi", "degree_gradient")
    ok = palm.palm_mtp_check(star, "phi", "degree_gradient")
    assert ok.passed
    assert abs(bad[0] - bad[1]) > 0.1


@pytest.mark.parametrize("h", [H_UNIFORM, H_COLUMN])
def test_palm_independent_of_h(h):
    for name in ("C4", "P4", "star3"):
        e = pp.bernoulli_ensemble(uniform_rooting(en.zoo()[name]), 2 / 3)
        a = palm.palm_ensemble_exact(e, "phi")
        b = palm.palm_ensemble_exact(e, "phi", h=h)
        assert abs(a.intensity - b.intensity) <= 1e-9
        assert en.class_weight_gap(a.palm, b.palm) <= 1e-9


@given(st.integers(1, 5), st.integers(0, 2**32 - 1), st.sampled_from([1 / 3, 0.5, 2 / 3]))
def test_palm_identities_on_random_spaces(n, seed, p):
    s = random_metric_space(np.random.default_rng(seed), n)
    e = pp.bernoulli_ensemble(uniform_rooting(s), p)
    for g in ("exp_decay:beta=1", "random:seed=0", "from_decoration:phi"):
        assert palm.campbell_check(e, "phi", g).passed
        assert palm.palm_mtp_check(e, "phi", g).passed
    assert palm.palm_inversion_check(e, "phi").passed
