import numpy as np
import pytest
from hypothesis import given, strategies as st

from mtplab import ensembles as en
from mtplab import space as sp
from mtplab import transport as tr
from mtplab.ensembles import (ModelSpec, Sampler, class_uniform_rooting,
                              quasi_transitive_unimodularization, uniform_rooting)
from mtplab.point_processes import bernoulli
from mtplab.space import Decoration
from mtplab.transport import (H_BALANCED, H_COLUMN, H_UNIFORM, builtin, eval_out_in,
                              factor_subset_check, g_positive_matrix, h_balanced_matrix,
                              kernel_defects, mtp_check_exact, mtp_check_mc)

from oracles import g_positive_loops, mtp_sums, random_metric_space


def center_to_leaf(s, u, v):
    return float(u == 0 and v != 0)


def test_out_in_examples():
    s = sp.star(3)
    assert eval_out_in(s, center_to_leaf) == (3.0, 0.0)
    assert eval_out_in(s, "zero") == (0.0, 0.0)
    t = sp.path(4).with_root(1)
    out, inc = eval_out_in(t, "exp_decay:beta=1")
    assert out == pytest.approx(inc)


def test_star_mtp_example_and_control():
    rep = mtp_check_exact(quasi_transitive_unimodularization(sp.star(3)), center_to_leaf)
    assert rep.passed and rep.lhs == pytest.approx(0.75) and rep.rhs == pytest.approx(0.75)
    bad = mtp_check_exact(class_uniform_rooting(sp.star(3)), center_to_leaf)
    assert not bad.passed
    assert bad.lhs == pytest.approx(1.5) and bad.rhs == pytest.approx(0.5)


def test_mtp_sums_match_loop_oracle():
    rng = np.random.default_rng(5)
    for _ in range(10):
        s = random_metric_space(rng, 6)
        e = uniform_rooting(s, merge_atoms=False)
        for name in ("exp_decay:beta=1", "degree_gradient", "random:seed=2", "h_balanced"):
            g = builtin(name)
            rep = mtp_check_exact(e, g)
            lhs, rhs = mtp_sums(e.atoms, lambda t, u, v: g.matrix(t)[u, v])
            assert rep.lhs == pytest.approx(lhs, abs=1e-12)
            assert rep.rhs == pytest.approx(rhs, abs=1e-12)


def test_battery_size():
    assert len(tr.battery()) >= 20
    assert len(tr.battery(decorations=["phi"])) == len(tr.battery()) + 2


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin("teleport")


def test_missing_decoration_raises():
    with pytest.raises(tr.TransportError):
        builtin("to_decoration:phi").matrix(sp.cycle(3))


def test_g_positive_examples():
    np.testing.assert_allclose(g_positive_matrix(sp.point(4.0)), [[0.25]])
    g = g_positive_matrix(sp.path(2))
    np.testing.assert_allclose(g, 0.5)
    np.testing.assert_allclose(h_balanced_matrix(sp.path(2)), 0.5)
    np.testing.assert_allclose(h_balanced_matrix(sp.point(4.0)), [[0.25]])


def test_balanced_kernel_on_asymmetric_triangle():
    s = sp.FiniteRmmSpace([[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]], [1.0, 2.0, 0.5], 0)
    h = h_balanced_matrix(s)
    assert np.array_equal(h, h.T)
    np.testing.assert_allclose(h @ s.mu, 1.0, atol=1e-12)


@pytest.mark.parametrize("h", [H_BALANCED, H_UNIFORM, H_COLUMN])
def test_h_kernels_unit_incoming(h):
    for s in en.zoo().values():
        assert kernel_defects(s, h)[1] <= 1e-12


@given(st.integers(1, 9), st.integers(0, 2**32 - 1), st.booleans(), st.booleans())
def test_g_positive_matches_series(n, seed, integer, zero_mass):
    s = random_metric_space(np.random.default_rng(seed), n, integer, zero_mass)
    g = g_positive_matrix(s)
    np.testing.assert_allclose(g, g_positive_loops(s), atol=1e-12)
    assert g.min() > 0
    np.testing.assert_allclose(g @ s.mu, 1.0, atol=1e-12)


@given(st.integers(1, 10), st.integers(0, 2**32 - 1), st.booleans())
def test_h_balanced_invariants(n, seed, integer):
    s = random_metric_space(np.random.default_rng(seed), n, integer)
    h = h_balanced_matrix(s)
    assert np.array_equal(h, h.T)
    assert h.min() > 0
    np.testing.assert_allclose(h @ s.mu, 1.0, atol=1e-9)


@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_builtins_are_equivariant(n, seed):
    rng = np.random.default_rng(seed)
    s = random_metric_space(rng, n, integer=True)
    s = s.with_decoration("phi", Decoration("measure", rng.integers(0, 3, n).astype(float)))
    perm = rng.permutation(n)
    t = s.relabel(perm)
    for g in tr.battery(decorations=["phi"]):
        a = g.matrix(s)
        b = g.matrix(t)[np.ix_(perm, perm)]
        np.testing.assert_allclose(a, b, atol=1e-12, err_msg=g.name)


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_mtp_holds_for_uniform_rooting(n, seed):
    s = random_metric_space(np.random.default_rng(seed), n)
    e = uniform_rooting(s)
    for g in tr.battery(n_random=3):
        assert mtp_check_exact(e, g).passed, g.name


def test_mc_check_on_random_trees():
    spec = ModelSpec.from_dict({"model": "uniform_tree", "params": {"n": 6}})
    rep = mtp_check_mc(Sampler(spec), "exp_decay:beta=1", trials=300, seed=4)
    assert rep.passed and rep.se_diff < 1e-12


def test_mc_check_on_decorated_torus():
    spec = ModelSpec("torus_grid", {"rows": 5, "cols": 5}, recipes=[bernoulli(0.5).to_dict()])
    g = tr.TransportFunction("nbr_phi", lambda s: (s.dist == 1) * s.decoration("phi")[None, :])
    rep = mtp_check_mc(Sampler(spec), g, trials=2000, seed=11)
    assert rep.passed
    in_phi = lambda s: s.decoration("phi")[s.root]
    bad = mtp_check_mc(Sampler(spec), g, trials=2000, seed=11, lhs_weight=in_phi)
    assert not bad.passed


def test_mc_check_needs_trials():
    with pytest.raises(ValueError):
        mtp_check_mc(Sampler(ModelSpec("cycle", {"n": 3})), "const", trials=10, seed=0)


def test_factor_subset_examples():
    e = uniform_rooting(sp.star(3))
    always = factor_subset_check(e, lambda s: True)
    assert always.passed and always.p_root_in_s == pytest.approx(1) and always.p_mass_positive == pytest.approx(1)
    never = factor_subset_check(e, lambda s: False)
    assert never.passed and never.p_root_in_s == 0 and never.p_mass_positive == 0
    leaf = factor_subset_check(e, lambda s: s.degrees()[s.root] == 1)
    assert leaf.passed and leaf.p_root_in_s == pytest.approx(0.75) and leaf.p_mass_positive == pytest.approx(1)
