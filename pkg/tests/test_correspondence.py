import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E
from qlcrisk.correspondence import (
    IMPLICATIONS,
    PROPERTIES,
    Counterexample,
    PropertyResult,
    RiskFunctional,
    SamplerConfig,
    bridge_equivalences,
    check_property,
    classify,
    paper_counterexamples,
    replay_margin,
    to_monetary,
    to_return,
)
from qlcrisk.measures import avar_values, entropic_values, h0_values, pnorm_values
from qlcrisk.prob_core import ProbSpace, quantile_values
from qlcrisk.specs import MeasureSpec, builtin_specs, default_space

CFG = SamplerConfig(n_samples=300, seed=11)


def _mean(space):
    return RiskFunctional(lambda z: z @ space.p, space, "monetary", "mean")


def test_to_return_of_mean_is_geometric_mean(two_atoms):
    x = np.array([[1.0, np.exp(3.0)], [2.0, 5.0]])
    got = to_return(_mean(two_atoms)).values(x)
    np.testing.assert_allclose(got, h0_values(x, two_atoms.p), rtol=1e-14)


def test_var_is_a_fixed_point(two_atoms):
    space = ProbSpace.uniform(5)
    v = RiskFunctional(lambda z: quantile_values(z, space.p, 0.6), space, "monetary")
    x = np.exp(np.random.default_rng(0).normal(size=(50, 5)))
    np.testing.assert_allclose(to_return(v).values(x), quantile_values(x, space.p, 0.6), rtol=1e-14)


def test_pnorm_monetary_side_is_entropic():
    space = ProbSpace.uniform(4)
    rng = np.random.default_rng(1)
    z = rng.uniform(-3, 3, (100, 4))
    tr = RiskFunctional(lambda x: pnorm_values(x, space.p, 2.0), space, "return")
    np.testing.assert_allclose(to_monetary(tr).values(z), entropic_values(z, space.p, 2.0), rtol=1e-12, atol=1e-12)


def test_side_checks(two_atoms):
    with pytest.raises(ValueError):
        to_monetary(_mean(two_atoms))
    with pytest.raises(ValueError):
        RiskFunctional(lambda z: z, two_atoms, "other")


def test_property_result_invariant():
    with pytest.raises(ValueError):
        PropertyResult("x", False, 1, 1e-9, None)
    with pytest.raises(ValueError):
        PropertyResult("x", True, 1, 1e-9, Counterexample({}, 0.0, 0.0, 0.0))


def test_var_not_subadditive_but_ti_and_ph():
    space = ProbSpace.uniform(2)
    v = RiskFunctional(lambda z: quantile_values(z, space.p, 0.5), space, "monetary", "var")
    assert check_property(v, "translation_invariant", CFG).holds
    assert check_property(v, "positively_homogeneous", CFG).holds
    res = check_property(v, "subadditive", CFG)
    assert not res.holds
    # the stored counterexample replays to a violation above tolerance
    assert replay_margin(v, "subadditive", res) > res.tolerance


def test_avar_is_coherent():
    space = ProbSpace.uniform(4)
    av = RiskFunctional(lambda z: avar_values(z, space.p, 0.5), space, "monetary", "avar")
    tax = classify(av, CFG)
    assert tax["coherent"] and tax["convex"] and tax["quasi_convex"] and tax["star_shaped"]


def test_arar_classification():
    space, qs = default_space()
    ret = MeasureSpec("arar", {"alpha": 0.5}).functional(space, qs)
    tax = classify(ret, CFG)
    assert tax["return"] and tax["submultiplicative"] and not tax["translation_invariant"]


def test_logcoherent_is_qlc_not_qc():
    space = ProbSpace.uniform(2)
    g = RiskFunctional(lambda x: h0_values(x, space.p), space, "return", "h0")
    tax = classify(g, CFG)
    assert tax["quasi_logconvex"] and tax["logconvex"]
    assert not tax["quasi_convex"]


@pytest.mark.parametrize("spec", builtin_specs(), ids=lambda s: s.label)
def test_classification_is_closed_under_implications(spec):
    space, qs = default_space()
    tax = classify(spec.functional(space, qs), SamplerConfig(n_samples=200, seed=3))
    for prem, concl in IMPLICATIONS:
        assert not tax[prem] or tax[concl], (prem, concl)


def test_replay_of_every_failure():
    space, qs = default_space()
    f = MeasureSpec("dual", {"r": {"family": "floor", "C": 0.5}}).functional(space, qs)
    for prop in PROPERTIES:
        res = check_property(f, prop, CFG)
        if not res.holds:
            assert replay_margin(f, prop, res) > res.tolerance, prop


def test_constant_pair_bridges_agree():
    space = ProbSpace.uniform(3)
    zero = RiskFunctional(lambda z: 0.0 * z[..., 0], space, "monetary", "zero")
    assert bridge_equivalences(zero, to_return(zero), CFG).holds


def test_avar_arar_bridges_agree():
    space, qs = default_space()
    mon, ret = MeasureSpec("arar", {"alpha": 0.3}).pair(space, qs)
    rep = bridge_equivalences(mon, ret, CFG)
    assert rep.holds
    assert rep["translation_invariant<->positively_homogeneous"].detail["return"]


def test_counterexample_values():
    rep = paper_counterexamples()
    assert rep.holds
    d = rep["logcoherent_not_quasi_convex"].detail
    # frozen mpmath values
    assert d["lhs"] == pytest.approx(7.59088107794212451, abs=1e-9)
    assert d["rhs"] == pytest.approx(E**2, abs=1e-12)
    d = rep["mean_value_not_positively_homogeneous"].detail
    assert d["lhs"] == pytest.approx(3.18455446926336164, abs=1e-9)
    assert d["rhs"] == pytest.approx(E, abs=1e-12)
    d = rep["mean_value_not_quasi_convex"].detail
    assert d["lhs"] == pytest.approx(8.13058717370519553, abs=1e-9)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.sampled_from([s.label for s in builtin_specs()]))
def test_round_trip_is_identity(seed, label):
    space, qs = default_space()
    spec = next(s for s in builtin_specs() if s.label == label)
    mon, ret = spec.pair(space, qs)
    z = np.random.default_rng(seed).uniform(-3, 3, (20, space.n))
    np.testing.assert_allclose(to_monetary(to_return(mon)).values(z), mon.values(z), rtol=0, atol=1e-12)
    np.testing.assert_allclose(np.log(ret.values(np.exp(z))), mon.values(z), rtol=0, atol=1e-12)


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_star_shaped_equivalent_form(seed):
    space, qs = default_space()
    rng = np.random.default_rng(seed)
    for spec in builtin_specs():
        ret = spec.functional(space, qs)
        if not check_property(ret, "star_shaped", SamplerConfig(n_samples=100, seed=seed)).holds:
            continue
        x = np.exp(rng.uniform(-3, 3, (30, space.n)))
        lam = rng.uniform(0.01, 1.0, 30)
        lhs = ret.values(lam[:, None] * x)
        rhs = lam * ret.values(x)
        assert np.all(lhs <= rhs * (1 + 1e-9)), spec.label
