import numpy as np
import pytest

from qlcrisk.allocation import (
    AllocationResult,
    allocate,
    allocate_by_acceptance,
    builtin_acceptance_set,
    car_acceptance,
    car_proportional,
    car_subdifferential,
    optimal_scenario,
)
from qlcrisk.acceptance import default_levels
from qlcrisk.duality import DualMeasure, RFunctional
from qlcrisk.prob_core import PositivePosition
from qlcrisk.specs import default_space

SPACE, QS = default_space()
COH = DualMeasure(RFunctional.coherent(), QS)


def _units(seed, k=3):
    rng = np.random.default_rng(seed)
    return [PositivePosition(SPACE, np.exp(rng.uniform(-1, 1, 4))) for _ in range(k)]


def test_subdifferential_of_total_is_its_risk():
    units = _units(0)
    total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
    res = car_subdifferential(COH, [total], total)
    assert res.allocations[0] == pytest.approx(COH.values(total.values), rel=1e-14)


def test_coherent_proportional_identity():
    units = _units(1)
    total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
    sub = car_subdifferential(COH, units, total, "sum")
    prop = car_proportional(COH, units, total, "sum")
    np.testing.assert_allclose(prop.allocations, sub.allocations, rtol=1e-12)
    assert sub.total_value == pytest.approx(COH.values(total.values))


def test_composition_is_checked():
    units = _units(2)
    total = PositivePosition(SPACE, np.prod([u.values for u in units], axis=0))
    car_subdifferential(COH, units, total, "product")
    with pytest.raises(ValueError):
        car_subdifferential(COH, units, total, "sum")
    with pytest.raises(ValueError):
        car_subdifferential(COH, units, total, "mixture")
    with pytest.raises(ValueError):
        car_subdifferential(COH, [], total)


def test_acceptance_within_one_grid_step():
    units = _units(3)
    total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
    acc = allocate_by_acceptance(COH, units, total)
    sub = car_subdifferential(COH, units, total)
    ratio = np.exp(8.0 / 160)
    assert np.all(acc.allocations >= sub.allocations * (1 - 1e-12))
    assert np.all(acc.allocations <= sub.allocations * ratio * (1 + 1e-12))


def test_car_acceptance_infinite_when_nothing_accepts():
    member = builtin_acceptance_set(COH, _units(4)[0])
    huge = PositivePosition(SPACE, np.full(4, 1e3))
    assert car_acceptance(member, huge, default_levels()) == np.inf


def test_floor_proportional_uses_r_of_ratio():
    m = DualMeasure(RFunctional.floor(0.5), QS)
    units = _units(5)
    total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
    res = car_proportional(m, units, total)
    q = optimal_scenario(m, total)
    t = np.log(units[0].values / total.values) @ q.weights
    assert res.allocations[0] == pytest.approx(m.values(total.values) * np.exp(max(t, 0.5)), rel=1e-12)


def test_dispatch_and_serialisation():
    units = _units(6)
    total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
    for rule in ("subdifferential", "proportional", "acceptance"):
        d = allocate(rule, COH, units, total).to_dict()
        assert d["rule"] == rule and len(d["allocations"]) == 3
    with pytest.raises(ValueError):
        allocate("euler", COH, units, total)
    with pytest.raises(ValueError):
        AllocationResult(tuple(units), np.ones(2), QS[0], 0, "subdifferential", "none", 1.0)


def test_proportions_identities():
    units = _units(7)
    total = PositivePosition(SPACE, np.sum([u.values for u in units], axis=0))
    rho = COH.values(total.values)
    prop = car_proportional(COH, units + [total, PositivePosition(SPACE, 0.3 * total.values)], total)
    sub = car_subdifferential(COH, units, total)
    np.testing.assert_allclose(prop.proportions[:3], sub.allocations / rho, rtol=1e-12)
    assert prop.proportions[3] == pytest.approx(1.0, abs=1e-14)
    assert prop.proportions[4] == pytest.approx(0.3, rel=1e-14)
    np.testing.assert_allclose(prop.allocations, rho * prop.proportions, rtol=1e-15)
