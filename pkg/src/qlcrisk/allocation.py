"""Capital allocation rules for return risk measures given in dual form.

All rules start from the optimal scenario Q_X of the total position X,
chosen by ``dual_argmax`` (lowest index on ties):

    subdifferential   exp(E_Q[log X_i])
    proportional      trho(X) * prop_i, prop_i = exp(R(E_Q[log(X_i / X)]; Q))
    acceptance        inf{m on a level grid : m / X_i in B_X}

Sub-units carry composition metadata: "sum" (X = sum X_i), "product"
(X = prod X_i) or "none" when only the ratios X_i / X matter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .acceptance import default_levels
from .duality import DualMeasure, dual_argmax
from .prob_core import DEFAULT_POS_FLOOR, PositivePosition, Scenario, _check_same

RULES = ("acceptance", "subdifferential", "proportional")
COMPOSITIONS = ("sum", "product", "none")
ARGMAX_TOL = 1e-10
COMPOSITION_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AllocationResult:
    sub_units: tuple[PositivePosition, ...]
    allocations: np.ndarray
    optimal_scenario: Scenario
    scenario_index: int
    rule: str
    composition: str
    total_value: float
    # ratio-only factors prop_i of the proportional rule; None for other rules
    proportions: np.ndarray | None = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        alloc = np.asarray(self.allocations, dtype=float)
        if alloc.shape != (len(self.sub_units),):
            raise ValueError("one allocation per sub-unit")
        if not np.all(np.isfinite(alloc)) and self.rule != "acceptance":
            raise ValueError("allocations must be finite")
        object.__setattr__(self, "allocations", alloc)

    @property
    def allocation_sum(self) -> float:
        """Reported for diagnostics only; no rule is required to add up."""
        return float(self.allocations.sum())

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "composition": self.composition,
            "allocations": [float(a) for a in self.allocations],
            "allocation_sum": self.allocation_sum,
            "total_value": self.total_value,
            "scenario_index": self.scenario_index,
            "scenario_density": [float(d) for d in self.optimal_scenario.density],
            "proportions": None if self.proportions is None else [float(v) for v in self.proportions],
        }


def optimal_scenario(m: DualMeasure, x: PositivePosition) -> Scenario:
    return m.qs[dual_argmax(m, x)]


def _prepare(m: DualMeasure, units: Sequence[PositivePosition], total: PositivePosition, composition: str):
    if composition not in COMPOSITIONS:
        raise ValueError(f"composition must be one of {COMPOSITIONS}")
    units = tuple(units)
    if not units:
        raise ValueError("need at least one sub-unit")
    for u in units:
        _check_same(total.space, u.space)
    _check_same(m.space, total.space)
    U = np.stack([u.values for u in units])
    if composition != "none":
        agg = U.sum(axis=0) if composition == "sum" else U.prod(axis=0)
        err = np.max(np.abs(agg - total.values) / np.maximum(1.0, np.abs(total.values)))
        if err > COMPOSITION_TOL:
            raise ValueError(f"sub-units do not {composition} to the total (max relative error {err:.3g})")
    k = dual_argmax(m, total)
    sv = m.scenario_values(total.values)
    if sv.max() - sv[k] > ARGMAX_TOL:
        raise AssertionError("optimal scenario does not attain the dual supremum")
    return units, U, k, m.qs[k], float(np.exp(sv[k]))


def car_subdifferential(m: DualMeasure, units: Sequence[PositivePosition], total: PositivePosition,
                        composition: str = "none") -> AllocationResult:
    units, U, k, q, value = _prepare(m, units, total, composition)
    alloc = np.exp(np.log(U) @ q.weights)
    return AllocationResult(units, alloc, q, k, "subdifferential", composition, value)


def car_proportional(m: DualMeasure, units: Sequence[PositivePosition], total: PositivePosition,
                     composition: str = "none") -> AllocationResult:
    units, U, k, q, value = _prepare(m, units, total, composition)
    ratio = U / total.values
    if np.any(ratio < DEFAULT_POS_FLOOR):
        i, j = np.unravel_index(np.argmin(ratio), ratio.shape)
        raise ValueError(f"ratio X_{i}/X underflows at outcome {total.space.outcomes[j]}")
    t = np.log(ratio) @ q.weights
    prop = np.exp(m.r(t, k))
    return AllocationResult(units, value * prop, q, k, "proportional", composition, value, prop)


Predicate = Callable[[np.ndarray], np.ndarray]


def builtin_acceptance_set(m: DualMeasure, total: PositivePosition) -> Predicate:
    """B_X = {Z : exp(E_{Q_X}[log(1/Z)]) <= 1}, batched over rows of Z."""
    w = optimal_scenario(m, total).weights

    def member(z):
        return np.exp(-np.log(z) @ w) <= 1.0

    return member


def car_acceptance(member: Predicate, unit: PositivePosition, levels: np.ndarray | None = None) -> float:
    """Smallest grid level m with m / X_i accepted; +inf if none is."""
    levels = default_levels() if levels is None else np.asarray(levels, dtype=float)
    acc = np.asarray(member(levels[:, None] / unit.values[None, :]), dtype=bool)
    return float(levels[int(np.argmax(acc))]) if acc.any() else np.inf


def allocate_by_acceptance(m: DualMeasure, units: Sequence[PositivePosition], total: PositivePosition,
                           composition: str = "none", member: Predicate | None = None,
                           levels: np.ndarray | None = None) -> AllocationResult:
    units, U, k, q, value = _prepare(m, units, total, composition)
    member = builtin_acceptance_set(m, total) if member is None else member
    alloc = np.array([car_acceptance(member, u, levels) for u in units])
    return AllocationResult(units, alloc, q, k, "acceptance", composition, value)


def allocate(rule: str, m: DualMeasure, units: Sequence[PositivePosition], total: PositivePosition,
             composition: str = "none") -> AllocationResult:
    if rule == "subdifferential":
        return car_subdifferential(m, units, total, composition)
    if rule == "proportional":
        return car_proportional(m, units, total, composition)
    if rule == "acceptance":
        return allocate_by_acceptance(m, units, total, composition)
    raise ValueError(f"unknown rule {rule!r}; expected one of {RULES}")
