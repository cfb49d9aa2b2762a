"""Log-risk acceptance families B^b = {X : trho(1/X) <= b} on a level grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .correspondence import (
    Counterexample,
    PropertyReport,
    PropertyResult,
    RiskFunctional,
    SamplerConfig,
    to_monetary,
)
from .measures import bisect_increasing
from .prob_core import Position, ProbSpace

MEMBER_SLACK = 1e-12
# tight test levels sit this far (relative) above the infimum so that
# exact-equality cases are not decided by rounding
TIGHT_PAD = 1e-10


def default_levels(lo: float = -4.0, hi: float = 4.0, steps: int = 161) -> np.ndarray:
    """Geometric level grid e^lo .. e^hi."""
    return np.exp(np.linspace(lo, hi, steps))


@dataclass(frozen=True, eq=False)
class LogRiskAcceptanceFamily:
    """Level-indexed acceptance sets.

    ``member(b, X)`` broadcasts a level array of shape (...) against positions
    of shape (..., n) and returns booleans of shape (...).
    """

    levels: np.ndarray
    member: Callable[[np.ndarray, np.ndarray], np.ndarray]
    space: ProbSpace
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim != 1 or lv.size == 0 or np.any(lv <= 0) or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be a nonempty ascending grid of positive numbers")

    @property
    def step_ratio(self) -> float:
        return float(np.max(self.levels[1:] / self.levels[:-1])) if self.levels.size > 1 else 1.0

    def contains(self, b, x) -> np.ndarray:
        if isinstance(x, Position):
            x = x.values
        return np.asarray(self.member(np.asarray(b, dtype=float), np.asarray(x, dtype=float)), dtype=bool)


def family_from_measure(trho: RiskFunctional, levels: np.ndarray | None = None) -> LogRiskAcceptanceFamily:
    if trho.side != "return":
        raise ValueError("acceptance families are built from return functionals")
    levels = default_levels() if levels is None else np.asarray(levels, dtype=float)

    def member(b, x):
        return trho.values(1.0 / x) <= b * (1 + MEMBER_SLACK)

    return LogRiskAcceptanceFamily(levels, member, trho.space, {"from_measure": trho.name, "spec": trho.spec})


def measure_from_family(fam: LogRiskAcceptanceFamily, x) -> np.ndarray | float:
    """Smallest grid level b with 1/x in B^b; +inf if no level accepts."""
    if isinstance(x, Position):
        x = x.values
    x = np.asarray(x, dtype=float)
    inv = 1.0 / x
    lv = fam.levels.reshape((-1,) + (1,) * (inv.ndim - 1))
    acc = fam.contains(lv, np.broadcast_to(inv, (fam.levels.size,) + inv.shape))
    first = np.argmax(acc, axis=0)
    out = np.where(np.any(acc, axis=0), fam.levels[first], np.inf)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# sampled checks


def _positions(fam: LogRiskAcceptanceFamily, config: SamplerConfig, rng) -> np.ndarray:
    return np.exp(rng.uniform(-config.log_range, config.log_range, (config.n_samples, fam.space.n)))


def infimum_level(fam: LogRiskAcceptanceFamily, x) -> np.ndarray:
    """inf{b : x in B^b} refined off the grid by bisection on the predicate.

    Falls back to the grid value when the lowest level already accepts and to
    +inf when nothing accepts.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    grid = np.atleast_1d(measure_from_family(fam, 1.0 / x))
    ok = np.isfinite(grid) & (grid > fam.levels[0])
    if not np.any(ok):
        return grid
    xs = x[ok]
    g = lambda b: np.where(fam.contains(b, xs), 0.0, -1.0)  # noqa: E731
    out = grid.copy()
    out[ok] = bisect_increasing(g, grid[ok] / fam.step_ratio, grid[ok])
    return out


def _levels_for(fam: LogRiskAcceptanceFamily, X: np.ndarray, rng) -> np.ndarray:
    """Half tight levels (infimum accepting level), half random grid levels."""
    tight = infimum_level(fam, X) * (1 + TIGHT_PAD)
    rand = fam.levels[rng.integers(0, fam.levels.size, X.shape[0])]
    half = X.shape[0] // 2
    b = np.where(np.arange(X.shape[0]) < half, tight, rand)
    return np.where(np.isfinite(b), b, rand)


def _result(name: str, bad: np.ndarray, inputs: dict, n: int) -> PropertyResult:
    if not np.any(bad):
        return PropertyResult(name, True, n, 0.0, None, 0.0)
    i = int(np.argmax(bad))
    cex = Counterexample({k: np.asarray(v)[i] for k, v in inputs.items()}, 1.0, 0.0, 1.0)
    return PropertyResult(name, False, n, 0.0, cex, 1.0)


def check_B_star_shaped(fam: LogRiskAcceptanceFamily, config: SamplerConfig = SamplerConfig()) -> PropertyResult:
    """X in B^b implies lam X in B^(b/lam) for lam >= 1."""
    rng = np.random.default_rng(config.seed)
    X = _positions(fam, config, rng)
    lam = np.exp(rng.uniform(0.0, 2.0, X.shape[0]))
    b = _levels_for(fam, X, rng)
    premise = fam.contains(b, X)
    bad = premise & ~fam.contains(b / lam, lam[:, None] * X)
    return _result("B_star_shaped", bad, {"x": X, "b": b, "lam": lam}, X.shape[0])


def check_B_positively_homogeneous(fam: LogRiskAcceptanceFamily,
                                   config: SamplerConfig = SamplerConfig()) -> PropertyResult:
    """gamma X in B^(b/gamma) iff X in B^b, gamma > 0."""
    rng = np.random.default_rng(config.seed)
    X = _positions(fam, config, rng)
    gam = np.exp(rng.uniform(-2.0, 2.0, X.shape[0]))
    b = _levels_for(fam, X, rng)
    bad = fam.contains(b, X) != fam.contains(b / gam, gam[:, None] * X)
    return _result("B_positively_homogeneous", bad, {"x": X, "b": b, "gamma": gam}, X.shape[0])


def check_family_axioms(fam: LogRiskAcceptanceFamily, config: SamplerConfig = SamplerConfig()) -> PropertyReport:
    """Increasing in b, monotone in X, log-convex, grid right-continuity."""
    rng = np.random.default_rng(config.seed)
    X = _positions(fam, config, rng)
    Y = _positions(fam, config, rng)
    N = X.shape[0]
    b = _levels_for(fam, X, rng)
    b2 = b * np.exp(rng.uniform(0.0, 1.0, N))
    out = {}
    bad = fam.contains(b, X) & ~fam.contains(b2, X)
    out["increasing_in_b"] = _result("increasing_in_b", bad, {"x": X, "b": b, "b2": b2}, N)
    up = X * np.exp(rng.uniform(0.0, 1.0, X.shape))
    bad = fam.contains(b, X) & ~fam.contains(b, up)
    out["monotone"] = _result("monotone", bad, {"x": X, "y": up, "b": b}, N)
    # 1/X, 1/Y in B^b  =>  1/(X^a Y^(1-a)) in B^b; use a level accepting both
    a = rng.uniform(0.0, 1.0, N)
    bb = np.maximum(measure_from_family(fam, X), measure_from_family(fam, Y))
    bb = np.where(np.isfinite(bb), bb, fam.levels[-1])
    both = fam.contains(bb, 1.0 / X) & fam.contains(bb, 1.0 / Y)
    mix = 1.0 / (X ** a[:, None] * Y ** (1 - a[:, None]))
    bad = both & ~fam.contains(bb, mix)
    out["log_convex"] = _result("log_convex", bad, {"x": X, "y": Y, "a": a, "b": bb}, N)
    # member at a grid level iff member at every larger grid level
    acc = fam.contains(fam.levels[:, None], np.broadcast_to(X, (fam.levels.size,) + X.shape))
    later_all = np.flip(np.logical_and.accumulate(np.flip(acc, 0), axis=0), 0)
    bad = np.any(acc != later_all, axis=0)
    out["right_continuous_on_grid"] = _result("right_continuous_on_grid", bad, {"x": X}, N)
    return PropertyReport(out)


def check_acceptance_relation(trho: RiskFunctional, levels: np.ndarray | None = None,
                              config: SamplerConfig = SamplerConfig()) -> PropertyResult:
    """Y in A^a (rho(-Y) <= a) iff e^Y in B^(e^a), rho the monetary counterpart."""
    fam = family_from_measure(trho, levels)
    rho = to_monetary(trho)
    rng = np.random.default_rng(config.seed)
    Y = rng.uniform(-config.log_range, config.log_range, (config.n_samples, trho.space.n))
    a = np.log(_levels_for(fam, np.exp(Y), rng))
    lhs = rho.values(-Y) <= a + np.log1p(MEMBER_SLACK)
    rhs = fam.contains(np.exp(a), np.exp(Y))
    return _result("acceptance_relation", lhs != rhs, {"y": Y, "a": a}, Y.shape[0])


def family_table(fam: LogRiskAcceptanceFamily, positions: np.ndarray) -> list[tuple[float, int, bool]]:
    """Rows (level, position index, member) for export."""
    positions = np.atleast_2d(positions)
    acc = fam.contains(fam.levels[:, None], np.broadcast_to(positions, (fam.levels.size,) + positions.shape))
    return [(float(fam.levels[i]), j, bool(acc[i, j])) for i in range(fam.levels.size)
            for j in range(positions.shape[0])]
