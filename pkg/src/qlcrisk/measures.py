"""Concrete risk measures on finite spaces.

Return-side measures take strictly positive positions (gross returns) and
monetary-side kernels take arbitrary real positions. The ``*_values`` kernels
work along the last axis so a whole batch of positions can be evaluated in one
call; the public functions accept ``Position`` objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .prob_core import (
    Position,
    PositivePosition,
    Scenario,
    ScenarioSet,
    _check_same,
    quantile,
    quantile_values,
    upper_tail_integral_values,
)

BRACKET_FACTOR = 1e6


class BracketError(ValueError):
    """No sign change inside the root-finding bracket."""


# ---------------------------------------------------------------------------
# generic monotone bisection


def bisect_increasing(
    g: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    max_iter: int = 400,
) -> np.ndarray:
    """Smallest point where the nondecreasing map ``g`` becomes >= 0.

    ``g(lo) < 0 <= g(hi)`` is assumed elementwise. Iterates until
    the bracket is a few ulps wide (relative to max(1, |x|)), which is far
    tighter than any tolerance used elsewhere in the package.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    eps = np.finfo(float).eps
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        scale = np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        active = (mid > lo) & (mid < hi) & (hi - lo > 2 * eps * scale)
        if not np.any(active):
            break
        up = g(mid) >= 0
        hi = np.where(active & up, mid, hi)
        lo = np.where(active & ~up, mid, lo)
    return hi


# ---------------------------------------------------------------------------
# Orlicz functions and mean-value losses


def _table(points: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 2:
        raise ValueError("a table needs at least two [x, f(x)] pairs")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError("table x-values must be strictly increasing")
    return arr[:, 0].copy(), arr[:, 1].copy()


@dataclass(frozen=True)
class OrliczFunction:
    """Young-type function Phi together with the level alpha of the premium."""

    tag: str
    p: float = 1.0
    level_alpha: float = 0.0
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.tag not in {"power", "linear", "canonical_log", "user_table"}:
            raise ValueError(f"unknown Orlicz tag {self.tag!r}")
        if not 0.0 <= self.level_alpha < 1.0:
            raise ValueError("level_alpha must lie in [0, 1)")
        if self.tag == "power" and not self.p > 0:
            raise ValueError("power Orlicz function needs p > 0")
        if self.tag == "user_table":
            if self.table is None:
                raise ValueError("user_table Orlicz function needs a table")
            xs, ys = _table(self.table)
            if xs[0] > 0 or np.any(np.diff(ys) < 0):
                raise ValueError("Orlicz table must start at x <= 0 and be nondecreasing")
            if not (self(np.array(0.0)) < 1.0 < ys[-1]):
                raise ValueError("Orlicz table must satisfy Phi(0) < 1 < Phi(inf)")

    @classmethod
    def power(cls, p: float, level_alpha: float = 0.0) -> "OrliczFunction":
        return cls("power", p=p, level_alpha=level_alpha)

    @classmethod
    def linear(cls, level_alpha: float = 0.0) -> "OrliczFunction":
        return cls("linear", level_alpha=level_alpha)

    @classmethod
    def canonical_log(cls) -> "OrliczFunction":
        return cls("canonical_log")

    @classmethod
    def from_table(cls, points, level_alpha: float = 0.0) -> "OrliczFunction":
        return cls("user_table", level_alpha=level_alpha, table=tuple(tuple(map(float, r)) for r in points))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.tag == "power":
            return x**self.p
        if self.tag == "linear":
            return x
        if self.tag == "canonical_log":
            with np.errstate(divide="ignore"):
                return 1.0 + np.log(x)
        xs, ys = _table(self.table)
        return np.interp(x, xs, ys)


@dataclass(frozen=True)
class MeanValueLoss:
    """Strictly increasing loss ell with ell(0) = 0, inverted by bisection."""

    tag: str
    table: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.tag not in {"identity", "linear_quadratic", "user_table"}:
            raise ValueError(f"unknown loss tag {self.tag!r}")
        if self.tag == "user_table":
            if self.table is None:
                raise ValueError("user_table loss needs a table")
            xs, ys = _table(self.table)
            if np.any(np.diff(ys) <= 0):
                raise ValueError("loss table must be strictly increasing")
            if not xs[0] <= 0.0 <= xs[-1] or abs(float(np.interp(0.0, xs, ys))) > 1e-12:
                raise ValueError("loss table must pass through (0, 0)")

    @classmethod
    def identity(cls) -> "MeanValueLoss":
        return cls("identity")

    @classmethod
    def linear_quadratic(cls) -> "MeanValueLoss":
        """ell(x) = x for x < 0 and x^2 + x for x >= 0."""
        return cls("linear_quadratic")

    @classmethod
    def from_table(cls, points) -> "MeanValueLoss":
        return cls("user_table", table=tuple(tuple(map(float, r)) for r in points))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.tag == "identity":
            return x
        if self.tag == "linear_quadratic":
            return np.where(x < 0, x, x * x + x)
        xs, ys = _table(self.table)
        # linear extrapolation keeps the loss strictly increasing
        out = np.interp(x, xs, ys)
        left = ys[0] + (x - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0])
        right = ys[-1] + (x - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return np.where(x < xs[0], left, np.where(x > xs[-1], right, out))

    def inverse(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, -1.0)
        hi = np.full(y.shape, 1.0)
        for _ in range(200):
            low = self(lo) > y
            high = self(hi) < y
            if not (np.any(low) or np.any(high)):
                break
            lo = np.where(low, 2 * lo, lo)
            hi = np.where(high, 2 * hi, hi)
        else:
            raise BracketError("value outside the range of the loss function")
        return bisect_increasing(lambda s: self(s) - y, lo, hi)


# ---------------------------------------------------------------------------
# array kernels


def _check_alpha(alpha: float, allow_zero: bool = False) -> None:
    ok = (0.0 <= alpha < 1.0) if allow_zero else (0.0 < alpha < 1.0)
    if not ok:
        raise ValueError(f"alpha={alpha!r} outside {'[0, 1)' if allow_zero else '(0, 1)'}")


def avar_values(values: np.ndarray, p: np.ndarray, alpha: float) -> np.ndarray:
    return upper_tail_integral_values(values, p, alpha) / (1.0 - alpha)


def arar_direct_values(values: np.ndarray, p: np.ndarray, alpha: float) -> np.ndarray:
    """(exp of the integrated log-quantiles over (alpha,1)) ** (1/(1-alpha))."""
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    return np.exp(upper_tail_integral_values(logs, p, alpha)) ** (1.0 / (1.0 - alpha))


def pnorm_values(values: np.ndarray, w: np.ndarray, gamma: float) -> np.ndarray:
    return (np.asarray(values) ** gamma @ w) ** (1.0 / gamma)


def entropic_values(values: np.ndarray, w: np.ndarray, gamma: float) -> np.ndarray:
    """(1/gamma) log E[exp(gamma Z)], computed stably."""
    v = np.asarray(values, dtype=float)
    b = np.broadcast_to(w, v.shape)
    return logsumexp(gamma * v, b=b, axis=-1) / gamma


def h0_values(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.exp(np.log(values) @ w)


def orlicz_values(values: np.ndarray, w: np.ndarray, phi: OrliczFunction) -> np.ndarray:
    """Orlicz premium inf{k > 0 : E_w[Phi(X/k)] <= 1 - alpha} by bisection in log k."""
    x = np.asarray(values, dtype=float)
    target = 1.0 - phi.level_alpha
    batch = x.shape[:-1]
    zero = np.all(x <= 0, axis=-1)
    safe = np.where(zero[..., None], 1.0, x)
    pos = np.where(safe > 0, safe, np.inf)
    xmin = np.min(pos, axis=-1)
    xmax = np.max(safe, axis=-1)

    def excess(logk):
        k = np.exp(logk)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.nan_to_num(phi(safe / k) @ w, nan=np.inf) - target

    for factor in (BRACKET_FACTOR, BRACKET_FACTOR**2):
        lo = np.log(xmin / factor) * np.ones(batch)
        hi = np.log(xmax * factor) * np.ones(batch)
        if np.all(excess(lo) > 0) and np.all(excess(hi) <= 0):
            break
    else:
        raise BracketError("Orlicz premium bracket has no sign change; check Phi(0) < 1 - alpha < Phi(inf)")
    # smallest log k with excess <= 0, i.e. -excess >= 0
    root = np.exp(bisect_increasing(lambda s: -excess(s), lo, hi))
    return np.where(zero, 0.0, root)


def mean_value_values(values: np.ndarray, weights: np.ndarray, ell: MeanValueLoss) -> np.ndarray:
    """sup_Q ell^{-1}(E_Q ell(Z)) for monetary positions Z; weights is (k, n)."""
    return np.max(ell.inverse(ell(values) @ np.atleast_2d(weights).T), axis=-1)


# ---------------------------------------------------------------------------
# public operations


def var(x: Position, alpha: float) -> float:
    return quantile(x, alpha)


def avar(x: Position, alpha: float) -> float:
    """Average value at risk; alpha = 0 gives the mean."""
    _check_alpha(alpha, allow_zero=True)
    return float(avar_values(x.values, x.space.p, alpha))


def arar(x: PositivePosition, alpha: float) -> float:
    """Average return at risk, exp(avar(log x, alpha))."""
    _check_alpha(alpha, allow_zero=True)
    if np.any(x.values <= 0):
        raise ValueError("arar needs strictly positive values")
    return float(np.exp(avar_values(np.log(x.values), x.space.p, alpha)))


def arar_direct(x: PositivePosition, alpha: float) -> float:
    _check_alpha(alpha, allow_zero=True)
    if np.any(x.values <= 0):
        raise ValueError("arar needs strictly positive values")
    return float(arar_direct_values(x.values, x.space.p, alpha))


def _weights(x: Position, q: Scenario | None) -> np.ndarray:
    if q is None:
        return x.space.p
    _check_same(x.space, q.space)
    return q.weights


def orlicz_premium(x: PositivePosition, phi: OrliczFunction, q: Scenario | None = None) -> float:
    if np.any(x.values < 0):
        raise ValueError("Orlicz premium needs nonnegative values")
    return float(orlicz_values(x.values, _weights(x, q), phi))


def h0_premium(x: PositivePosition, q: Scenario | None = None) -> float:
    """exp(E_Q[log X])."""
    return float(h0_values(x.values, _weights(x, q)))


def h0_premium_bisect(x: PositivePosition, q: Scenario | None = None) -> float:
    """inf{k > 0 : E_Q[log(X/k)] <= 0}, found by bisection."""
    w = _weights(x, q)
    logs = np.log(x.values)
    lo, hi = logs.min() - 1.0, logs.max() + 1.0
    return float(np.exp(bisect_increasing(lambda s: s - logs @ w, lo, hi)))


def pnorm(x: PositivePosition, gamma: float, q: Scenario | None = None) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return float(pnorm_values(x.values, _weights(x, q), gamma))


def robust_pnorm(x: PositivePosition, gamma: float, qs: ScenarioSet) -> float:
    return robust_discounted_pnorm(x, gamma, qs, np.zeros(len(qs)))


def robust_discounted_pnorm(x: PositivePosition, gamma: float, qs: ScenarioSet, c: Sequence[float]) -> float:
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    c = _penalty(c, qs)
    _check_same(x.space, qs.space)
    return float(np.max(np.exp(-c) * pnorm_values(x.values, qs.weights.T, gamma)))


def logconvex_eval(x: PositivePosition, qs: ScenarioSet, c: Sequence[float]) -> float:
    """sup_Q exp(-c(Q)) * H_{0,Q}(X)."""
    c = _penalty(c, qs)
    _check_same(x.space, qs.space)
    return float(np.max(np.exp(-c) * h0_values(x.values, qs.weights.T)))


def mean_value_ce(x: PositivePosition, ell: MeanValueLoss, qs: ScenarioSet) -> float:
    """sup_Q exp(ell^{-1}(E_Q[ell(log X)]))."""
    _check_same(x.space, qs.space)
    return float(np.exp(mean_value_values(np.log(x.values), qs.weights, ell)))


def hg_premium(x: Position, phi: OrliczFunction, q: Scenario | None = None) -> float:
    """Experimental: inf over x of x + H_phi[(X - x)^+] on [min X, max X].

    The outer infimum is a bounded scalar minimisation and is only as good as
    the optimiser; treat the result as best effort.
    """
    w = _weights(x, q)
    vals = x.values
    lo, hi = float(vals.min()), float(vals.max())

    def objective(s: float) -> float:
        return s + float(orlicz_values(np.maximum(vals - s, 0.0), w, phi))

    if hi - lo < 1e-15:
        return objective(lo)
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return min(float(res.fun), objective(lo), objective(hi))


def _penalty(c: Sequence[float], qs: ScenarioSet) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (len(qs),):
        raise ValueError(f"need one penalty per scenario ({len(qs)}), got {c.size}")
    if np.any(c < 0):
        raise ValueError("penalties must be nonnegative")
    return c
