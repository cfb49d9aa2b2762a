"""Finite probability spaces, positions, scenarios and quantile integrals.

Everything here is immutable after construction. Numeric kernels that other
modules reuse (``*_values`` functions) operate on the trailing axis of numpy
arrays so that batches of positions can be evaluated at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12
DEFAULT_POS_FLOOR = 1e-12


class SpaceMismatchError(ValueError):
    """Raised when two objects live on different probability spaces."""


class NotEquiprobableError(ValueError):
    """Raised by operations that need equiprobable atoms."""


def _frozen(a: Iterable[float], dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ProbSpace:
    outcomes: tuple[str, ...]
    p: np.ndarray

    def __init__(self, outcomes: Sequence, p: Sequence[float]):
        outcomes = tuple(str(o) for o in outcomes)
        p = _frozen(p)
        if p.ndim != 1 or len(outcomes) != p.size:
            raise ValueError(f"{len(outcomes)} outcomes but {p.size} probabilities")
        if p.size == 0:
            raise ValueError("probability space needs at least one outcome")
        if len(set(outcomes)) != len(outcomes):
            raise ValueError("outcome identifiers must be unique")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            bad = int(np.argmin(p))
            raise ValueError(f"probability p[{bad}]={p[bad]!r} is not strictly positive")
        total = float(p.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, expected 1 within {PROB_TOL}")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "p", p)

    @classmethod
    def uniform(cls, n: int) -> "ProbSpace":
        return cls([f"w{i + 1}" for i in range(n)], np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.p.size

    @property
    def equiprobable(self) -> bool:
        return bool(np.all(np.abs(self.p - 1.0 / self.n) <= PROB_TOL))

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, ProbSpace):
            return NotImplemented
        return self.outcomes == other.outcomes and np.array_equal(self.p, other.p)

    def __hash__(self) -> int:
        return hash((self.outcomes, self.p.tobytes()))


def _check_same(a: ProbSpace, b: ProbSpace) -> None:
    if a != b:
        raise SpaceMismatchError("objects are defined on different probability spaces")


@dataclass(frozen=True, eq=False)
class Position:
    """A real random variable on a finite space."""

    space: ProbSpace
    values: np.ndarray

    def __init__(self, space: ProbSpace, values: Sequence[float]):
        vals = _frozen(values)
        if vals.shape != (space.n,):
            raise ValueError(f"position has {vals.size} values, space has {space.n} outcomes")
        if not np.all(np.isfinite(vals)):
            raise ValueError("position values must be finite")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "values", vals)
        self._validate()

    def _validate(self) -> None:
        pass

    def log(self) -> "Position":
        return Position(self.space, np.log(self.values))

    def exp(self) -> "PositivePosition":
        return PositivePosition(self.space, np.exp(self.values))

    def __len__(self) -> int:
        return self.values.size


class PositivePosition(Position):
    """A position bounded away from zero (values >= pos_floor)."""

    pos_floor: float = DEFAULT_POS_FLOOR

    def __init__(self, space: ProbSpace, values: Sequence[float], pos_floor: float = DEFAULT_POS_FLOOR):
        object.__setattr__(self, "pos_floor", float(pos_floor))
        super().__init__(space, values)

    def _validate(self) -> None:
        if np.any(self.values < self.pos_floor):
            i = int(np.argmin(self.values))
            raise ValueError(
                f"value {self.values[i]!r} at outcome {self.space.outcomes[i]} is below pos_floor {self.pos_floor}"
            )


@dataclass(frozen=True, eq=False)
class Scenario:
    """A probability measure Q << P stored through its density dQ/dP."""

    space: ProbSpace
    density: np.ndarray

    def __init__(self, space: ProbSpace, density: Sequence[float]):
        d = _frozen(density)
        if d.shape != (space.n,):
            raise ValueError(f"density has {d.size} entries, space has {space.n} outcomes")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("densities must be finite and nonnegative")
        mass = float(space.p @ d)
        if abs(mass - 1.0) > PROB_TOL:
            raise ValueError(f"scenario mass sum(p*d) = {mass!r}, expected 1 within {PROB_TOL}")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "density", d)

    @classmethod
    def reference(cls, space: ProbSpace) -> "Scenario":
        return cls(space, np.ones(space.n))

    @property
    def weights(self) -> np.ndarray:
        """Atom probabilities under Q."""
        return self.space.p * self.density

    def permuted(self, perm: Sequence[int]) -> "Scenario":
        return Scenario(self.space, self.density[list(perm)])


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    weights: np.ndarray = field(repr=False)

    def __init__(self, scenarios: Iterable[Scenario]):
        sc = tuple(scenarios)
        if not sc:
            raise ValueError("scenario set must be nonempty")
        for s in sc[1:]:
            _check_same(sc[0].space, s.space)
        object.__setattr__(self, "scenarios", sc)
        object.__setattr__(self, "weights", _frozen(np.stack([s.weights for s in sc])))

    @property
    def space(self) -> ProbSpace:
        return self.scenarios[0].space

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, k: int) -> Scenario:
        return self.scenarios[k]

    def with_midpoints(self) -> "ScenarioSet":
        """Append pairwise midpoint densities (a cheap step towards a convex set)."""
        extra = [
            Scenario(self.space, 0.5 * (a.density + b.density))
            for a, b in itertools.combinations(self.scenarios, 2)
        ]
        return ScenarioSet(self.scenarios + tuple(extra))


# ---------------------------------------------------------------------------
# array kernels (trailing axis = outcomes)


def quantile_values(values: np.ndarray, p: np.ndarray, alpha: float) -> np.ndarray:
    """Smallest alpha-quantile inf{x : P[X <= x] >= alpha} along the last axis."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, axis=-1, kind="stable")
    xs = np.take_along_axis(values, order, axis=-1)
    cum = np.cumsum(np.asarray(p)[order], axis=-1)
    idx = np.argmax(cum >= alpha - PROB_TOL, axis=-1)
    return np.take_along_axis(xs, idx[..., None], axis=-1)[..., 0]


def upper_tail_integral_values(values: np.ndarray, p: np.ndarray, alpha: float) -> np.ndarray:
    """Exact integral of the smallest quantile function over (alpha, 1)."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, axis=-1, kind="stable")
    xs = np.take_along_axis(values, order, axis=-1)
    cum = np.cumsum(np.asarray(p)[order], axis=-1)
    cum[..., -1] = 1.0
    prev = np.concatenate([np.zeros_like(cum[..., :1]), cum[..., :-1]], axis=-1)
    length = np.clip(cum - np.maximum(prev, alpha), 0.0, None)
    return np.sum(xs * length, axis=-1)


def comonotone_integral_values(x: np.ndarray, d: np.ndarray, p: np.ndarray) -> float:
    """Integral over (0,1) of q_X(b) * q_D(b) db for one position and one density."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    p = np.asarray(p, dtype=float)
    ox, od = np.argsort(x, kind="stable"), np.argsort(d, kind="stable")
    cx, cd = np.cumsum(p[ox]), np.cumsum(p[od])
    cx[-1] = cd[-1] = 1.0
    brk = np.union1d(cx, cd)
    lo = np.concatenate([[0.0], brk[:-1]])
    mid = 0.5 * (lo + brk)
    qx = x[ox][np.minimum(np.searchsorted(cx, mid), x.size - 1)]
    qd = d[od][np.minimum(np.searchsorted(cd, mid), d.size - 1)]
    return float(np.sum((brk - lo) * qx * qd))


# ---------------------------------------------------------------------------
# public operations


def expect(x: Position, q: Scenario) -> float:
    _check_same(x.space, q.space)
    return float(q.weights @ x.values)


def quantile(x: Position, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha={alpha!r} must lie in (0, 1)")
    return float(quantile_values(x.values, x.space.p, alpha))


def comonotone_integral(x: Position, q: Scenario) -> float:
    """Hardy-Littlewood pairing of the quantile functions of X and dQ/dP."""
    _check_same(x.space, q.space)
    return comonotone_integral_values(x.values, q.density, x.space.p)


def density_permutations(q: Scenario) -> list[Scenario]:
    """All distinct scenarios whose density is a permutation of q's."""
    seen = dict.fromkeys(itertools.permutations(q.density.tolist()))
    return [Scenario(q.space, d) for d in seen]


def law_equivalent_sup(x: Position, q: Scenario, max_atoms: int = 9) -> float:
    """Brute-force sup of E_Q'[X] over densities law-equivalent to q."""
    _check_same(x.space, q.space)
    if not x.space.equiprobable:
        raise NotEquiprobableError("law equivalence is only implemented for equiprobable atoms")
    if x.space.n > max_atoms:
        raise ValueError(f"exhaustive permutation search limited to {max_atoms} atoms")
    p = x.space.p
    return max(float((p * np.asarray(d)) @ x.values) for d in set(itertools.permutations(q.density.tolist())))
