"""Dual representations built from an R-functional and a finite scenario set.

A return measure is represented as

    trho(X) = max_k exp(R(E_{Q_k}[log X]; k))

where ``R(t; k)`` is nondecreasing in t. Scenario-dependent parameters
(penalties) are stored per scenario index, in the order of the ScenarioSet.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .correspondence import PropertyReport, PropertyResult, Counterexample, RiskFunctional
from .measures import avar_values, h0_values
from .prob_core import (
    NotEquiprobableError,
    PositivePosition,
    Scenario,
    ScenarioSet,
    _check_same,
    comonotone_integral_values,
)

FAMILIES = ("coherent", "convex_penalty", "supq_penalty", "floor", "log_floor", "ph_kink", "user_table")
Q_GRID = np.linspace(0.0, 1.0, 101)


class RepresentationError(AssertionError):
    """An internal consistency identity failed beyond its tolerance."""


def _extrapolated_interp(t: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    out = np.interp(t, xs, ys)
    left = ys[0] + (t - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0])
    right = ys[-1] + (t - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return np.where(t < xs[0], left, np.where(t > xs[-1], right, out))


@dataclass(frozen=True, eq=False)
class RFunctional:
    """Parametric R(t; k).

    families and parameters
      coherent                 t
      convex_penalty  c        t - c_k
      supq_penalty    c, kappa max over a 101-point q grid of q t - c(qQ_k),
                               with c(qQ_k) = q c_k + kappa (1 - q)^2
      floor           C        max(t, C)
      log_floor       a        log max(t, a), 0 < a < 1
      ph_kink         d_plus, d_minus
                               d_plus t^+ - d_minus t^-
      user_table      table    piecewise linear in t (linear beyond the ends)
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown R family {self.family!r}")
        p = self.params
        if self.family in ("convex_penalty", "supq_penalty"):
            c = np.asarray(p.get("c", [0.0]), dtype=float)
            if np.any(c < 0):
                raise ValueError("penalties must be nonnegative")
        if self.family == "supq_penalty" and p.get("kappa", 0.0) < 0:
            raise ValueError("kappa must be nonnegative")
        if self.family == "log_floor" and not 0.0 < p.get("a", 0.5) < 1.0:
            raise ValueError("log_floor needs 0 < a < 1")
        if self.family == "ph_kink" and (p.get("d_plus", 1.0) < 0 or p.get("d_minus", 1.0) < 0):
            raise ValueError("ph_kink slopes must be nonnegative")
        if self.family == "user_table":
            tab = np.asarray(p["table"], dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2 or np.any(np.diff(tab[:, 0]) <= 0):
                raise ValueError("user_table needs sorted [t, R] pairs")
            if np.any(np.diff(tab[:, 1]) < 0):
                raise ValueError("user_table must be nondecreasing in t")

    # constructors -------------------------------------------------------
    @classmethod
    def coherent(cls) -> "RFunctional":
        return cls("coherent")

    @classmethod
    def convex_penalty(cls, c) -> "RFunctional":
        return cls("convex_penalty", {"c": [float(v) for v in c]})

    @classmethod
    def supq_penalty(cls, c, kappa: float = 0.5) -> "RFunctional":
        return cls("supq_penalty", {"c": [float(v) for v in c], "kappa": float(kappa)})

    @classmethod
    def floor(cls, C: float) -> "RFunctional":
        return cls("floor", {"C": float(C)})

    @classmethod
    def log_floor(cls, a: float) -> "RFunctional":
        return cls("log_floor", {"a": float(a)})

    @classmethod
    def ph_kink(cls, d_plus: float, d_minus: float) -> "RFunctional":
        return cls("ph_kink", {"d_plus": float(d_plus), "d_minus": float(d_minus)})

    @classmethod
    def user_table(cls, table) -> "RFunctional":
        return cls("user_table", {"table": [[float(a), float(b)] for a, b in table]})

    # metadata -----------------------------------------------------------
    @property
    def expansive(self) -> bool:
        if self.family in ("coherent", "convex_penalty"):
            return True
        if self.family == "ph_kink":
            return self.params["d_plus"] >= 1.0 and self.params["d_minus"] >= 1.0
        if self.family == "user_table":
            tab = np.asarray(self.params["table"], dtype=float)
            return bool(np.all(np.diff(tab[:, 1]) >= np.diff(tab[:, 0]) - 1e-12))
        return False

    @property
    def translation_invariant_in_t(self) -> bool:
        if self.family in ("coherent", "convex_penalty"):
            return True
        if self.family == "ph_kink":
            return self.params["d_plus"] == 1.0 and self.params["d_minus"] == 1.0
        if self.family == "user_table":
            tab = np.asarray(self.params["table"], dtype=float)
            return bool(np.allclose(np.diff(tab[:, 1]), np.diff(tab[:, 0]), rtol=0, atol=1e-12))
        return False

    def n_params(self) -> int | None:
        """Number of per-scenario parameters, or None if scenario independent."""
        if self.family in ("convex_penalty", "supq_penalty"):
            return len(self.params["c"])
        return None

    # evaluation ---------------------------------------------------------
    def __call__(self, t, k=0) -> np.ndarray:
        """R(t; k) with t and k broadcast together."""
        t = np.asarray(t, dtype=float)
        k = np.asarray(k)
        f = self.family
        p = self.params
        if f == "coherent":
            return t + 0.0
        if f == "convex_penalty":
            return t - np.asarray(p["c"])[k]
        if f == "supq_penalty":
            c = np.asarray(p["c"])[k][..., None]
            q = Q_GRID
            vals = q * t[..., None] - q * c - p["kappa"] * (1 - q) ** 2
            return np.max(vals, axis=-1)
        if f == "floor":
            return np.maximum(t, p["C"])
        if f == "log_floor":
            return np.log(np.maximum(t, p["a"]))
        if f == "ph_kink":
            return p["d_plus"] * np.maximum(t, 0.0) + p["d_minus"] * np.minimum(t, 0.0)
        tab = np.asarray(p["table"], dtype=float)
        return _extrapolated_interp(t, tab[:, 0], tab[:, 1])

    def penalty_at(self, q: float, k: int) -> float:
        """c(qQ_k) for the sup-q family."""
        c = self.params["c"][k]
        return q * c + self.params["kappa"] * (1 - q) ** 2

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}


@dataclass(frozen=True, eq=False)
class DualMeasure:
    r: RFunctional
    qs: ScenarioSet

    def __post_init__(self):
        k = self.r.n_params()
        if k is not None and k != len(self.qs):
            raise ValueError(f"R-functional has {k} penalties for {len(self.qs)} scenarios")

    @property
    def space(self):
        return self.qs.space

    def scenario_values(self, x: np.ndarray) -> np.ndarray:
        """R(E_{Q_k} log X; k) for every scenario, shape (..., K)."""
        with np.errstate(divide="ignore"):
            t = np.log(x) @ self.qs.weights.T
        return self.r(t, np.arange(len(self.qs)))

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.exp(np.max(self.scenario_values(x), axis=-1))

    def monetary_values(self, z: np.ndarray) -> np.ndarray:
        t = np.asarray(z, dtype=float) @ self.qs.weights.T
        return np.max(self.r(t, np.arange(len(self.qs))), axis=-1)

    def functional(self, name: str = "dual") -> RiskFunctional:
        return RiskFunctional(self.values, self.space, "return", name, self)

    def monetary_functional(self, name: str = "dual") -> RiskFunctional:
        return RiskFunctional(self.monetary_values, self.space, "monetary", name, self)


def dual_eval(m: DualMeasure, x: PositivePosition) -> float:
    _check_same(m.space, x.space)
    return float(m.values(x.values))


def dual_argmax(m: DualMeasure, x: PositivePosition) -> int:
    """Index of the maximising scenario; ties go to the lowest index."""
    _check_same(m.space, x.space)
    return int(np.argmax(m.scenario_values(x.values)))


def dual_eval_building_block(m: DualMeasure, x: PositivePosition) -> float:
    """max_k R_k(H_{0,Q_k}(X)) with R_k(s) = exp(R(log s; k))."""
    _check_same(m.space, x.space)
    return float(building_block_values(m, x.values))


def building_block_values(m: DualMeasure, x: np.ndarray) -> np.ndarray:
    s = h0_values(x, m.qs.weights.T)
    with np.errstate(divide="ignore"):
        return np.max(np.exp(m.r(np.log(s), np.arange(len(m.qs)))), axis=-1)


def supq_orlicz_eval(m: DualMeasure, x: PositivePosition) -> float:
    """sup over (k, q) of exp(-c(qQ_k)) H_{0,Q_k}(X^q) on the sup-q grid."""
    if m.r.family != "supq_penalty":
        raise ValueError("only defined for the supq_penalty family")
    best = -np.inf
    for k, sc in enumerate(m.qs):
        for q in Q_GRID:
            best = max(best, np.exp(-m.r.penalty_at(q, k)) * float(h0_values(x.values**q, sc.weights)))
    return float(best)


# ---------------------------------------------------------------------------
# recovering R from a measure


@dataclass(frozen=True)
class RecoveryConfig:
    bound: float = 8.0
    starts: int = 8
    min_step: float = 1e-6
    initial_step: float = 1.0
    max_moves: int = 20000
    seed: int = 0


def _project(U: np.ndarray, w: np.ndarray, t: float, B: float) -> np.ndarray:
    """Push rows of U into the box [-B, B]^n intersected with {w.u >= t}."""
    U = np.clip(U, -B, B)
    for _ in range(U.shape[-1] + 1):
        deficit = t - U @ w
        need = deficit > 0
        if not np.any(need):
            break
        free = (U < B) & (w > 0)
        dirn = w * free
        denom = dirn @ w
        step = np.where(need & (denom > 0), deficit / np.where(denom > 0, denom, 1.0), 0.0)
        U = np.clip(U + step[..., None] * dirn, -B, B)
    return U


def recover_r(f: RiskFunctional, q: Scenario, t: float, config: RecoveryConfig = RecoveryConfig()) -> float:
    """inf{log f(Y) : E_Q[log Y] >= t} over log-values in [-B, B]^n.

    Multi-start coordinate descent on u = log Y. Every trial point is
    projected back onto the constraint; the step halves whenever no
    coordinate move improves, down to ``min_step``.
    """
    if f.side != "return":
        raise ValueError("recover_r expects a return functional")
    _check_same(f.space, q.space)
    B = config.bound
    if t > B:
        raise ValueError(f"t={t} is infeasible for the box bound {B}")
    w = q.weights
    n = w.size
    rng = np.random.default_rng(config.seed)
    starts = [np.full(n, float(t))] + [rng.uniform(-B, B, n) for _ in range(config.starts - 1)]
    moves = np.concatenate([np.eye(n), -np.eye(n)])

    def objective(U):
        with np.errstate(divide="ignore"):
            return np.log(f.values(np.exp(U)))

    best = np.inf
    for u0 in starts:
        u = _project(u0[None, :], w, t, B)[0]
        val = objective(u[None, :])[0]
        step = config.initial_step
        count = 0
        while step >= config.min_step and count < config.max_moves:
            cand = _project(u + step * moves, w, t, B)
            vals = objective(cand)
            j = int(np.argmin(vals))
            if vals[j] < val - 1e-15:
                u, val = cand[j], vals[j]
            else:
                step *= 0.5
            count += 1
        best = min(best, val)
    return float(best)


def recover_r_grid_oracle(f: RiskFunctional, q: Scenario, t: float, bound: float = 8.0,
                          resolution: float = 1.0 / 512) -> float:
    """Dense-grid upper estimate of the recovery infimum for two atoms.

    A monotone f attains the infimum on the constraint boundary, so for each
    grid value of u1 only the smallest feasible u2 is evaluated.
    """
    if f.space.n != 2:
        raise ValueError("grid oracle is implemented for two atoms")
    w1, w2 = q.weights
    u1 = np.arange(-bound, bound + resolution / 2, resolution)
    if w2 > 0:
        u2 = np.maximum(-bound, (t - w1 * u1) / w2)
        ok = u2 <= bound
    else:
        u2 = np.full_like(u1, -bound)
        ok = w1 * u1 >= t
    U = np.stack([u1[ok], u2[ok]], axis=1)
    with np.errstate(divide="ignore"):
        return float(np.min(np.log(f.values(np.exp(U)))))


def fit_qc_ph_form(f: RiskFunctional, q: Scenario, t_grid, config: RecoveryConfig = RecoveryConfig()):
    """Least-squares fit of R(t) = d_plus t^+ - d_minus t^- to recovered values.

    Returns (d_plus, d_minus, max_abs_residual).
    """
    t = np.asarray(t_grid, dtype=float)
    r = np.array([recover_r(f, q, float(s), config) for s in t])
    pos, neg = t > 0, t < 0
    d_plus = float(t[pos] @ r[pos] / (t[pos] @ t[pos])) if pos.any() else 0.0
    d_minus = float(t[neg] @ r[neg] / (t[neg] @ t[neg])) if neg.any() else 0.0
    fitted = d_plus * np.maximum(t, 0) + d_minus * np.minimum(t, 0)
    return d_plus, d_minus, float(np.max(np.abs(fitted - r)))


# ---------------------------------------------------------------------------
# grid checks on R itself


def _grid_report(name: str, lhs: np.ndarray, rhs: np.ndarray, inputs: dict, tol: float, equality: bool = False):
    diff = lhs - rhs
    margin = np.abs(diff) if equality else diff
    scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    ratio = np.where(np.isfinite(margin), margin / scale, 0.0).ravel()
    worst = int(np.argmax(ratio))
    if ratio[worst] <= tol:
        return PropertyResult(name, True, ratio.size, tol, None, float(ratio[worst]))
    picked = {k: float(np.ravel(np.broadcast_to(v, lhs.shape))[worst]) for k, v in inputs.items()}
    cex = Counterexample(picked, float(lhs.ravel()[worst]), float(rhs.ravel()[worst]), float(ratio[worst]))
    return PropertyResult(name, False, ratio.size, tol, cex, float(ratio[worst]))


def _tkh_grid(qs_len: int, t_grid, h_grid):
    t = np.asarray(t_grid, dtype=float)[:, None, None]
    h = np.asarray(h_grid, dtype=float)[None, :, None]
    k = np.arange(qs_len)[None, None, :]
    return np.broadcast_arrays(t, h, k)


def check_expansive(r: RFunctional, qs: ScenarioSet, t_grid=None, h_grid=None, tol: float = 1e-9) -> PropertyReport:
    """Grid check of R(t+h) >= R(t) + h in additive, multiplicative and geometric form."""
    t_grid = np.linspace(-4, 4, 81) if t_grid is None else t_grid
    h_grid = np.linspace(0, 2, 21) if h_grid is None else h_grid
    t, h, k = _tkh_grid(len(qs), t_grid, h_grid)
    inputs = {"t": t, "h": h, "k": k}
    add = _grid_report("additive", r(t, k) + h, r(t + h, k), inputs, tol)
    mult = _grid_report("multiplicative", np.exp(h) * np.exp(r(t, k)), np.exp(r(t + h, k)), inputs, tol)
    s, s2 = np.exp(t), np.exp(t + h)
    R = lambda v: np.exp(r(np.log(v), k))  # noqa: E731
    geo = _grid_report("geometric", R(s) * np.exp(np.abs(np.log(s2) - np.log(s))), R(s2), inputs, tol)
    verdicts = {add.holds, mult.holds, geo.holds}
    agree_cex = None if len(verdicts) == 1 else Counterexample({}, float(add.holds), float(geo.holds), 1.0)
    agree = PropertyResult("formulations_agree", len(verdicts) == 1, 3, 0.0, agree_cex, 0.0,
                           {"additive": add.holds, "multiplicative": mult.holds, "geometric": geo.holds})
    return PropertyReport({"expansive": replace_name(add, "expansive"), "multiplicative": mult,
                           "geometric": geo, "formulations_agree": agree})


def replace_name(res: PropertyResult, name: str) -> PropertyResult:
    return PropertyResult(name, res.holds, res.samples, res.tolerance, res.counterexample, res.max_margin, res.detail)


def check_translation_invariant_in_t(r: RFunctional, qs: ScenarioSet, t_grid=None, h_grid=None,
                                     tol: float = 1e-9) -> PropertyReport:
    t_grid = np.linspace(-4, 4, 81) if t_grid is None else t_grid
    h_grid = np.linspace(-2, 2, 41) if h_grid is None else h_grid
    t, h, k = _tkh_grid(len(qs), t_grid, h_grid)
    res = _grid_report("translation_invariant_in_t", r(t + h, k), r(t, k) + h, {"t": t, "h": h, "k": k}, tol,
                       equality=True)
    return PropertyReport({"translation_invariant_in_t": res})


def check_r_monotone(r: RFunctional, qs: ScenarioSet, t_grid=None, tol: float = 1e-12) -> PropertyResult:
    t = np.linspace(-8, 8, 1601) if t_grid is None else np.asarray(t_grid)
    vals = r(t[:, None], np.arange(len(qs))[None, :])
    drop = vals[:-1] - vals[1:]
    worst = float(np.max(drop))
    if worst <= tol:
        return PropertyResult("r_monotone", True, vals.size, tol, None, worst)
    i, k = np.unravel_index(int(np.argmax(drop)), drop.shape)
    cex = Counterexample({"t": float(t[i]), "t_next": float(t[i + 1]), "k": int(k)},
                         float(vals[i, k]), float(vals[i + 1, k]), worst)
    return PropertyResult("r_monotone", False, vals.size, tol, cex, worst)


def r_is_law_invariant(m: DualMeasure, tol: float = 1e-12) -> bool:
    """R(.; Q) must agree for scenarios whose densities are rearrangements of each other."""
    t = np.linspace(-8, 8, 161)
    dens = [np.sort(s.density) for s in m.qs]
    for i, j in itertools.combinations(range(len(m.qs)), 2):
        if np.allclose(dens[i], dens[j], rtol=0, atol=tol):
            if not np.allclose(m.r(t, i), m.r(t, j), rtol=0, atol=tol):
                return False
    return True


# ---------------------------------------------------------------------------
# law-invariant representations (equiprobable atoms)


def _require_law_invariant(m: DualMeasure, x: PositivePosition) -> None:
    _check_same(m.space, x.space)
    if not m.space.equiprobable:
        raise NotEquiprobableError("law-invariant representations need equiprobable atoms")
    if not r_is_law_invariant(m):
        raise ValueError("R-functional is not law invariant across the scenario set")


def law_invariant_dual_eval(m: DualMeasure, x: PositivePosition) -> float:
    """max_k exp(R(integral of log q_X against q_{dQ_k/dP}; k))."""
    _require_law_invariant(m, x)
    logs = np.log(x.values)
    p = m.space.p
    t = np.array([comonotone_integral_values(logs, s.density, p) for s in m.qs])
    return float(np.exp(np.max(m.r(t, np.arange(len(m.qs))))))


def law_invariant_bruteforce(m: DualMeasure, x: PositivePosition) -> float:
    """Same supremum by enumerating every density permutation of every scenario."""
    _require_law_invariant(m, x)
    logs = np.log(x.values)
    p = m.space.p
    best = -np.inf
    for k, s in enumerate(m.qs):
        for d in set(itertools.permutations(s.density.tolist())):
            best = max(best, float(m.r((p * np.asarray(d)) @ logs, k)))
    return float(np.exp(best))


def arar_mixing_measure(q: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Atoms and masses of m_Q(d alpha) = (1 - alpha) d qhat(alpha).

    qhat is the ascending rearrangement of the density, extended by its right
    limit at 0 for arguments <= 0, so its first jump (at alpha = 0) has the
    size of the smallest density value.
    """
    if not q.space.equiprobable:
        raise NotEquiprobableError("mixing measure construction needs equiprobable atoms")
    n = q.space.n
    d = np.sort(q.density)
    alphas = np.arange(n) / n
    jumps = np.diff(np.concatenate([[0.0], d]))
    masses = (1.0 - alphas) * jumps
    if abs(masses.sum() - 1.0) > 1e-10:
        raise RepresentationError(f"mixing measure has total mass {masses.sum()!r}")
    return alphas, masses


def arar_mixture_eval(m: DualMeasure, x: PositivePosition) -> float:
    """max_k exp(R(sum_j m_k(alpha_j) log ARaR_{alpha_j}(X); k))."""
    _require_law_invariant(m, x)
    logs = np.log(x.values)
    p = m.space.p
    t = np.empty(len(m.qs))
    for k, s in enumerate(m.qs):
        alphas, masses = arar_mixing_measure(s)
        mix = sum(mk * float(avar_values(logs, p, a)) for a, mk in zip(alphas, masses) if mk != 0.0)
        direct = comonotone_integral_values(logs, s.density, p)
        if abs(mix - direct) > 1e-9:
            raise RepresentationError(f"mixture {mix!r} differs from comonotone integral {direct!r}")
        t[k] = mix
    return float(np.exp(np.max(m.r(t, np.arange(len(m.qs))))))


def with_midpoints(m: DualMeasure) -> DualMeasure:
    """Augment the scenario set with pairwise midpoints.

    Per-scenario penalties of a midpoint are the average of its parents, an
    upper bound for any convex penalty.
    """
    qs = m.qs.with_midpoints()
    r = m.r
    if r.n_params() is not None:
        c = list(r.params["c"])
        c += [0.5 * (a + b) for a, b in itertools.combinations(r.params["c"], 2)]
        r = RFunctional(r.family, {**r.params, "c": c})
    return DualMeasure(r, qs)
