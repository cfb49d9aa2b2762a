"""Wealth dynamics and multiplicative portfolio choice.

Gross returns Y_i are positive positions and X_i = log Y_i. A weight vector
w on the simplex yields the continuously rebalanced portfolio prod Y_i^w_i,
whose risk trho(prod Y_i^w_i) = exp(rho(sum w_i X_i)). The solvers work on
the arithmetic side, where the objective is quasi-convex in w whenever trho
is quasi-logconvex.

The constraint E[sum w_i X_i] <= r keeps the sign convention in which
positive values are losses, so raising r relaxes the constraint.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .correspondence import PropertyReport, PropertyResult, RiskFunctional, _margins, Counterexample
from .prob_core import PositivePosition

FEAS_TOL = 1e-12
ROUND_TRIP_TOL = 1e-12


# ---------------------------------------------------------------------------
# wealth dynamics


def _paths(paths) -> np.ndarray:
    g = np.atleast_2d(np.asarray(paths, dtype=float))
    if g.ndim != 2:
        raise ValueError("paths must be (assets, periods)")
    if np.any(g <= 0):
        raise ValueError("gross returns must be positive")
    return g


def _weights(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"need {n} weights, got shape {w.shape}")
    if np.any(w < -FEAS_TOL) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must lie in the simplex")
    return w


def wealth_buy_and_hold(w, paths, W0: float = 1.0) -> np.ndarray:
    """Wealth at t = 0..T when the initial split is never rebalanced.

    ``paths[i, t]`` is the gross return of asset i over period t+1.
    """
    g = _paths(paths)
    w = _weights(w, g.shape[0])
    values = np.concatenate([np.ones((g.shape[0], 1)), np.cumprod(g, axis=1)], axis=1)
    return W0 * (w @ values)


def wealth_rebalanced(w, paths, W0: float = 1.0, steps_per_period: int = 1) -> np.ndarray:
    """Wealth at period ends when weights are restored K times per period.

    Each period is split into K sub-steps of gross return g^(1/K).
    """
    if steps_per_period < 1:
        raise ValueError("steps_per_period must be >= 1")
    g = _paths(paths)
    w = _weights(w, g.shape[0])
    K = int(steps_per_period)
    per_step = w @ np.exp(np.log(g) / K)
    return W0 * np.concatenate([[1.0], np.cumprod(per_step ** K)])


def wealth_continuous_limit(w, paths, W0: float = 1.0) -> np.ndarray:
    """W0 exp(sum_i w_i r_i) with r_i the cumulative log return."""
    g = _paths(paths)
    w = _weights(w, g.shape[0])
    return W0 * np.exp(np.concatenate([[0.0], np.cumsum(w @ np.log(g))]))


def check_diversification_inequalities(trho: RiskFunctional, va: np.ndarray, vb: np.ndarray, w: np.ndarray,
                                       strategy: str, tol: float = 1e-9) -> PropertyResult:
    """trho(mix) <= max(trho(VA), trho(VB)) on sampled terminal-wealth pairs.

    ``buy_and_hold`` mixes arithmetically, w VA + (1-w) VB; ``rebalanced``
    uses the continuous-rebalancing limit VA^w VB^(1-w).
    """
    va, vb = np.atleast_2d(va), np.atleast_2d(vb)
    w = np.broadcast_to(np.asarray(w, dtype=float), va.shape[:1])[:, None]
    if strategy == "buy_and_hold":
        mix = w * va + (1 - w) * vb
        prop = "quasi_convex"
    elif strategy == "rebalanced":
        mix = va ** w * vb ** (1 - w)
        prop = "quasi_logconvex"
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    lhs = trho.values(mix)
    rhs = np.maximum(trho.values(va), trho.values(vb))
    ratio, t = _margins(prop, lhs, rhs, tol)
    worst = int(np.argmax(ratio))
    name = f"{strategy}_diversification"
    if ratio[worst] <= t:
        return PropertyResult(name, True, ratio.size, t, None, float(ratio[worst]))
    cex = Counterexample({"va": va[worst], "vb": vb[worst], "w": float(w[worst, 0])},
                         float(lhs[worst]), float(rhs[worst]), float(ratio[worst]))
    return PropertyResult(name, False, ratio.size, t, cex, float(ratio[worst]))


def sample_wealth_pairs(n_outcomes: int, n_pairs: int, rng: np.random.Generator, periods: int = 5,
                        vol: float = 0.3) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Terminal values of two assets on each outcome plus mixing weights."""
    la = rng.normal(0.0, vol, (n_pairs, n_outcomes, periods)).sum(-1)
    lb = rng.normal(0.0, vol, (n_pairs, n_outcomes, periods)).sum(-1)
    return np.exp(la), np.exp(lb), rng.uniform(0.0, 1.0, n_pairs)


# ---------------------------------------------------------------------------
# portfolio problems


@dataclass(frozen=True, eq=False)
class PortfolioProblem:
    """min trho(prod Y_i^w_i) over the simplex subject to E[sum w_i log Y_i] <= r."""

    assets: tuple[PositivePosition, ...]
    r: float
    measure: RiskFunctional

    def __post_init__(self):
        assets = tuple(self.assets)
        object.__setattr__(self, "assets", assets)
        if len(assets) < 2:
            raise ValueError("need at least two assets")
        if any(a.space != assets[0].space for a in assets) or self.measure.space != assets[0].space:
            raise ValueError("assets and measure must share one space")
        if self.measure.side != "return":
            raise ValueError("portfolio measure must be a return functional")
        if np.isnan(self.r):
            raise ValueError("target r must not be NaN")

    @property
    def n(self) -> int:
        return len(self.assets)

    @property
    def log_returns(self) -> np.ndarray:
        return np.log(np.stack([a.values for a in self.assets]))

    @property
    def mean_log_returns(self) -> np.ndarray:
        return self.log_returns @ self.measure.space.p

    @property
    def feasible(self) -> bool:
        return bool(self.mean_log_returns.min() <= self.r + FEAS_TOL)

    def with_r(self, r: float) -> "PortfolioProblem":
        return PortfolioProblem(self.assets, r, self.measure)

    def objective(self, W: np.ndarray) -> np.ndarray:
        """rho(sum_i w_i X_i) for a batch of weight rows."""
        with np.errstate(divide="ignore"):
            return np.log(self.measure.values(np.exp(np.asarray(W) @ self.log_returns)))

    def value(self, w: np.ndarray) -> float:
        """trho(prod Y_i^w_i), the return-side value."""
        return float(self.measure.values(np.prod(np.stack([a.values for a in self.assets]) ** np.asarray(w)[:, None],
                                                 axis=0)))


@dataclass(frozen=True)
class FrontierPoint:
    r: float
    w_star: np.ndarray | None
    value: float
    status: str

    def to_dict(self) -> dict:
        return {"r": self.r, "w_star": None if self.w_star is None else [float(v) for v in self.w_star],
                "value": self.value, "status": self.status}


@dataclass(frozen=True)
class SolverConfig:
    seed_resolution: int = 64
    min_step: float = 1e-5
    n_starts: int = 4
    max_seed_points: int = 200_000


def simplex_grid(n: int, m: int) -> np.ndarray:
    """All points of the simplex with coordinates in {0, 1/m, ..., 1}."""
    if n == 1:
        return np.ones((1, 1))
    cuts = np.array(list(itertools.combinations(range(m + n - 1), n - 1)))
    bars = np.concatenate([-np.ones((len(cuts), 1), int), cuts, np.full((len(cuts), 1), m + n - 1)], axis=1)
    return (np.diff(bars, axis=1) - 1) / m


def _n_grid_points(n: int, m: int) -> int:
    from math import comb
    return comb(m + n - 1, n - 1)


def _pattern_search(f, A: np.ndarray, b: np.ndarray, starts: np.ndarray, dirs: np.ndarray,
                    step0: float, min_step: float) -> tuple[np.ndarray, float]:
    """Descent over {x : A x <= b} along fixed directions with halving steps.

    Moves that would leave the polytope are shortened to its boundary, so
    optima sitting on a face are reached exactly.
    """
    best_x, best_f = None, np.inf
    Ad = dirs @ A.T
    for x in starts:
        x = x.copy()
        fx = float(f(x[None])[0])
        step = step0
        while step >= min_step:
            slack = np.maximum(b - A @ x, 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                lim = np.where(Ad > 1e-15, slack / Ad, np.inf)
            tmax = lim.min(axis=1)
            t = np.minimum(step, tmax)
            ok = t > 0
            if not np.any(ok):
                step /= 2
                continue
            cand = x + t[ok, None] * dirs[ok]
            fc = f(cand)
            j = int(np.argmin(fc))
            if fc[j] < fx:
                x, fx = cand[j], float(fc[j])
            else:
                step /= 2
        if fx < best_f:
            best_x, best_f = x, fx
    return best_x, best_f


def _simplex_dirs(n: int, mu: np.ndarray | None) -> np.ndarray:
    dirs = []
    for i, j in itertools.permutations(range(n), 2):
        d = np.zeros(n)
        d[i], d[j] = 1.0, -1.0
        dirs.append(d)
    if mu is not None:
        # directions in the hyperplane mu.w = const within three-asset faces
        for idx in itertools.combinations(range(n), 3):
            sub = np.cross(np.ones(3), mu[list(idx)])
            if np.linalg.norm(sub) < 1e-15:
                continue
            sub /= np.abs(sub).max()
            d = np.zeros(n)
            d[list(idx)] = sub
            dirs += [d, -d]
    return np.array(dirs)


def _simplex_polytope(n: int, mu: np.ndarray, r: float) -> tuple[np.ndarray, np.ndarray]:
    A, b = -np.eye(n), np.zeros(n)
    if np.isfinite(r):
        A, b = np.vstack([A, mu]), np.append(b, r + FEAS_TOL)
    return A, b


def _seed_grid(p: PortfolioProblem, config: SolverConfig) -> np.ndarray:
    m = config.seed_resolution
    while m > 1 and _n_grid_points(p.n, m) > config.max_seed_points:
        m //= 2
    return simplex_grid(p.n, m)


def solve_portfolio(p: PortfolioProblem, config: SolverConfig = SolverConfig(),
                    seeds: np.ndarray | None = None) -> FrontierPoint:
    """Grid-seeded pattern search for the minimum-risk weights.

    ``seeds`` are optional feasible warm starts; the result is never worse
    than the best of them.
    """
    if not p.feasible:
        return FrontierPoint(p.r, None, np.inf, "infeasible")
    mu = p.mean_log_returns
    G = _seed_grid(p, config)
    feas = G @ mu <= p.r + FEAS_TOL
    G = G[feas]
    # vertices of the feasible polytope may fall between grid points; the
    # feasible vertex with lowest mean always exists
    fG = p.objective(G)
    order = np.argsort(fG, kind="stable")[: config.n_starts]
    starts = [G[order]]
    if seeds is not None:
        seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
        starts.append(seeds[(seeds @ mu <= p.r + FEAS_TOL) & np.all(seeds >= -FEAS_TOL, axis=1)])
    starts = np.concatenate(starts)
    A, b = _simplex_polytope(p.n, mu, p.r)
    dirs = _simplex_dirs(p.n, mu if np.isfinite(p.r) else None)
    w, fw = _pattern_search(p.objective, A, b, starts, dirs, 1.0 / config.seed_resolution, config.min_step)
    w = np.clip(w, 0.0, None)
    return FrontierPoint(p.r, w, float(np.exp(fw)), "optimal")


def _boundary_points(n: int, mu: np.ndarray, r: float, m: int) -> np.ndarray:
    """Points of the simplex on the face mu.w = r, sampled along a 1/m grid."""
    pts = []
    if n == 2:
        if mu[0] != mu[1]:
            a = (r - mu[1]) / (mu[0] - mu[1])
            if 0 <= a <= 1:
                pts.append([a, 1 - a])
    elif n == 3:
        for k in range(3):
            i, j = [x for x in range(3) if x != k]
            if mu[i] == mu[j]:
                continue
            for wk in np.arange(m + 1) / m:
                rest = 1 - wk
                a = (r - mu[k] * wk - mu[j] * rest) / (mu[i] - mu[j])
                if -FEAS_TOL <= a <= rest + FEAS_TOL:
                    w = np.zeros(3)
                    w[k], w[i], w[j] = wk, min(max(a, 0), rest), rest - min(max(a, 0), rest)
                    pts.append(w)
    return np.array(pts).reshape(-1, n)


def solve_portfolio_grid_oracle(p: PortfolioProblem, resolution: int = 512) -> FrontierPoint:
    """Exhaustive search on the 1/resolution simplex grid plus the constraint face (n <= 3)."""
    if p.n > 3:
        raise ValueError("grid oracle is limited to three assets")
    if not p.feasible:
        return FrontierPoint(p.r, None, np.inf, "infeasible")
    mu = p.mean_log_returns
    G = simplex_grid(p.n, resolution)
    if np.isfinite(p.r):
        G = np.concatenate([G, _boundary_points(p.n, mu, p.r, resolution)])
        G = G[G @ mu <= p.r + FEAS_TOL]
    best_f, best_w = np.inf, None
    for chunk in np.array_split(G, max(1, len(G) // 20000)):
        f = p.objective(chunk)
        j = int(np.argmin(f))
        if f[j] < best_f:
            best_f, best_w = float(f[j]), chunk[j]
    return FrontierPoint(p.r, best_w, float(np.exp(best_f)), "optimal")


def efficient_frontier(p: PortfolioProblem, r_grid, config: SolverConfig = SolverConfig()) -> list[FrontierPoint]:
    """Solve along an ascending r grid, warm-starting from the previous optimum."""
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(np.diff(r_grid) < 0):
        raise ValueError("r grid must be ascending")
    out, prev = [], []
    for r in r_grid:
        pt = solve_portfolio(p.with_r(float(r)), config, np.array(prev) if prev else None)
        if pt.status == "optimal":
            prev.append(pt.w_star)
        out.append(pt)
    return out


def check_frontier(p: PortfolioProblem, points: list[FrontierPoint], rng: np.random.Generator,
                   n_triples: int = 20, tol: float = 1e-6, config: SolverConfig = SolverConfig()) -> PropertyReport:
    """Nonincreasing values along the grid and quasi-convexity on sampled (r1, r2, a)."""
    opt = [q for q in points if q.status == "optimal"]
    vals = np.array([q.value for q in opt])
    inc = np.diff(vals)
    res = {}
    if inc.size == 0 or inc.max() <= tol:
        res["nonincreasing"] = PropertyResult("nonincreasing", True, inc.size, tol, None,
                                              float(inc.max()) if inc.size else 0.0)
    else:
        i = int(np.argmax(inc))
        res["nonincreasing"] = PropertyResult("nonincreasing", False, inc.size, tol,
                                              Counterexample({"r1": opt[i].r, "r2": opt[i + 1].r},
                                                             float(vals[i + 1]), float(vals[i]), float(inc[i])),
                                              float(inc[i]))
    worst, cex = -np.inf, None
    for _ in range(n_triples if len(opt) >= 2 else 0):
        i, j = sorted(rng.choice(len(opt), 2, replace=False))
        a = rng.uniform()
        ra = a * opt[i].r + (1 - a) * opt[j].r
        mid = solve_portfolio(p.with_r(ra), config, np.array([q.w_star for q in opt[: i + 1]]))
        margin = mid.value - max(opt[i].value, opt[j].value)
        if margin > worst:
            worst = margin
            cex = Counterexample({"r1": opt[i].r, "r2": opt[j].r, "alpha": a}, mid.value,
                                 max(opt[i].value, opt[j].value), margin)
    holds = worst <= tol
    res["quasi_convex"] = PropertyResult("quasi_convex", holds, n_triples if len(opt) >= 2 else 0, tol,
                                         None if holds else cex, float(max(worst, 0.0)) if np.isfinite(worst) else 0.0)
    return PropertyReport(res)


# ---------------------------------------------------------------------------
# generalized frontier with the log constraint family


@dataclass(frozen=True, eq=False)
class LogConstraintProblem:
    """min trho(G prod_i w_i^V_i) over w in [eps, W_max]^n with E[sum X_i log w_i] <= log r.

    ``X`` are the positions in the constraint, ``V`` the exponent positions
    and ``G`` a fixed positive base position.
    """

    X: np.ndarray
    V: np.ndarray
    G: np.ndarray
    measure: RiskFunctional
    eps: float = 1e-3
    w_max: float = 1.0
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        p = self.measure.space.p
        object.__setattr__(self, "weights", p)
        for name in ("X", "V"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float))
        if self.X.shape != self.V.shape or self.X.shape[1] != p.size or self.G.shape != (p.size,):
            raise ValueError("X, V must be (assets, outcomes) and G (outcomes,)")
        if not 0 < self.eps < self.w_max:
            raise ValueError("need 0 < eps < w_max")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def mu(self) -> np.ndarray:
        return self.X @ self.weights

    def log_objective(self, U: np.ndarray) -> np.ndarray:
        """log trho(G exp(sum_i u_i V_i)) for rows u = log w."""
        return np.log(self.measure.values(self.G * np.exp(np.asarray(U) @ self.V)))

    def feasible(self, log_r: float) -> bool:
        lo, hi = np.log(self.eps), np.log(self.w_max)
        return bool(np.sum(np.minimum(self.mu * lo, self.mu * hi)) <= log_r + FEAS_TOL)


def generalized_frontier_logconstraint(prob: LogConstraintProblem, r_grid, config: SolverConfig = SolverConfig(),
                                       seeds: dict | None = None) -> list[FrontierPoint]:
    """Per-r minimization in u = log w over a box with one linear constraint."""
    lo, hi = np.log(prob.eps), np.log(prob.w_max)
    n = prob.n
    m = max(2, int(round(config.seed_resolution ** (2 / max(n, 2)))))
    axes = np.linspace(lo, hi, m + 1)
    U = np.array(list(itertools.product(axes, repeat=n)))
    dirs = [s * e for e in np.eye(n) for s in (1.0, -1.0)]
    mu = prob.mu
    for i, j in itertools.combinations(range(n), 2):
        d = np.zeros(n)
        d[i], d[j] = mu[j], -mu[i]
        if np.abs(d).max() > 1e-15:
            d /= np.abs(d).max()
            dirs += [d, -d]
    dirs = np.array(dirs)
    out = []
    for r in np.asarray(r_grid, dtype=float):
        if r <= 0 or not prob.feasible(np.log(r)):
            out.append(FrontierPoint(float(r), None, np.inf, "infeasible"))
            continue
        lr = np.log(r)
        A = np.vstack([np.eye(n), -np.eye(n), mu])
        b = np.concatenate([np.full(n, hi), np.full(n, -lo), [lr + FEAS_TOL]])
        feas = U @ mu <= lr + FEAS_TOL
        cand = U[feas]
        if cand.size == 0:
            # the box corner minimizing the constraint is always feasible here
            cand = np.where(mu > 0, lo, hi)[None]
        f = prob.log_objective(cand)
        starts = [cand[np.argsort(f, kind="stable")[: config.n_starts]]]
        extra = (seeds or {}).get(float(r))
        if extra is not None:
            extra = np.log(np.atleast_2d(extra))
            starts.append(extra[np.all(extra @ A.T <= b + 1e-12, axis=1)])
        u, fu = _pattern_search(prob.log_objective, A, b, np.concatenate(starts), dirs,
                                (hi - lo) / m, config.min_step)
        out.append(FrontierPoint(float(r), np.exp(u), float(np.exp(fu)), "optimal"))
    return out


def check_generalized_frontier(prob: LogConstraintProblem, points: list[FrontierPoint], rng: np.random.Generator,
                               n_triples: int = 10, tol: float = 1e-6,
                               config: SolverConfig = SolverConfig()) -> PropertyReport:
    """Quasi-logconvexity of the frontier: v(r1^a r2^(1-a)) <= max(v(r1), v(r2)).

    Also checks that w1^a w2^(1-a) is feasible for r1^a r2^(1-a).
    """
    opt = [q for q in points if q.status == "optimal"]
    worst_q, worst_f, cex_q, cex_f = -np.inf, -np.inf, None, None
    count = n_triples if len(opt) >= 2 else 0
    for _ in range(count):
        i, j = rng.choice(len(opt), 2, replace=False)
        a = rng.uniform()
        ra = opt[i].r ** a * opt[j].r ** (1 - a)
        wa = opt[i].w_star ** a * opt[j].w_star ** (1 - a)
        slack = float(np.log(wa) @ prob.mu - np.log(ra))
        if slack > worst_f:
            worst_f = slack
            cex_f = Counterexample({"r1": opt[i].r, "r2": opt[j].r, "alpha": a}, slack, 0.0, slack)
        mid = generalized_frontier_logconstraint(prob, [ra], config, {float(ra): wa})[0]
        rhs = max(opt[i].value, opt[j].value)
        margin = (mid.value - rhs) / max(1.0, abs(rhs))
        if margin > worst_q:
            worst_q = margin
            cex_q = Counterexample({"r1": opt[i].r, "r2": opt[j].r, "alpha": a}, mid.value, rhs, margin)
    res = {}
    ok_f = worst_f <= 1e-9
    res["geometric_mean_feasible"] = PropertyResult("geometric_mean_feasible", ok_f, count, 1e-9,
                                                    None if ok_f else cex_f, float(max(worst_f, 0.0)))
    ok_q = worst_q <= tol
    res["quasi_logconvex"] = PropertyResult("quasi_logconvex", ok_q, count, tol,
                                            None if ok_q else cex_q, float(max(worst_q, 0.0)))
    return PropertyReport(res)
