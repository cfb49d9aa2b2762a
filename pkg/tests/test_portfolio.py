import numpy as np
import pytest

from qlcrisk.portfolio import (
    LogConstraintProblem,
    PortfolioProblem,
    SolverConfig,
    check_diversification_inequalities,
    check_frontier,
    check_generalized_frontier,
    efficient_frontier,
    generalized_frontier_logconstraint,
    sample_wealth_pairs,
    simplex_grid,
    solve_portfolio,
    solve_portfolio_grid_oracle,
    wealth_buy_and_hold,
    wealth_continuous_limit,
    wealth_rebalanced,
)
from qlcrisk.prob_core import PositivePosition, ProbSpace
from qlcrisk.specs import MeasureSpec, default_space

SPACE, QS = default_space()
LOGCOH = MeasureSpec("logconvex", {"c": [0.0, 0.0, 0.0]}).functional(SPACE, QS)


def test_wealth_examples():
    paths = np.array([[2.0, 0.5], [1.0, 1.0]])
    np.testing.assert_allclose(wealth_buy_and_hold([0.5, 0.5], paths), [1.0, 1.5, 1.0])
    np.testing.assert_allclose(wealth_rebalanced([0.5, 0.5], paths), [1.0, 1.5, 1.125])
    np.testing.assert_allclose(wealth_continuous_limit([0.5, 0.5], paths), [1.0, np.sqrt(2), 1.0])
    with pytest.raises(ValueError):
        wealth_rebalanced([0.5, 0.5], paths, steps_per_period=0)
    with pytest.raises(ValueError):
        wealth_buy_and_hold([0.7, 0.7], paths)
    with pytest.raises(ValueError):
        wealth_buy_and_hold([0.5, 0.5], -paths)


def test_rebalancing_error_is_first_order():
    rng = np.random.default_rng(0)
    paths = np.exp(rng.normal(0, 0.2, (3, 10)))
    w = np.array([0.2, 0.3, 0.5])
    lim = wealth_continuous_limit(w, paths)[-1]
    e100 = abs(wealth_rebalanced(w, paths, 1.0, 100)[-1] - lim)
    e1000 = abs(wealth_rebalanced(w, paths, 1.0, 1000)[-1] - lim)
    assert 8 <= e100 / e1000 <= 12


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert g.shape == (15, 3)
    np.testing.assert_allclose(g.sum(axis=1), 1.0)
    assert np.all(g >= 0)


def test_rebalanced_diversification_holds_buy_and_hold_can_fail():
    rng = np.random.default_rng(11)
    va, vb, w = sample_wealth_pairs(4, 200, rng)
    assert check_diversification_inequalities(LOGCOH, va, vb, w, "rebalanced").holds
    x = np.array([1.0, np.exp(3.0), 1.0, np.exp(3.0)])
    y = np.full(4, np.exp(2.0))
    two = MeasureSpec("h0").functional(SPACE)
    res = check_diversification_inequalities(two, x[None], y[None], 0.5, "buy_and_hold")
    assert not res.holds and res.counterexample.lhs > res.counterexample.rhs
    with pytest.raises(ValueError):
        check_diversification_inequalities(two, x[None], y[None], 0.5, "weekly")


def _assets(rng, n):
    return [PositivePosition(SPACE, np.exp(rng.normal(0.0, 0.4, 4))) for _ in range(n)]


def test_dominating_asset_is_chosen():
    a = PositivePosition(SPACE, [0.5, 0.6, 0.7, 0.8])
    b = PositivePosition(SPACE, [1.0, 1.2, 1.4, 1.6])
    pt = solve_portfolio(PortfolioProblem([a, b], np.inf, LOGCOH))
    np.testing.assert_allclose(pt.w_star, [1.0, 0.0], atol=1e-9)
    assert pt.value == pytest.approx(LOGCOH(a), rel=1e-12)


def test_infeasible_target():
    rng = np.random.default_rng(1)
    p = PortfolioProblem(_assets(rng, 2), -10.0, LOGCOH)
    assert not p.feasible
    assert solve_portfolio(p).status == "infeasible"
    assert solve_portfolio_grid_oracle(p).status == "infeasible"


def test_problem_validation():
    rng = np.random.default_rng(2)
    with pytest.raises(ValueError):
        PortfolioProblem(_assets(rng, 1), 0.0, LOGCOH)
    with pytest.raises(ValueError):
        PortfolioProblem(_assets(rng, 2), 0.0, MeasureSpec("h0", side="monetary").functional(SPACE))
    other = ProbSpace.uniform(4)
    with pytest.raises(ValueError):
        PortfolioProblem([PositivePosition(ProbSpace.uniform(3), [1, 1, 1])] * 2, 0.0, LOGCOH)
    assert other == SPACE
    with pytest.raises(ValueError):
        solve_portfolio_grid_oracle(PortfolioProblem(_assets(rng, 4), np.inf, LOGCOH))


@pytest.mark.parametrize("seed,n", [(3, 2), (4, 3)])
def test_solver_matches_oracle(seed, n):
    rng = np.random.default_rng(seed)
    p = PortfolioProblem(_assets(rng, n), 0.0, LOGCOH)
    mu = p.mean_log_returns
    p = p.with_r(float(0.3 * mu.min() + 0.7 * mu.max()))
    got = solve_portfolio(p)
    ref = solve_portfolio_grid_oracle(p)
    assert np.log(got.value) - np.log(ref.value) <= 1e-4
    assert got.w_star @ mu <= p.r + 1e-9


def test_frontier_properties():
    rng = np.random.default_rng(5)
    p = PortfolioProblem(_assets(rng, 3), 0.0, LOGCOH)
    mu = p.mean_log_returns
    pts = efficient_frontier(p, np.linspace(mu.min() - 0.1, mu.max(), 8))
    assert pts[0].status == "infeasible"
    assert check_frontier(p, pts, rng, n_triples=5).holds
    with pytest.raises(ValueError):
        efficient_frontier(p, [1.0, 0.0])


def test_generalized_frontier():
    rng = np.random.default_rng(6)
    X = rng.normal(0.0, 0.5, (2, 4))
    V = rng.normal(0.0, 0.5, (2, 4))
    prob = LogConstraintProblem(X, V, np.ones(4), LOGCOH)
    pts = generalized_frontier_logconstraint(prob, [0.5, 1.0, 2.0], SolverConfig(seed_resolution=32))
    assert all(p.status == "optimal" for p in pts if prob.feasible(np.log(p.r)))
    rep = check_generalized_frontier(prob, [p for p in pts if p.status == "optimal"], rng, n_triples=3,
                                     config=SolverConfig(seed_resolution=32))
    assert rep.holds
    with pytest.raises(ValueError):
        LogConstraintProblem(X, V, np.ones(3), LOGCOH)
