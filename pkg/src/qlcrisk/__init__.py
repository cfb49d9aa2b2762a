"""Return (geometric) risk measures on finite scenario spaces."""

from .acceptance import (
    LogRiskAcceptanceFamily,
    check_acceptance_relation,
    check_B_positively_homogeneous,
    check_B_star_shaped,
    check_family_axioms,
    default_levels,
    family_from_measure,
    measure_from_family,
)
from .allocation import (
    AllocationResult,
    allocate,
    builtin_acceptance_set,
    car_acceptance,
    car_proportional,
    car_subdifferential,
    optimal_scenario,
)
from .correspondence import (
    PropertyReport,
    PropertyResult,
    RiskFunctional,
    SamplerConfig,
    bridge_equivalences,
    check_properties,
    check_property,
    classify,
    paper_counterexamples,
    to_monetary,
    to_return,
)
from .duality import DualMeasure, RFunctional, dual_argmax, dual_eval, dual_eval_building_block, recover_r
from .portfolio import (
    FrontierPoint,
    LogConstraintProblem,
    PortfolioProblem,
    efficient_frontier,
    generalized_frontier_logconstraint,
    solve_portfolio,
    wealth_buy_and_hold,
    wealth_rebalanced,
)
from .prob_core import Position, PositivePosition, ProbSpace, Scenario, ScenarioSet
from .specs import MeasureSpec, builtin_specs, default_space

__version__ = "0.1.0"
