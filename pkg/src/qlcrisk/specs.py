"""Closed, JSON-serialisable descriptions of risk measures.

A ``MeasureSpec`` names a family and its parameters. Building it against a
probability space (and optionally a scenario set) yields a matched pair of
functionals: the monetary one on real positions and the return one on
positive positions. Where a closed form exists on both sides each side is
computed natively rather than by composing with exp/log, so the pair can be
checked against the correspondence ``trho(X) = exp(rho(log X))``.

JSON layout::

    {"family": "dual", "side": "return",
     "params": {"r": {"family": "floor", "C": 1.0}, "scenarios": "all"}}

``scenarios`` is "all", "P" (the reference measure) or a list of 0-based
indices / density column names ("d1", ...) into the ingested scenario set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .correspondence import RiskFunctional, to_monetary
from .duality import DualMeasure, RFunctional, with_midpoints
from .measures import (
    MeanValueLoss,
    OrliczFunction,
    arar_direct_values,
    avar_values,
    entropic_values,
    h0_values,
    hg_premium,
    mean_value_values,
    orlicz_values,
    pnorm_values,
)
from .prob_core import Position, ProbSpace, Scenario, ScenarioSet, quantile_values

MEASURE_FAMILIES = (
    "var",
    "avar",
    "arar",
    "pnorm",
    "robust_pnorm",
    "robust_discounted_pnorm",
    "orlicz",
    "h0",
    "logconvex",
    "mean_value",
    "dual",
    "hg",
)


@dataclass(frozen=True, eq=False)
class MeasureSpec:
    family: str
    params: dict = field(default_factory=dict)
    side: str = "return"
    name: str | None = None

    def __post_init__(self):
        if self.family not in MEASURE_FAMILIES:
            raise ValueError(f"unknown measure family {self.family!r}")
        if self.side not in ("monetary", "return"):
            raise ValueError(f"side must be 'monetary' or 'return', not {self.side!r}")
        p = self.params
        if self.family in ("var", "avar", "arar"):
            alpha = p.get("alpha")
            lo_ok = alpha is not None and (alpha >= 0 if self.family != "var" else alpha > 0)
            if not (lo_ok and alpha < 1):
                raise ValueError(f"{self.family} needs alpha in {'(0,1)' if self.family == 'var' else '[0,1)'}")
        if "gamma" in p and not p["gamma"] > 0:
            raise ValueError("gamma must be positive")
        if "c" in p and np.any(np.asarray(p["c"], dtype=float) < 0):
            raise ValueError("penalties must be nonnegative")

    @property
    def label(self) -> str:
        return self.name or self.family

    # serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"family": self.family, "params": self.params, "side": self.side}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "MeasureSpec":
        unknown = set(d) - {"family", "params", "side", "name"}
        if unknown:
            raise ValueError(f"unknown measure spec keys {sorted(unknown)}")
        return cls(d["family"], dict(d.get("params", {})), d.get("side", "return"), d.get("name"))

    @classmethod
    def from_json(cls, text: str) -> "MeasureSpec":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    # building -----------------------------------------------------------
    def pair(self, space: ProbSpace, scenarios: ScenarioSet | None = None) -> tuple[RiskFunctional, RiskFunctional]:
        """(monetary, return) functionals for this spec."""
        mon, ret = _build(self, space, scenarios)
        return (RiskFunctional(mon, space, "monetary", self.label, self),
                RiskFunctional(ret, space, "return", self.label, self))

    def functional(self, space: ProbSpace, scenarios: ScenarioSet | None = None) -> RiskFunctional:
        mon, ret = self.pair(space, scenarios)
        return mon if self.side == "monetary" else ret

    def dual_measure(self, space: ProbSpace, scenarios: ScenarioSet | None = None) -> DualMeasure:
        if self.family != "dual":
            raise ValueError("only dual specs carry a dual measure")
        return _dual(self.params, space, scenarios)


def resolve_scenarios(ref, space: ProbSpace, scenarios: ScenarioSet | None) -> ScenarioSet:
    if ref == "P" or (ref == "all" and scenarios is None):
        return ScenarioSet([Scenario.reference(space)])
    if scenarios is None:
        raise ValueError("spec refers to scenarios but none were supplied")
    if ref == "all":
        return scenarios
    picked = []
    for item in ref:
        if isinstance(item, str):
            if not item.startswith("d") or not item[1:].isdigit():
                raise ValueError(f"bad scenario reference {item!r}")
            item = int(item[1:]) - 1
        if not 0 <= int(item) < len(scenarios):
            raise ValueError(f"scenario index {item} out of range")
        picked.append(scenarios[int(item)])
    return ScenarioSet(picked)


def _penalties(params: dict, k: int) -> np.ndarray:
    c = np.asarray(params.get("c", np.zeros(k)), dtype=float)
    if c.shape != (k,):
        raise ValueError(f"need {k} penalties, got {c.size}")
    return c


def _dual(params: dict, space: ProbSpace, scenarios: ScenarioSet | None) -> DualMeasure:
    qs = resolve_scenarios(params.get("scenarios", "all"), space, scenarios)
    rd = dict(params["r"])
    r = RFunctional(rd.pop("family"), rd)
    m = DualMeasure(r, qs)
    return with_midpoints(m) if params.get("midpoints") else m


def _orlicz(d: dict) -> OrliczFunction:
    return OrliczFunction(d["tag"], float(d.get("p", 1.0)), float(d.get("level_alpha", 0.0)),
                          tuple(tuple(map(float, r)) for r in d["table"]) if d.get("table") else None)


def _loss(d: dict) -> MeanValueLoss:
    return MeanValueLoss(d["tag"], tuple(tuple(map(float, r)) for r in d["table"]) if d.get("table") else None)


def _build(spec: MeasureSpec, space: ProbSpace, scenarios: ScenarioSet | None):
    fam, prm, p = spec.family, spec.params, space.p
    if fam == "var":
        a = prm["alpha"]
        f = lambda v: quantile_values(v, p, a)  # noqa: E731
        return f, f
    if fam in ("avar", "arar"):
        a = prm["alpha"]
        return (lambda z: avar_values(z, p, a)), (lambda x: arar_direct_values(x, p, a))
    if fam == "pnorm":
        g = prm["gamma"]
        return (lambda z: entropic_values(z, p, g)), (lambda x: pnorm_values(x, p, g))
    if fam in ("robust_pnorm", "robust_discounted_pnorm"):
        g = prm["gamma"]
        qs = resolve_scenarios(prm.get("scenarios", "all"), space, scenarios)
        c = _penalties(prm, len(qs)) if fam == "robust_discounted_pnorm" else np.zeros(len(qs))
        W = qs.weights

        def mon(z):
            return np.max(np.stack([entropic_values(z, w, g) - ck for w, ck in zip(W, c)], axis=-1), axis=-1)

        return mon, (lambda x: np.max(np.exp(-c) * pnorm_values(x, W.T, g), axis=-1))
    if fam == "orlicz":
        phi = _orlicz(prm["phi"])
        w = resolve_scenarios(prm.get("scenario", "P"), space, scenarios)[0].weights

        def ret(x):
            return orlicz_values(x, w, phi)

        if phi.tag in ("power", "linear"):
            pp = phi.p if phi.tag == "power" else 1.0
            shift = np.log(1.0 - phi.level_alpha) / pp
            return (lambda z: entropic_values(z, w, pp) - shift), ret
        if phi.tag == "canonical_log":
            return (lambda z: z @ w + phi.level_alpha), ret
        rf = RiskFunctional(ret, space, "return")
        return to_monetary(rf).fn, ret
    if fam == "h0":
        w = resolve_scenarios(prm.get("scenario", "P"), space, scenarios)[0].weights
        return (lambda z: z @ w), (lambda x: h0_values(x, w))
    if fam == "logconvex":
        qs = resolve_scenarios(prm.get("scenarios", "all"), space, scenarios)
        c, W = _penalties(prm, len(qs)), qs.weights
        return (lambda z: np.max(z @ W.T - c, axis=-1)), (lambda x: np.max(np.exp(-c) * h0_values(x, W.T), axis=-1))
    if fam == "mean_value":
        qs = resolve_scenarios(prm.get("scenarios", "all"), space, scenarios)
        ell, W = _loss(prm["ell"]), qs.weights

        def ret(x):
            with np.errstate(divide="ignore"):
                return np.exp(mean_value_values(np.log(x), W, ell))

        return (lambda z: mean_value_values(z, W, ell)), ret
    if fam == "dual":
        m = _dual(prm, space, scenarios)
        return m.monetary_values, m.values
    if fam == "hg":
        phi = _orlicz(prm["phi"])
        rf = RiskFunctional.from_scalar(lambda v: hg_premium(Position(space, v), phi), space, "return")
        return to_monetary(rf).fn, rf.fn
    raise AssertionError(fam)


# ---------------------------------------------------------------------------
# built-in catalogue


def default_space() -> tuple[ProbSpace, ScenarioSet]:
    """Four equiprobable atoms and three scenarios (P and two rearranged tilts)."""
    space = ProbSpace.uniform(4)
    qs = ScenarioSet([
        Scenario.reference(space),
        Scenario(space, [0.4, 0.8, 1.2, 1.6]),
        Scenario(space, [1.6, 1.2, 0.8, 0.4]),
    ])
    return space, qs


def builtin_specs() -> list[MeasureSpec]:
    """Named specs used by the bridge, acceptance and round-trip suites.

    Scenario references assume a three-scenario set such as ``default_space``.
    """
    c3 = [0.0, 0.3, 0.6]
    table = [[-4.0, -4.0], [0.0, 0.0], [1.0, 2.0], [4.0, 8.0]]
    S = MeasureSpec
    return [
        S("var", {"alpha": 0.5}, name="var_0.5"),
        S("var", {"alpha": 0.9}, name="var_0.9"),
        S("arar", {"alpha": 0.5}, name="arar_0.5"),
        S("arar", {"alpha": 0.8}, name="arar_0.8"),
        S("pnorm", {"gamma": 0.5}, name="pnorm_0.5"),
        S("pnorm", {"gamma": 2.0}, name="pnorm_2"),
        S("robust_pnorm", {"gamma": 1.0}, name="robust_pnorm_1"),
        S("robust_discounted_pnorm", {"gamma": 2.0, "c": c3}, name="robust_discounted_pnorm_2"),
        S("orlicz", {"phi": {"tag": "power", "p": 2.0}}, name="orlicz_power_2"),
        S("orlicz", {"phi": {"tag": "power", "p": 3.0, "level_alpha": 0.2}}, name="orlicz_power_3_level_0.2"),
        S("orlicz", {"phi": {"tag": "canonical_log", "level_alpha": 0.1}}, name="orlicz_log_level_0.1"),
        S("h0", {"scenario": "P"}, name="h0_P"),
        S("h0", {"scenario": [1]}, name="h0_Q2"),
        S("logconvex", {"c": [0.0, 0.0, 0.0]}, name="logcoherent"),
        S("logconvex", {"c": c3}, name="logconvex"),
        S("mean_value", {"ell": {"tag": "linear_quadratic"}, "scenarios": "P"}, name="mean_value_lq"),
        S("dual", {"r": {"family": "coherent"}}, name="dual_coherent"),
        S("dual", {"r": {"family": "convex_penalty", "c": c3}}, name="dual_convex_penalty"),
        S("dual", {"r": {"family": "supq_penalty", "c": c3, "kappa": 0.5}}, name="dual_supq_penalty"),
        S("dual", {"r": {"family": "floor", "C": 0.5}}, name="dual_floor"),
        S("dual", {"r": {"family": "log_floor", "a": 0.5}}, name="dual_log_floor"),
        S("dual", {"r": {"family": "ph_kink", "d_plus": 1.0, "d_minus": 0.5}}, name="dual_ph_kink"),
        S("dual", {"r": {"family": "user_table", "table": table}}, name="dual_user_table"),
    ]
