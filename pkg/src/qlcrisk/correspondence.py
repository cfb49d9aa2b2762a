"""Monetary/return correspondence, sampled property checks and classification.

A monetary functional rho acts on real positions Z, a return functional acts
on strictly positive positions X; they are linked by
``trho(X) = exp(rho(log X))``.

Property checks are sampled, never proofs. All checks in one call share a
single batch of random tuples (Z1, Z2, a, h, ...). On the return side the
tuple is pushed through ``exp`` and the geometric properties are measured in
log units, so a monetary check and its geometric twin see the same numbers:

    translation invariance  <->  positive homogeneity
    positive homogeneity    <->  constant multiplicativity
    subadditivity           <->  submultiplicativity
    convexity               <->  logconvexity
    cash-superadditivity    <->  star-shapedness
    quasi-convexity         <->  quasi-logconvexity
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .measures import h0_values, mean_value_values, MeanValueLoss
from .prob_core import Position, ProbSpace

Side = Literal["monetary", "return"]

DEFAULT_TOL = 1e-9
CONFIRM_MARGIN = 1e-7
CONTINUITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class RiskFunctional:
    """A risk functional on a fixed finite space.

    ``fn`` maps an array of shape (..., n) to shape (...). Use
    ``from_scalar`` for callables that only handle one position at a time.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    space: ProbSpace
    side: Side
    name: str = "functional"
    spec: object | None = None

    def __post_init__(self):
        if self.side not in ("monetary", "return"):
            raise ValueError(f"side must be 'monetary' or 'return', not {self.side!r}")

    @classmethod
    def from_scalar(cls, fn: Callable[[np.ndarray], float], space: ProbSpace, side: Side, name: str = "user"):
        def batched(v: np.ndarray) -> np.ndarray:
            v = np.asarray(v, dtype=float)
            flat = v.reshape(-1, v.shape[-1])
            return np.array([fn(row) for row in flat]).reshape(v.shape[:-1])

        return cls(batched, space, side, name)

    def values(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(arr, dtype=float)), dtype=float)

    def __call__(self, x: Position | np.ndarray) -> float:
        if isinstance(x, Position):
            if x.space != self.space:
                raise ValueError("position lives on a different space")
            x = x.values
        return float(self.values(x))


def to_return(rho: RiskFunctional) -> RiskFunctional:
    """trho(X) = exp(rho(log X)), with log 0 = -inf and exp(-inf) = 0."""
    if rho.side != "monetary":
        raise ValueError("to_return expects a monetary functional")

    def fn(x):
        with np.errstate(divide="ignore"):
            return np.exp(rho.fn(np.log(x)))

    return RiskFunctional(fn, rho.space, "return", f"exp∘{rho.name}∘log", rho.spec)


def to_monetary(trho: RiskFunctional) -> RiskFunctional:
    """rho(Z) = log(trho(exp Z))."""
    if trho.side != "return":
        raise ValueError("to_monetary expects a return functional")

    def fn(z):
        with np.errstate(divide="ignore"):
            return np.log(trho.fn(np.exp(z)))

    return RiskFunctional(fn, trho.space, "monetary", f"log∘{trho.name}∘exp", trho.spec)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Counterexample:
    inputs: dict
    lhs: float
    rhs: float
    margin: float


@dataclass(frozen=True)
class PropertyResult:
    name: str
    holds: bool
    samples: int
    tolerance: float
    counterexample: Counterexample | None = None
    max_margin: float = float("-inf")
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.counterexample is None) != self.holds:
            raise ValueError("a counterexample must be present exactly when the property fails")

    def to_dict(self) -> dict:
        out = {"holds": self.holds, "samples": self.samples, "tolerance": self.tolerance}
        if self.counterexample is not None:
            c = self.counterexample
            out["counterexample"] = {
                "inputs": {k: np.asarray(v).tolist() for k, v in c.inputs.items()},
                "lhs": c.lhs,
                "rhs": c.rhs,
                "margin": c.margin,
            }
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass(frozen=True)
class PropertyReport:
    results: dict[str, PropertyResult]

    @property
    def holds(self) -> bool:
        return all(r.holds for r in self.results.values())

    def __getitem__(self, name: str) -> PropertyResult:
        return self.results[name]

    def to_dict(self) -> dict:
        return {k: v.to_dict() for k, v in self.results.items()}


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SamplerConfig:
    n_samples: int = 500
    log_range: float = 3.0
    tol: float = DEFAULT_TOL
    seed: int = 0


@dataclass(frozen=True, eq=False)
class Samples:
    """One batch of random tuples shared by every property check."""

    z1: np.ndarray
    z2: np.ndarray
    d: np.ndarray
    perm: np.ndarray
    a: np.ndarray
    h: np.ndarray
    hp: np.ndarray
    s: np.ndarray

    @property
    def n(self) -> int:
        return self.z1.shape[0]


def _class_permutation(rng: np.random.Generator, p: np.ndarray) -> np.ndarray:
    """A random permutation that only swaps atoms of equal probability."""
    perm = np.arange(p.size)
    for val in np.unique(p):
        idx = np.flatnonzero(p == val)
        perm[idx] = rng.permutation(idx)
    return perm


def draw_samples(space: ProbSpace, n_samples: int, rng: np.random.Generator, log_range: float = 3.0) -> Samples:
    n = space.n
    z1 = rng.uniform(-log_range, log_range, (n_samples, n))
    z2 = rng.uniform(-log_range, log_range, (n_samples, n))
    # half of the second positions are shifted to share the first one's mean,
    # which is where quasi-convexity type violations live
    half = n_samples // 2
    z2[:half] += (z1[:half] @ space.p - z2[:half] @ space.p)[:, None]
    d = rng.uniform(0.0, 1.0, (n_samples, n)) * (rng.uniform(size=(n_samples, n)) < 0.7)
    perm = np.stack([_class_permutation(rng, space.p) for _ in range(n_samples)])
    a = rng.uniform(0.0, 1.0, n_samples)
    a[: min(3, n_samples)] = [0.25, 0.5, 0.75][: min(3, n_samples)]
    h = rng.uniform(-1.0, 1.0, n_samples)
    hp = rng.uniform(0.0, 2.0, n_samples)
    s = rng.uniform(0.0, 3.0, n_samples)
    s[: min(3, n_samples)] = [0.5, 2.0, 3.0][: min(3, n_samples)]
    return Samples(z1, z2, d, perm, a, h, hp, s)


# ---------------------------------------------------------------------------
# property definitions

GEOMETRIC = {"constant_multiplicative", "submultiplicative", "logconvex", "star_shaped", "quasi_logconvex"}
LOG_UNITS = GEOMETRIC | {"monotone", "positively_homogeneous", "law_invariant",
                         "continuous_from_above", "continuous_from_below", "normalization"}
PROPERTIES = (
    "normalization",
    "monotone",
    "translation_invariant",
    "positively_homogeneous",
    "convex",
    "subadditive",
    "quasi_convex",
    "cash_subadditive",
    "cash_superadditive",
    "constant_multiplicative",
    "submultiplicative",
    "logconvex",
    "star_shaped",
    "quasi_logconvex",
    "law_invariant",
    "continuous_from_above",
    "continuous_from_below",
)
EQUALITIES = {"normalization", "translation_invariant", "positively_homogeneous", "constant_multiplicative",
              "law_invariant", "continuous_from_above", "continuous_from_below"}
CONTINUITY_STEP = 2.0**-30


def _eval(f: RiskFunctional, arr: np.ndarray) -> np.ndarray:
    with np.errstate(all="ignore"):
        return f.values(arr)


def _terms(f: RiskFunctional, prop: str, S: Samples):
    """Return (lhs, rhs, inputs) for the property, in the units used for margins.

    For 'le' properties a violation is lhs > rhs; for equalities it is lhs != rhs.
    """
    ret = f.side == "return"
    logu = ret and prop in LOG_UNITS
    T = (lambda v: np.log(v)) if logu else (lambda v: v)
    # base positions: positive whenever the property or the side needs it
    positive = ret or prop in GEOMETRIC
    X = np.exp(S.z1) if positive else S.z1
    Y = np.exp(S.z2) if positive else S.z2
    a = S.a[:, None]
    ev = lambda arr: _eval(f, arr)  # noqa: E731
    with np.errstate(all="ignore"):
        if prop == "normalization":
            one = np.ones((1, f.space.n))
            val = ev(one) if ret else ev(0 * one)
            return T(val), np.array([0.0]), {"x": one if ret else 0 * one}
        if prop == "monotone":
            Xu = X * np.exp(S.d) if ret else X + S.d
            return T(ev(X)), T(ev(Xu)), {"x": X, "y": Xu}
        if prop == "translation_invariant":
            h = np.maximum(S.h, -0.5 * X.min(axis=1)) if ret else S.h
            return ev(X + h[:, None]), ev(X) + h, {"x": X, "h": h}
        if prop == "positively_homogeneous":
            if ret:
                lam = np.exp(S.h)
                return np.log(ev(X * lam[:, None])), np.log(ev(X)) + S.h, {"x": X, "lam": lam}
            return ev(X * S.s[:, None]), S.s * ev(X), {"x": X, "lam": S.s}
        if prop == "constant_multiplicative":
            lhs, fx = ev(X ** S.s[:, None]), ev(X)
            if logu:
                return np.log(lhs), S.s * np.log(fx), {"x": X, "a": S.s}
            return lhs, fx ** S.s, {"x": X, "a": S.s}
        if prop == "convex":
            return ev(a * X + (1 - a) * Y), S.a * ev(X) + (1 - S.a) * ev(Y), {"x": X, "y": Y, "a": S.a}
        if prop == "subadditive":
            return ev(X + Y), ev(X) + ev(Y), {"x": X, "y": Y}
        if prop == "quasi_convex":
            return ev(a * X + (1 - a) * Y), np.maximum(ev(X), ev(Y)), {"x": X, "y": Y, "a": S.a}
        if prop == "cash_subadditive":
            return ev(X + S.hp[:, None]), ev(X) + S.hp, {"x": X, "h": S.hp}
        if prop == "cash_superadditive":
            return ev(X) + S.hp, ev(X + S.hp[:, None]), {"x": X, "h": S.hp}
        if prop == "submultiplicative":
            lhs, fx, fy = ev(X * Y), ev(X), ev(Y)
            if logu:
                return np.log(lhs), np.log(fx) + np.log(fy), {"x": X, "y": Y}
            return lhs, fx * fy, {"x": X, "y": Y}
        if prop == "logconvex":
            lhs, fx, fy = ev(X**a * Y ** (1 - a)), ev(X), ev(Y)
            if logu:
                return np.log(lhs), S.a * np.log(fx) + (1 - S.a) * np.log(fy), {"x": X, "y": Y, "a": S.a}
            return lhs, fx**S.a * fy ** (1 - S.a), {"x": X, "y": Y, "a": S.a}
        if prop == "quasi_logconvex":
            lhs = T(ev(X**a * Y ** (1 - a)))
            return lhs, np.maximum(T(ev(X)), T(ev(Y))), {"x": X, "y": Y, "a": S.a}
        if prop == "star_shaped":
            lam = np.exp(S.hp)
            if logu:
                return S.hp + np.log(ev(X)), np.log(ev(X * lam[:, None])), {"x": X, "lam": lam}
            return lam * ev(X), ev(X * lam[:, None]), {"x": X, "lam": lam}
        if prop == "law_invariant":
            Xp = np.take_along_axis(X, S.perm, axis=1)
            return T(ev(Xp)), T(ev(X)), {"x": X, "y": Xp}
        if prop in ("continuous_from_above", "continuous_from_below"):
            sign = 1.0 if prop == "continuous_from_above" else -1.0
            step = sign * CONTINUITY_STEP * S.d
            Xk = X * np.exp(step) if ret else X + step
            return T(ev(Xk)), T(ev(X)), {"x": X, "xk": Xk}
    raise ValueError(f"unknown property {prop!r}")


def _margins(prop: str, lhs: np.ndarray, rhs: np.ndarray, tol: float):
    with np.errstate(invalid="ignore"):
        diff = lhs - rhs
        margin = np.abs(diff) if prop in EQUALITIES else diff
        # equal infinities compare as equal
        margin = np.where(lhs == rhs, 0.0, margin)
        scale = np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
        scale = np.where(np.isfinite(scale), scale, 1.0)
        ratio = margin / scale
    ratio = np.where(np.isnan(ratio), -np.inf, ratio)
    t = CONTINUITY_TOL if prop.startswith("continuous") else tol
    return ratio, t


def _check_with_samples(f: RiskFunctional, prop: str, S: Samples, tol: float) -> PropertyResult:
    lhs, rhs, inputs = _terms(f, prop, S)
    ratio, t = _margins(prop, np.asarray(lhs, float), np.asarray(rhs, float), tol)
    count = ratio.size
    worst = int(np.argmax(ratio))
    max_margin = float(ratio[worst])
    if max_margin <= t:
        return PropertyResult(prop, True, count, t, None, max_margin)
    picked = {k: (np.asarray(v)[worst] if np.ndim(v) and np.shape(v)[0] == count else v) for k, v in inputs.items()}
    cex = Counterexample(picked, float(np.ravel(lhs)[worst]), float(np.ravel(rhs)[worst]), max_margin)
    return PropertyResult(prop, False, count, t, cex, max_margin)


def check_property(f: RiskFunctional, prop: str, config: SamplerConfig = SamplerConfig()) -> PropertyResult:
    """Sampled check of one named property (see PROPERTIES)."""
    rng = np.random.default_rng(config.seed)
    S = draw_samples(f.space, config.n_samples, rng, config.log_range)
    return _check_with_samples(f, prop, S, config.tol)


def check_properties(f: RiskFunctional, props=PROPERTIES, config: SamplerConfig = SamplerConfig()) -> PropertyReport:
    rng = np.random.default_rng(config.seed)
    S = draw_samples(f.space, config.n_samples, rng, config.log_range)
    return PropertyReport({p: _check_with_samples(f, p, S, config.tol) for p in props})


def replay_margin(f: RiskFunctional, prop: str, result: PropertyResult) -> float:
    """Re-evaluate a stored counterexample and return its scaled margin."""
    c = result.counterexample
    if c is None:
        raise ValueError("no counterexample to replay")
    inp = c.inputs
    x = np.atleast_2d(inp["x"])
    n = x.shape[0]
    one = np.ones(n)
    z1 = np.log(x) if (f.side == "return" or prop in GEOMETRIC) else x
    fields = dict(z1=z1, z2=z1.copy(), d=np.zeros_like(z1), perm=np.tile(np.arange(z1.shape[1]), (n, 1)),
                  a=0.5 * one, h=0 * one, hp=0 * one, s=one)
    if "y" in inp:
        y = np.atleast_2d(inp["y"])
        if prop == "monotone":
            fields["d"] = np.log(y / x) if f.side == "return" else y - x
        elif prop == "law_invariant":
            fields["perm"] = np.array([[int(np.flatnonzero(x[0] == v)[0]) for v in y[0]]])
        else:
            fields["z2"] = np.log(y) if (f.side == "return" or prop in GEOMETRIC) else y
    if "a" in inp:
        key = "s" if prop == "constant_multiplicative" else "a"
        fields[key] = np.atleast_1d(inp["a"]).astype(float)
    if "h" in inp:
        fields["h"] = fields["hp"] = np.atleast_1d(inp["h"]).astype(float)
    if "lam" in inp:
        lam = np.atleast_1d(inp["lam"]).astype(float)
        if f.side == "return" and prop == "positively_homogeneous":
            fields["h"] = np.log(lam)
        elif prop == "star_shaped":
            fields["hp"] = np.log(lam)
        else:
            fields["s"] = lam
    if "xk" in inp:
        xk = np.atleast_2d(inp["xk"])
        step = np.log(xk / x) if f.side == "return" else xk - x
        fields["d"] = np.abs(step) / CONTINUITY_STEP
    S = Samples(**fields)
    lhs, rhs, _ = _terms(f, prop, S)
    ratio, _ = _margins(prop, np.asarray(lhs, float), np.asarray(rhs, float), result.tolerance)
    return float(np.max(ratio))


# ---------------------------------------------------------------------------
# classification

FLAG_NAMES = (
    "monetary",
    "return",
    "coherent",
    "convex",
    "logconvex",
    "quasi_convex",
    "quasi_logconvex",
    "star_shaped",
    "cash_subadditive",
    "cash_superadditive",
    "constant_multiplicative",
    "submultiplicative",
    "law_invariant",
    "monotone",
    "translation_invariant",
    "positively_homogeneous",
    "subadditive",
)

# premise => conclusion; each holds for every functional
IMPLICATIONS = (
    ("coherent", "convex"),
    ("convex", "quasi_convex"),
    ("convex", "star_shaped"),
    ("logconvex", "quasi_logconvex"),
    ("logconvex", "star_shaped"),
    ("quasi_convex", "quasi_logconvex"),
    ("positively_homogeneous", "star_shaped"),
    ("translation_invariant", "cash_subadditive"),
    ("translation_invariant", "cash_superadditive"),
)


@dataclass(frozen=True)
class TaxonomyClass:
    flags: dict[str, bool]
    report: PropertyReport
    notes: tuple[str, ...] = ()

    def __getitem__(self, name: str) -> bool:
        return self.flags[name]

    def to_dict(self) -> dict:
        return {"flags": dict(self.flags), "properties": self.report.to_dict(), "notes": list(self.notes)}


def _flags(raw: dict[str, bool], side: Side) -> dict[str, bool]:
    flags = {k: raw[k] for k in (
        "monotone", "translation_invariant", "positively_homogeneous", "subadditive", "cash_subadditive",
        "cash_superadditive", "constant_multiplicative", "submultiplicative", "star_shaped",
        "quasi_logconvex", "law_invariant")}
    norm_one = raw["normalization_return"]
    norm_money = raw["normalization"] if side == "monetary" else norm_one
    flags["monetary"] = raw["monotone"] and raw["translation_invariant"] and norm_money
    flags["return"] = raw["monotone"] and raw["positively_homogeneous"] and norm_one
    flags["convex"] = flags["monetary"] and raw["convex"]
    flags["coherent"] = flags["convex"] and raw["positively_homogeneous"]
    flags["logconvex"] = raw["monotone"] and raw["positively_homogeneous"] and raw["logconvex"]
    flags["quasi_convex"] = raw["monotone"] and raw["quasi_convex"]
    return {k: flags[k] for k in FLAG_NAMES}


def classify(f: RiskFunctional, config: SamplerConfig = SamplerConfig()) -> TaxonomyClass:
    """Sampled taxonomy flags with implication closure."""
    report = check_properties(f, PROPERTIES, config)
    results = dict(report.results)
    raw = {k: v.holds for k, v in results.items()}
    raw["normalization_return"] = _normalized_at_one(f, config.tol)
    cleared: set[str] = set()

    def current() -> dict[str, bool]:
        fl = _flags(raw, f.side)
        for k in cleared:
            fl[k] = False
        return fl

    notes: list[str] = []
    big = replace(config, n_samples=4 * config.n_samples, seed=config.seed + 1)
    flags = current()
    violated = [(p, c) for p, c in IMPLICATIONS if flags[p] and not flags[c]]
    while violated:
        prem, concl = violated[0]
        # a confirmed counterexample to the conclusion refutes the premise;
        # re-run the conclusion at 4x samples to record the stronger evidence
        rerun = check_property(f, concl, big)
        if not rerun.holds:
            results[concl] = rerun
        notes.append(f"{prem} held but {concl} failed; {prem} cleared after 4x re-run")
        if prem in raw:
            raw[prem] = False
        cleared.add(prem)
        flags = current()
        violated = [(p, c) for p, c in IMPLICATIONS if flags[p] and not flags[c]]
    return TaxonomyClass(flags, PropertyReport(results), tuple(notes))


def _normalized_at_one(f: RiskFunctional, tol: float) -> bool:
    val = f.values(np.ones((1, f.space.n)))[0]
    return bool(abs(val - 1.0) <= tol)


# ---------------------------------------------------------------------------
# bridges between the two sides

BRIDGE_PAIRS = (
    ("normalization", "normalization"),
    ("monotone", "monotone"),
    ("translation_invariant", "positively_homogeneous"),
    ("positively_homogeneous", "constant_multiplicative"),
    ("subadditive", "submultiplicative"),
    ("convex", "logconvex"),
    ("cash_superadditive", "star_shaped"),
    ("quasi_convex", "quasi_logconvex"),
    ("continuous_from_above", "continuous_from_above"),
    ("continuous_from_below", "continuous_from_below"),
)


def bridge_equivalences(rho: RiskFunctional, trho: RiskFunctional,
                        config: SamplerConfig = SamplerConfig()) -> PropertyReport:
    """Check that each monetary property and its geometric twin get the same verdict."""
    if rho.side != "monetary" or trho.side != "return":
        raise ValueError("bridge_equivalences expects (monetary, return)")
    if rho.space != trho.space:
        raise ValueError("functionals live on different spaces")
    rng = np.random.default_rng(config.seed)
    S = draw_samples(rho.space, config.n_samples, rng, config.log_range)
    out = {}
    for pm, pr in BRIDGE_PAIRS:
        rm = _check_with_samples(rho, pm, S, config.tol)
        rr = _check_with_samples(trho, pr, S, config.tol)
        agree = rm.holds == rr.holds
        key = f"{pm}<->{pr}"
        detail = {"monetary": rm.holds, "return": rr.holds,
                  "monetary_margin": rm.max_margin, "return_margin": rr.max_margin}
        cex = None if agree else Counterexample({"monetary_property": pm, "return_property": pr},
                                                float(rm.holds), float(rr.holds), 1.0)
        out[key] = PropertyResult(key, agree, S.n, config.tol, cex, 0.0 if agree else 1.0, detail)
    return PropertyReport(out)


# ---------------------------------------------------------------------------
# the two counterexamples from the quasi-logconvexity discussion


def paper_counterexamples() -> PropertyReport:
    """Hard-coded two-atom instances showing quasi-logconvex is weaker than quasi-convex.

    X = (1, e^3), Y = e^2 on two equiprobable atoms.
    * geometric mean exp(E log .): value at (X+Y)/2 exceeds max = e^2.
    * mean-value certainty equivalent with ell(x) = x (x<0), x^2+x (x>=0):
      rho(X) = e^2 and rho(X/e) = exp((sqrt(11)-1)/2) > e, so not positively
      homogeneous; it also breaks quasi-convexity at (X+Y)/2.
    """
    p = np.array([0.5, 0.5])
    X = np.array([1.0, np.exp(3.0)])
    Y = np.full(2, np.exp(2.0))
    mid = 0.5 * (X + Y)
    geo = lambda v: float(h0_values(v, p))  # noqa: E731
    ell = MeanValueLoss.linear_quadratic()
    mv = lambda v: float(np.exp(mean_value_values(np.log(v), p[None, :], ell)))  # noqa: E731
    lam = np.exp(-1.0)
    cases = {
        "logcoherent_not_quasi_convex": (geo(mid), max(geo(X), geo(Y)), {"x": X, "y": Y, "a": 0.5}),
        "mean_value_not_positively_homogeneous": (mv(lam * X), lam * mv(X), {"x": X, "lam": lam}),
        "mean_value_not_quasi_convex": (mv(mid), max(mv(X), mv(Y)), {"x": X, "y": Y, "a": 0.5}),
    }
    out = {}
    for name, (lhs, rhs, inputs) in cases.items():
        lhs, rhs = float(lhs), float(rhs)
        margin = lhs - rhs
        ok = margin > CONFIRM_MARGIN
        cex = None if ok else Counterexample(inputs, lhs, rhs, margin)
        out[name] = PropertyResult(name, ok, 1, CONFIRM_MARGIN, cex, margin,
                                   {"lhs": lhs, "rhs": rhs, "margin": margin, "inequality": "lhs > rhs"})
    return PropertyReport(out)
