"""Command-line front end.

Scenario files are CSV with header ``outcome,p[,d1,...][,<position columns>]``:
``p`` is the reference probability, ``dK`` columns are scenario densities and
any other column is a named position. Measure files hold one MeasureSpec as
JSON.

JSON output uses Python's shortest round-trip float repr; CSV output uses 12
significant digits. Errors go to stderr as one JSON object and exit with 2;
exit 1 means an asserted property failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import allocation, correspondence, duality, portfolio
from .prob_core import PROB_TOL, PositivePosition, ProbSpace, Scenario, ScenarioSet
from .specs import MeasureSpec

CSV_DIGITS = 12


class InputError(ValueError):
    """Bad user input, reported with file/row/column context."""


@dataclass
class Ingested:
    space: ProbSpace
    scenarios: ScenarioSet | None
    positions: dict[str, np.ndarray]


def _num(text: str, path, row: int, col: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"{path}: row {row}, column {col!r}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise InputError(f"{path}: row {row}, column {col!r}: value must be finite, got {text!r}")
    return v


def ingest_scenarios(path) -> Ingested:
    """Parse and validate a scenario CSV; nothing is renormalized."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputError(f"cannot read scenario file {path}: {e.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["outcome", "p"]:
        raise InputError(f"{path}: header must start with 'outcome,p', got {','.join(header[:2])!r}")
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no outcome rows")
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise InputError(f"{path}: row {i} has {len(r)} fields, header has {len(header)}")
    outcomes = [r[0].strip() for r in body]
    cols = {h: np.array([_num(r[j], path, i, h) for i, r in enumerate(body, start=2)])
            for j, h in enumerate(header) if j > 0}
    p = cols.pop("p")
    bad = np.flatnonzero(p <= 0)
    if bad.size:
        raise InputError(f"{path}: row {bad[0] + 2}, column 'p': probability must be positive, got {p[bad[0]]!r}")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise InputError(f"{path}: column 'p' sums to {total!r}, not 1")
    space = ProbSpace(outcomes, p)
    dens = [h for h in header[2:] if h.startswith("d") and h[1:].isdigit()]
    expected = [f"d{k}" for k in range(1, len(dens) + 1)]
    if dens != expected:
        raise InputError(f"{path}: density columns must be d1..d{len(dens)} in order, got {dens}")
    scenarios = None
    if dens:
        sc = []
        for h in dens:
            d = cols.pop(h)
            neg = np.flatnonzero(d < 0)
            if neg.size:
                raise InputError(f"{path}: row {neg[0] + 2}, column {h!r}: density must be nonnegative")
            mass = float(p @ d)
            if abs(mass - 1.0) > PROB_TOL:
                raise InputError(f"{path}: column {h!r} has E_P[d] = {mass!r}, not 1")
            sc.append(Scenario(space, d))
        scenarios = ScenarioSet(sc)
    return Ingested(space, scenarios, cols)


def _spec(path) -> MeasureSpec:
    try:
        return MeasureSpec.from_json(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read measure file {path}: {e.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise InputError(f"{path}: bad measure spec: {e}") from None


def _position(ing: Ingested, col: str, positive: bool = True) -> np.ndarray:
    if col not in ing.positions:
        raise InputError(f"unknown position column {col!r}; available: {sorted(ing.positions)}")
    v = ing.positions[col]
    if positive and np.any(v <= 0):
        raise InputError(f"position column {col!r} must be strictly positive")
    return v


def _grid(text: str) -> np.ndarray:
    try:
        lo, step, hi = (float(s) for s in text.split(":"))
    except ValueError:
        raise InputError(f"grid must be lo:step:hi, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise InputError(f"grid {text!r} needs step > 0 and hi >= lo")
    k = int(math.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(k + 1)


def _cols(text: str) -> list[str]:
    return [c.strip() for c in text.split(",") if c.strip()]


# ---------------------------------------------------------------------------
# commands; each returns (ok, report, csv_header, csv_rows)


def cmd_eval(a, ing: Ingested):
    spec = _spec(a.measure)
    x = _position(ing, a.position, positive=spec.side == "return")
    mon, ret = spec.pair(ing.space, ing.scenarios)
    if spec.side == "return":
        report = {"measure": spec.label, "position": a.position, "return_value": ret(x),
                  "monetary_value_of_log": mon(np.log(x))}
    else:
        report = {"measure": spec.label, "position": a.position, "monetary_value": mon(x),
                  "return_value_of_exp": ret(np.exp(x))}
    rows = [[k, v] for k, v in report.items() if isinstance(v, float)]
    return True, report, ["quantity", "value"], rows


def cmd_classify(a, ing: Ingested):
    spec = _spec(a.measure)
    mon, ret = spec.pair(ing.space, ing.scenarios)
    cfg = correspondence.SamplerConfig(n_samples=a.samples, tol=a.tol, seed=a.seed)
    tax = correspondence.classify(mon if spec.side == "monetary" else ret, cfg)
    bridges = correspondence.bridge_equivalences(mon, ret, cfg)
    report = {"measure": spec.label, "side": spec.side, "seed": a.seed, **tax.to_dict(),
              "bridges": bridges.to_dict()}
    rows = [[k, str(v).lower()] for k, v in tax.flags.items()]
    return bridges.holds, report, ["flag", "value"], rows


def cmd_recover_r(a, ing: Ingested):
    spec = _spec(a.measure)
    ret = spec.functional(ing.space, ing.scenarios) if spec.side == "return" else spec.pair(ing.space, ing.scenarios)[1]
    qs = ing.scenarios if ing.scenarios is not None else ScenarioSet([Scenario.reference(ing.space)])
    if not 0 <= a.scenario < len(qs):
        raise InputError(f"--scenario {a.scenario} out of range for {len(qs)} scenarios")
    q = qs[a.scenario]
    ts = _grid(a.t_grid)
    cfg = duality.RecoveryConfig(seed=a.seed)
    rec = [duality.recover_r(ret, q, float(t), cfg) for t in ts]
    expected = None
    if spec.family == "dual":
        m = spec.dual_measure(ing.space, ing.scenarios)
        k = next((i for i, s in enumerate(m.qs) if np.array_equal(s.density, q.density)), None)
        if k is not None:
            expected = [float(v) for v in m.r(ts, k)]
    ok = True
    if expected is not None:
        ok = bool(np.max(np.abs(np.array(rec) - expected)) <= a.recover_tol)
    report = {"measure": spec.label, "scenario": a.scenario, "t": [float(t) for t in ts], "recovered": rec,
              "expected": expected, "tolerance": a.recover_tol}
    rows = [[float(t), r] + ([e] if expected is not None else []) for t, r, e in
            zip(ts, rec, expected or [None] * len(ts))]
    header = ["t", "recovered"] + (["expected"] if expected is not None else [])
    return ok, report, header, rows


def _return_measure(spec: MeasureSpec, ing: Ingested):
    return spec.pair(ing.space, ing.scenarios)[1]


def cmd_frontier(a, ing: Ingested):
    spec = _spec(a.measure)
    names = _cols(a.assets)
    assets = [PositivePosition(ing.space, _position(ing, c)) for c in names]
    prob = portfolio.PortfolioProblem(assets, 0.0, _return_measure(spec, ing))
    pts = portfolio.efficient_frontier(prob, _grid(a.r_grid))
    check = portfolio.check_frontier(prob, pts, np.random.default_rng(a.seed), tol=a.frontier_tol)
    report = {"measure": spec.label, "assets": names, "points": [p.to_dict() for p in pts],
              "checks": check.to_dict()}
    rows = [[p.r] + (list(map(float, p.w_star)) if p.w_star is not None else [float("nan")] * len(names))
            + [p.value, p.status] for p in pts]
    return check.holds, report, ["r"] + [f"w_{i + 1}" for i in range(len(names))] + ["value", "status"], rows


def cmd_allocate(a, ing: Ingested):
    spec = _spec(a.measure)
    if spec.family != "dual":
        raise InputError("allocate needs a 'dual' measure spec")
    m = spec.dual_measure(ing.space, ing.scenarios)
    names = _cols(a.units)
    units = [PositivePosition(ing.space, _position(ing, c)) for c in names]
    total = PositivePosition(ing.space, _position(ing, a.total))
    res = allocation.allocate(a.rule, m, units, total, a.composition)
    report = {"measure": spec.label, "units": names, "total": a.total, **res.to_dict()}
    rows = [[n, res.rule, float(v)] for n, v in zip(names, res.allocations)]
    rows += [[f"density:{o}", "scenario", float(d)] for o, d in zip(ing.space.outcomes, res.optimal_scenario.density)]
    return True, report, ["unit", "rule", "allocation"], rows


def cmd_simulate(a, ing: Ingested):
    names = _cols(a.assets)
    gross = np.stack([_position(ing, c) for c in names])
    w = np.array([float(s) for s in _cols(a.w)])
    rng = np.random.default_rng(a.seed)
    path = rng.choice(ing.space.n, size=a.periods, p=ing.space.p)
    paths = gross[:, path]
    series = {
        "buy_and_hold": portfolio.wealth_buy_and_hold(w, paths, a.w0),
        "rebalanced": portfolio.wealth_rebalanced(w, paths, a.w0, a.steps),
        "continuous_limit": portfolio.wealth_continuous_limit(w, paths, a.w0),
    }
    report = {"assets": names, "w": w.tolist(), "steps": a.steps, "seed": a.seed,
              "outcome_path": [ing.space.outcomes[i] for i in path],
              "wealth": {k: v.tolist() for k, v in series.items()}}
    rows = [[t, k, float(v[t])] for k, v in series.items() for t in range(v.size)]
    return True, report, ["t", "strategy", "wealth"], rows


def cmd_counterexamples(a, ing):
    rep = correspondence.paper_counterexamples()
    lines = []
    for name, r in rep.results.items():
        d = r.detail
        lines.append(f"{name}: {d['lhs']:.4f} > {d['rhs']:.4f} (margin {d['margin']:.6g}) "
                     f"{'confirmed' if r.holds else 'NOT confirmed'}")
    report = {"counterexamples": rep.to_dict(), "summary": lines}
    rows = [[n, r.detail["lhs"], r.detail["rhs"], r.detail["margin"], str(r.holds).lower()]
            for n, r in rep.results.items()]
    return rep.holds, report, ["name", "lhs", "rhs", "margin", "confirmed"], rows


COMMANDS = {
    "eval": cmd_eval,
    "classify": cmd_classify,
    "recover-r": cmd_recover_r,
    "frontier": cmd_frontier,
    "allocate": cmd_allocate,
    "simulate": cmd_simulate,
    "counterexamples": cmd_counterexamples,
}


# ---------------------------------------------------------------------------
# output


def _fmt_csv(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), f".{CSV_DIGITS}g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def render(report: dict, header: list[str], rows: list[list], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt_csv(v) for v in r])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qlcrisk", description="Geometric risk measures on finite scenario spaces.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, scen=True, measure=True, seed=False, seed_required=False):
        sp = sub.add_parser(name)
        if scen:
            sp.add_argument("--scenarios", required=True, help="scenario CSV")
        if measure:
            sp.add_argument("--measure", required=True, help="measure spec JSON")
        if seed:
            sp.add_argument("--seed", type=int, required=seed_required, default=0)
        sp.add_argument("--out", help="write to path.json or path.csv instead of stdout JSON")
        return sp

    sp = add("eval")
    sp.add_argument("--position", required=True)
    sp = add("classify", seed=True, seed_required=True)
    sp.add_argument("--samples", type=int, default=correspondence.SamplerConfig.n_samples)
    sp.add_argument("--tol", type=float, default=correspondence.DEFAULT_TOL)
    sp = add("recover-r", seed=True)
    sp.add_argument("--t-grid", required=True, help="lo:step:hi")
    sp.add_argument("--scenario", type=int, default=0, help="0-based scenario index (default 0)")
    sp.add_argument("--recover-tol", type=float, default=2e-4)
    sp = add("frontier", seed=True)
    sp.add_argument("--r-grid", required=True, help="lo:step:hi")
    sp.add_argument("--assets", required=True, help="comma-separated gross-return columns")
    sp.add_argument("--frontier-tol", type=float, default=1e-6)
    sp = add("allocate")
    sp.add_argument("--units", required=True, help="comma-separated sub-unit columns")
    sp.add_argument("--total", required=True)
    sp.add_argument("--rule", required=True, choices=allocation.RULES)
    sp.add_argument("--composition", default="none", choices=allocation.COMPOSITIONS)
    sp = add("simulate", measure=False, seed=True, seed_required=True)
    sp.add_argument("--steps", type=int, required=True, help="rebalancing steps per period")
    sp.add_argument("--w", required=True, help="comma-separated weights")
    sp.add_argument("--assets", required=True, help="comma-separated gross-return columns")
    sp.add_argument("--periods", type=int, default=20)
    sp.add_argument("--w0", type=float, default=1.0)
    add("counterexamples", scen=False, measure=False)
    return ap


def _error(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")
    return 2


GRID_FLAGS = ("--t-grid", "--r-grid")


def _glue_grid_args(argv: list[str]) -> list[str]:
    """Let grids start with a minus sign: '--t-grid -1:0.5:1' -> '--t-grid=-1:0.5:1'."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in GRID_FLAGS and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_grid_args(argv))
    fmt = "json"
    if args.out:
        suffix = Path(args.out).suffix.lower()
        if suffix not in (".json", ".csv"):
            return _error("InputError", f"--out must end in .json or .csv, got {args.out!r}")
        fmt = suffix[1:]
    try:
        ing = ingest_scenarios(args.scenarios) if getattr(args, "scenarios", None) else None
        ok, report, header, rows = COMMANDS[args.command](args, ing)
    except InputError as e:
        return _error("InputError", str(e))
    except ValueError as e:
        return _error(type(e).__name__, str(e))
    text = render({"command": args.command, "ok": ok, **report}, header, rows, fmt)
    if args.command == "counterexamples":
        # human-readable inequalities always go to stdout
        sys.stdout.write("".join(line + "\n" for line in report["summary"]))
        if args.out:
            Path(args.out).write_text(text)
    elif args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
