"""Command-line entry point.

    socialgoods eq --scenario s.json --prices 0.5,0.5
    socialgoods price --scenario s.json --scheme seq_full_prices
    socialgoods eval --scenario s.json --scheme seq_full_prices --format csv
    socialgoods simulate --scenario s.json --scheme seq_full_prices --trials 100000 --seed 7
    socialgoods bench --scenario a.json --scenario dir/ --format csv --out bench.csv
    socialgoods repro appendix-f | lower-bound | log-gap [--n 100] | hardness-demo
    socialgoods hardness --scenario graph.json --prices 0.9,0.1,0.9

Exit status: 0 success, 1 invalid input, 2 a reproduction or check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import equilibrium as eq
from . import oracle, pricing, revenue
from .distributions import Uniform
from .errors import DomainError, SocialGoodsError
from .scenario import (
    Anonymous,
    Full,
    NetworkBased,
    Scenario,
    Sequential,
    Simple,
    Simultaneous,
    StatusBased,
    load_scenario,
    per_agent,
    schedule_from_doc,
    schedule_to_doc,
)

COLUMNS = ["scenario_id", "scheme", "mode", "revenue_closed", "mc_mean", "mc_stderr",
           "worst_eq", "best_eq", "benchmark", "ratio"]
REPROS = ("appendix-f", "lower-bound", "log-gap", "hardness-demo")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _positive(name, minimum):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer") from None
        if value < minimum:
            raise argparse.ArgumentTypeError(f"{name} must be at least {minimum}")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="socialgoods", description="Posted prices for goods with externalities.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scheme=True, prices=False):
        sp.add_argument("--scenario", action="append", default=[], help="scenario JSON (file or directory)")
        if scheme:
            sp.add_argument("--scheme", choices=sorted(pricing.SCHEMES), help="pricing scheme")
        if prices:
            sp.add_argument("--prices", help="comma-separated prices or a JSON schedule document")
        sp.add_argument("--trials", type=_positive("trials", 1), default=100_000)
        sp.add_argument("--seed", type=_positive("seed", 0), default=0)
        sp.add_argument("--grid", type=_positive("grid", 10), default=200)
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--format", choices=("table", "csv", "json"), default="table")

    common(sub.add_parser("eq", help="solve the equilibrium for given prices"), prices=True)
    common(sub.add_parser("price", help="compute a pricing scheme"))
    common(sub.add_parser("eval", help="closed-form revenue and ratio against the oracle"), prices=True)
    common(sub.add_parser("simulate", help="Monte Carlo revenue"), prices=True)
    common(sub.add_parser("bench", help="every applicable scheme against the oracle"), scheme=False)
    rp = sub.add_parser("repro", help="run a named reproduction")
    rp.add_argument("name", choices=REPROS)
    rp.add_argument("--n", type=_positive("n", 1), default=100)
    common(rp, scheme=False)
    common(sub.add_parser("hardness", help="greedy network equilibrium against the independent set bound"),
           scheme=False, prices=True)
    return p


# ----------------------------------------------------------------------------
# helpers


def _scenarios(paths):
    if not paths:
        raise DomainError("--scenario is required")
    out = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            files = sorted(path.glob("*.json"))
            if not files:
                raise DomainError(f"no scenario files in {path}")
        elif path.exists():
            files = [path]
        else:
            raise DomainError(f"scenario file not found: {path}")
        out.extend((f.stem, load_scenario(f)) for f in files)
    return out


def _one_scenario(paths):
    items = _scenarios(paths)
    if len(items) != 1:
        raise DomainError("this command takes exactly one scenario")
    return items[0]


def _parse_prices(text, n):
    if text is None:
        return None
    text = text.strip()
    if text.startswith("{"):
        try:
            return schedule_from_doc(json.loads(text))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DomainError(f"bad price document: {exc}") from None
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise DomainError(f"bad price list {text!r}") from None
    if len(vals) == 1 and n > 1:
        return Anonymous(vals[0])
    if len(vals) != n:
        raise DomainError(f"expected {n} prices, got {len(vals)}")
    return Simple(vals)


def _prices_for(args, s):
    p = _parse_prices(getattr(args, "prices", None), s.n)
    scheme = getattr(args, "scheme", None)
    if p is not None and scheme is not None:
        raise DomainError("give either --prices or --scheme, not both")
    if p is not None:
        return p, "custom", None
    if scheme is None:
        raise DomainError("--prices or --scheme is required")
    sched, tag = pricing.build_scheme(scheme, s)
    return sched, scheme, tag


def _mode(s):
    return "sequential" if s.sequential else "simultaneous"


def _num(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    return str(x)


def _emit(args, rows, columns, title=None):
    if args.format == "json":
        text = json.dumps(rows, indent=2, sort_keys=False, default=str) + "\n"
    elif args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(r.get(c)) for c in columns])
        text = buf.getvalue()
    else:
        cells = [[c for c in columns]]
        for r in rows:
            cells.append([_short(r.get(c)) for c in columns])
        widths = [max(len(row[k]) for row in cells) for k in range(len(columns))]
        lines = [title] if title else []
        for row in cells:
            lines.append("  ".join(v.ljust(wd) for v, wd in zip(row, widths)).rstrip())
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _short(x):
    if x is None:
        return "-"
    if isinstance(x, (float, np.floating)):
        return "-" if math.isnan(x) else f"{float(x):.6g}"
    return str(x)


def _evaluate(sid, s, p, scheme, tag, args, simulate):
    """One CSV row: closed-form revenue, equilibrium range, oracle and ratio."""
    row = {c: None for c in COLUMNS}
    row.update(scenario_id=sid, scheme=scheme, mode=_mode(s))
    sim_scan = not s.sequential and isinstance(s.externality, (Full, StatusBased))
    if sim_scan:
        scan = eq.scan_sim_equilibria(s, p)
        rep = scan.worst
        row["worst_eq"], row["best_eq"] = scan.worst.revenue, scan.best.revenue
    else:
        rep = eq.solve(s, p)
    row["revenue_closed"] = revenue.revenue_closed(s, p, rep)
    if simulate:
        summary = revenue.simulate(s, p, rep, args.trials, args.seed)
        row["mc_mean"], row["mc_stderr"] = summary.mean, summary.stderr
    if tag is not None:
        bench = oracle.benchmark_for(s, tag, resolution=args.grid)
        row["benchmark"] = bench.value
        rev = row["revenue_closed"]
        row["ratio"] = bench.value / rev if rev > 0 else math.inf
    return row


# ----------------------------------------------------------------------------
# commands


def cmd_eq(args):
    sid, s = _one_scenario(args.scenario)
    p, _, _ = _prices_for(args, s)
    if not s.sequential and isinstance(s.externality, (Full, StatusBased)):
        scan = eq.scan_sim_equilibria(s, p)
        reports = scan.equilibria
    elif isinstance(s.externality, NetworkBased) and not s.sequential:
        reports = [eq.solve_network_sim_greedy(s, list(per_agent(p, s.n)), s.dists).report]
    else:
        reports = [eq.solve(s, p)]
    if args.format == "json":
        docs = [r.to_doc() for r in reports]
        return _write(args, json.dumps(docs, indent=2, default=str) + "\n")
    rows = []
    for k, r in enumerate(reports):
        rows.append({"eq": k, "revenue": r.revenue, "no_sale_prob": r.no_sale_prob,
                     "thresholds": json.dumps(schedule_to_doc(r.thresholds)["values"]
                                              if isinstance(r.thresholds, Simple)
                                              else schedule_to_doc(r.thresholds)),
                     "flags": ";".join(r.flags)})
    _emit(args, rows, ["eq", "revenue", "no_sale_prob", "thresholds", "flags"], title=f"scenario {sid}")
    return 0


def _write(args, text):
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_price(args):
    sid, s = _one_scenario(args.scenario)
    if args.scheme is None:
        raise DomainError("--scheme is required")
    sched, tag = pricing.build_scheme(args.scheme, s)
    doc = {"scenario_id": sid, "scheme": args.scheme, "prices": schedule_to_doc(sched),
           "guarantee": {"factor": tag.factor if not isinstance(tag.factor, float) or math.isfinite(tag.factor)
                         else "inf", "benchmark": tag.benchmark, "note": tag.note}}
    if args.format == "json":
        return _write(args, json.dumps(doc, indent=2) + "\n")
    rows = [{"scheme": args.scheme, "prices": json.dumps(doc["prices"]),
             "factor": str(doc["guarantee"]["factor"]), "benchmark": tag.benchmark}]
    _emit(args, rows, ["scheme", "prices", "factor", "benchmark"], title=f"scenario {sid}")
    return 0


def cmd_eval(args, simulate=False):
    sid, s = _one_scenario(args.scenario)
    p, scheme, tag = _prices_for(args, s)
    row = _evaluate(sid, s, p, scheme, tag, args, simulate)
    _emit(args, [row], COLUMNS)
    return 0


def cmd_bench(args):
    rows = []
    for sid, s in _scenarios(args.scenario):
        for name, spec in pricing.SCHEMES.items():
            if not spec.valid(s):
                continue
            sched, tag = pricing.build_scheme(name, s)
            rows.append(_evaluate(sid, s, sched, name, tag, args, simulate=True))
    _emit(args, rows, COLUMNS)
    return 0


def cmd_hardness(args):
    sid, s = _one_scenario(args.scenario)
    if not isinstance(s.externality, NetworkBased):
        raise DomainError("hardness needs a network scenario")
    p = _parse_prices(args.prices, s.n)
    if p is None:
        raise DomainError("--prices is required")
    prices = list(per_agent(p, s.n))
    res = eq.solve_network_sim_greedy(s.externality, prices, s.dists)
    size, witness = oracle.max_independent_set(s.externality)
    g = s.externality
    independent = all(not (g.neighbors(i) & res.support) for i in res.support)
    resid = eq.equilibrium_residual(Scenario(s.dists, g, Simultaneous()), Simple(tuple(prices)), res.report)
    ok = independent and resid <= 1e-9 and res.report.revenue <= size + 1e-12
    rows = [{"scenario_id": sid, "buyers": " ".join(map(str, sorted(res.support))),
             "independent": independent, "residual": resid, "revenue": res.report.revenue,
             "max_is": size, "witness": " ".join(map(str, sorted(witness))),
             "check": "PASS" if ok else "FAIL"}]
    _emit(args, rows, list(rows[0]))
    return 0 if ok else 2


# ----------------------------------------------------------------------------
# reproductions


def repro_adaptive_availability(args):
    U = Uniform()
    lines, ok = [], True
    got = {}
    for restricted, want in ((False, 0.4622033133), (True, 0.4621905314)):
        a = oracle.optimal_adaptive_availability([U, U, U], (0.0, 0.5, 0.8), restricted=restricted,
                                                 seed=args.seed)
        good = abs(a.revenue - want) <= 1e-4
        ok &= good
        got[restricted] = a.revenue
        label = "restricted  " if restricted else "unrestricted"
        lines.append(f"{label} revenue {a.revenue:.10f}  target {want:.10f}  delta {a.revenue - want:+.2e}  "
                     f"{'PASS' if good else 'FAIL'}")
    order = got[False] > got[True] + 1e-6
    ok &= order
    lines.append(f"unrestricted exceeds restricted by {got[False] - got[True]:.3e}  {'PASS' if order else 'FAIL'}")
    return lines, ok


def repro_lower_bound(args):
    n = 10
    U = Uniform()
    s = Scenario(tuple([U] * n), Full(), Simultaneous())
    price = (n / (n + 1.0)) ** n
    target = (n / (n + 1.0)) ** (n + 1)
    scan = eq.scan_sim_equilibria(s, Anonymous(price), grid=2000)
    best = scan.best.revenue
    lines = [f"anonymous price {price:.6f}: best equilibrium revenue {best:.6f} (target {target:.6f})"]
    ok = best >= target - 1e-9
    rng = np.random.Generator(np.random.Philox(key=args.seed))
    worst = 0.0
    candidates = [Anonymous(float(x)) for x in np.linspace(0.05, 1.0, 20)]
    candidates += [Simple(tuple(rng.uniform(0.05, 1.0, n))) for _ in range(20)]
    for p in candidates:
        worst = max(worst, eq.scan_sim_equilibria(s, p, grid=2000).worst.revenue)
    lines.append(f"largest worst-equilibrium revenue over {len(candidates)} price vectors {worst:.6f} (bound 0.25)")
    ok &= worst <= 0.25 + 1e-6
    ratio = best / max(worst, 0.25)
    lines.append(f"gap ratio {ratio:.4f} (needs >= 1.40)")
    ok &= ratio >= 1.40
    return lines, ok


def log_gap_values(n, grid=10_000):
    dists = [Uniform(1.0 / i, 1.0 / (i - 0.5)) for i in range(1, n + 1)]
    disc = sum((1.0 / i) * (1.0 - float(d.cdf(1.0 / i))) for i, d in enumerate(dists, start=1))
    top = max(d.hi for d in dists)
    ps = np.linspace(top / grid, top, grid)
    cdf = np.vstack([np.asarray(d.cdf(ps)) for d in dists])
    anon = ps * np.sum(1.0 - cdf, axis=0)
    return disc, float(np.max(anon)), float(ps[int(np.argmax(anon))])


def repro_log_gap(args):
    n = args.n
    disc, anon, at = log_gap_values(n)
    ok = disc >= math.log(n) and anon <= 2.0 + 1e-6
    lines = [f"n={n}: discriminatory revenue {disc:.5f} (ln n = {math.log(n):.5f})",
             f"best anonymous revenue {anon:.5f} at price {at:.5f} (bound 2)"]
    return lines, ok


def hardness_trials(seed, trials=200, n_max=15, seq_max=10):
    """Random graphs: greedy equilibrium checks. Returns (failures, count)."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    failures = []
    for t in range(trials):
        n = int(rng.integers(2, n_max + 1))
        dens = rng.uniform(0.1, 0.6)
        edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < dens]
        g = NetworkBased(n, tuple(edges))
        prices = [float(x) for x in rng.uniform(0.0, 1.3, n)]
        res = eq.solve_network_sim_greedy(g, prices)
        s = Scenario(tuple([Uniform()] * n), g, Simultaneous())
        independent = all(not (g.neighbors(i) & res.support) for i in res.support)
        resid = eq.equilibrium_residual(s, Simple(tuple(prices)), res.report)
        size, _ = oracle.max_independent_set(g)
        if not (independent and resid <= 1e-9 and res.report.revenue <= size + 1e-12):
            failures.append((t, "simultaneous"))
        if n <= seq_max:
            order = tuple(int(x) for x in rng.permutation(n))
            greedy = eq.solve_network_seq_fixed_values(g, prices, order)
            tree = oracle.subgame_perfect_network(g, prices, [1.0] * n, order)
            if greedy != tree:
                failures.append((t, "sequential"))
    return failures, trials


def repro_hardness_demo(args):
    failures, trials = hardness_trials(args.seed)
    lines = [f"{trials} random graphs, {len(failures)} failures"]
    lines += [f"  trial {t}: {kind} check failed" for t, kind in failures[:10]]
    return lines, not failures


def cmd_repro(args):
    fn = {"appendix-f": repro_adaptive_availability, "lower-bound": repro_lower_bound,
          "log-gap": repro_log_gap, "hardness-demo": repro_hardness_demo}[args.name]
    lines, ok = fn(args)
    lines.append(f"{args.name}: {'PASS' if ok else 'FAIL'}")
    _write(args, "\n".join(lines) + "\n")
    return 0 if ok else 2


COMMANDS = {
    "eq": cmd_eq,
    "price": cmd_price,
    "eval": cmd_eval,
    "simulate": lambda a: cmd_eval(a, simulate=True),
    "bench": cmd_bench,
    "repro": cmd_repro,
    "hardness": cmd_hardness,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    try:
        return COMMANDS[args.command](args)
    except (SocialGoodsError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run())
