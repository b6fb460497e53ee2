"""Buyer equilibria induced by posted prices.

Agents use threshold strategies: agent i buys iff v_i >= T_i, where T_i
makes them indifferent between paying p_i for full value and free-riding on
the expected externality, T_i = p_i / (1 - E[x_i(S)]).

Simultaneous sales: fixed-point iteration for any externality model, and an
exhaustive scan over the aggregate P = prod_j F_j(T_j) for full and
status-based externalities that enumerates all equilibria, including
continua.

Sequential sales: backward induction in arrival order. A threshold of +inf
means the agent never buys.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConsistencyError, DomainError, NonConvergenceError, UnsupportedError
from .scenario import (
    INF,
    Adaptive,
    Anonymous,
    AvailabilityBased,
    CountIndexed,
    Full,
    NetworkBased,
    Scenario,
    Simple,
    StatusBased,
    TwoTier,
    count_indexed,
    per_agent,
    schedule_to_doc,
)


@dataclass
class EquilibriumReport:
    thresholds: object
    buy_probs: tuple
    revenue: float
    no_sale_prob: Optional[float] = None
    count_tables: Optional[dict] = None
    flags: tuple = ()
    prices: object = None
    mode: str = "simultaneous"
    continuum: Optional[dict] = None

    def to_doc(self) -> dict:
        doc = {
            "mode": self.mode,
            "thresholds": schedule_to_doc(self.thresholds),
            "buy_probs": list(self.buy_probs),
            "revenue": self.revenue,
            "no_sale_prob": self.no_sale_prob,
            "flags": list(self.flags),
        }
        if self.prices is not None:
            doc["prices"] = schedule_to_doc(self.prices)
        if self.count_tables is not None:
            doc["count_tables"] = {k: np.asarray(v).tolist() for k, v in self.count_tables.items()}
        if self.continuum is not None:
            doc["continuum"] = self.continuum
        return doc


def _threshold(price: float, denom: float, flags: list, tag: str) -> float:
    """price / denom with the conventions inf for 0 denominators and 0 for 0/0."""
    if math.isinf(price):
        return INF
    if denom <= 0.0:
        if price > 0.0:
            return INF
        flags.append(f"degenerate:{tag}")
        return 0.0
    return price / denom


def _pay(price, sell_prob):
    """price * sell probability with inf * 0 = 0."""
    return 0.0 if sell_prob <= 0.0 else price * sell_prob


def _F(d, t):
    return float(d.cdf(t))


def _require(s: Scenario, sequential: bool, models, name):
    if s.sequential != sequential:
        raise DomainError(f"{name} needs a {'sequential' if sequential else 'simultaneous'} scenario")
    if not isinstance(s.externality, models):
        raise DomainError(f"{name} does not handle {type(s.externality).__name__} externalities")


# ----------------------------------------------------------------------------
# simultaneous: expected externality under independent purchases


def count_distribution(probs) -> np.ndarray:
    """Distribution of the number of successes of independent Bernoulli(probs)."""
    dist = np.zeros(len(probs) + 1)
    dist[0] = 1.0
    for m, b in enumerate(probs, start=1):
        dist[1:m + 1] = dist[1:m + 1] * (1.0 - b) + dist[:m] * b
        dist[0] *= 1.0 - b
    return dist


def expected_fraction(ext, i: int, buy) -> float:
    """E[x_i(S)] when each j != i is in S independently with probability buy[j]."""
    others = [buy[j] for j in range(len(buy)) if j != i]
    if isinstance(ext, Full):
        return 1.0 - float(np.prod([1.0 - b for b in others]))
    if isinstance(ext, StatusBased):
        return ext.w[i] * (1.0 - float(np.prod([1.0 - b for b in others])))
    if isinstance(ext, NetworkBased):
        return 1.0 - float(np.prod([1.0 - buy[j] for j in ext.neighbors(i)]))
    if isinstance(ext, AvailabilityBased):
        cd = count_distribution(others)
        return float(sum(ext.weight(k) * cd[k] for k in range(len(cd))))
    raise UnsupportedError(f"unknown externality {type(ext).__name__}")


def _sim_report(s, prices, T, flags, extra=()):
    F = np.array([_F(d, t) for d, t in zip(s.dists, T)])
    buy = 1.0 - F
    revenue = float(sum(_pay(p, b) for p, b in zip(prices, buy)))
    return EquilibriumReport(
        thresholds=Simple(tuple(T)),
        buy_probs=tuple(float(b) for b in buy),
        revenue=revenue,
        no_sale_prob=float(np.prod(F)),
        flags=tuple(flags) + tuple(extra),
        prices=Simple(tuple(prices)),
        mode="simultaneous",
    )


def solve_sim_fixed_point(s: Scenario, p, damping: float = 0.5, max_iter: int = 100_000,
                          tol: float = 1e-13, start=None) -> EquilibriumReport:
    """Damped iteration q <- (1-a) q + a Phi(q) on no-buy probabilities."""
    _require(s, False, (Full, StatusBased, AvailabilityBased, NetworkBased), "solve_sim_fixed_point")
    if not 0.0 < damping <= 1.0:
        raise DomainError("damping must lie in (0, 1]")
    n = s.n
    prices = per_agent(p, n)
    q = np.ones(n) if start is None else np.array(start, dtype=float)

    def phi(q):
        flags = []
        buy = 1.0 - q
        T = [_threshold(prices[i], 1.0 - expected_fraction(s.externality, i, buy), flags, f"agent{i}")
             for i in range(n)]
        return np.array([_F(d, t) for d, t in zip(s.dists, T)]), T, flags

    res = INF
    for it in range(1, max_iter + 1):
        new, _, _ = phi(q)
        res = float(np.max(np.abs(new - q)))
        if res <= tol:
            q = new
            break
        q = (1.0 - damping) * q + damping * new
    else:
        raise NonConvergenceError("fixed-point iteration did not converge", res, max_iter, last=q)
    _, T, flags = phi(q)
    extra = ("no guarantee",) if isinstance(s.externality, AvailabilityBased) else ()
    return _sim_report(s, prices, T, flags, extra)


# ----------------------------------------------------------------------------
# simultaneous: scan over the aggregate P for full/status externalities


@dataclass
class ScanResult:
    equilibria: list
    worst: EquilibriumReport
    best: EquilibriumReport
    continua: list = field(default_factory=list)


class _Agent:
    """Root structure of one agent's scalar equilibrium equation.

    For interior purchase probability the equation reads P = psi(q) with
    psi(q) = q (p - (1-w) Q(q)) / (w Q(q)), q = F(T), Q the quantile.
    q = 1 (never buys) is a root whenever P <= psi(1).
    """

    def __init__(self, d, price, w, q_nodes):
        self.d, self.p, self.w = d, price, w
        qs = np.unique(np.concatenate([q_nodes, d.q_breakpoints()]))
        self.q = qs
        self.psi_vals = self.psi(qs)
        self.psi_one = float(self.psi_vals[-1])
        self.pieces = []  # (q_lo_idx, q_hi_idx) monotone runs
        self.flats = []  # (level, q_lo, q_hi)
        self._segment()

    def psi(self, q):
        T = np.asarray(self.d.quantile(np.asarray(q, dtype=float)), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return q * (self.p - (1.0 - self.w) * T) / (self.w * T)

    def _segment(self):
        v = self.psi_vals
        d = np.diff(v)
        dq = np.diff(self.q)
        mag = np.maximum(np.abs(v[:-1]), np.abs(v[1:]))
        # flat: change at rounding level, or a relative slope below 1e-9
        flat = np.abs(d) <= np.maximum(1e-14 * mag, 1e-9 * dq * mag)
        sign = np.where(flat, 0, np.sign(d)).astype(int)
        sign[~np.isfinite(d)] = 2  # unusable cells
        k = 0
        m = len(sign)
        while k < m:
            j = k
            while j + 1 < m and sign[j + 1] == sign[k]:
                j += 1
            if sign[k] == 0:
                if j > k and self.q[j + 1] - self.q[k] >= 1e-6:
                    self.flats.append((float(np.median(v[k:j + 2])), float(self.q[k]), float(self.q[j + 1])))
                else:
                    self.pieces.append((k, j + 1))
            elif sign[k] != 2:
                self.pieces.append((k, j + 1))
            k = j + 1

    def solve_piece(self, piece, P):
        """q on a monotone piece with psi(q) = P (nan where P is out of range)."""
        a, b = piece
        qs, vs = self.q[a:b + 1], self.psi_vals[a:b + 1]
        P = np.atleast_1d(np.asarray(P, dtype=float))
        inc = vs[-1] >= vs[0]
        vv = vs if inc else vs[::-1]
        qq = qs if inc else qs[::-1]
        lo_v, hi_v = vv[0], vv[-1]
        ok = (P >= lo_v) & (P <= hi_v)
        idx = np.clip(np.searchsorted(vv, P, side="left"), 1, len(vv) - 1)
        left, right = qq[idx - 1], qq[idx]
        lo_q, hi_q = np.minimum(left, right), np.maximum(left, right)
        exact = np.isclose(vv[idx], P, rtol=0, atol=0)
        for _ in range(60):
            mid = 0.5 * (lo_q + hi_q)
            val = self.psi(mid)
            up = (val >= P) if inc else (val <= P)
            hi_q = np.where(up, mid, hi_q)
            lo_q = np.where(up, lo_q, mid)
        out = np.where(exact, qq[idx], 0.5 * (lo_q + hi_q))
        return np.where(ok, out, np.nan)

    def branches(self):
        """Callables P -> q for every root branch, including never-buying."""
        out = [lambda P, pc=pc: self.solve_piece(pc, P) for pc in self.pieces]
        out.append(lambda P: np.where(np.atleast_1d(P) <= self.psi_one * (1 + 1e-12) + 1e-15, 1.0, np.nan))
        return out

    def roots_at(self, P):
        vals = []
        for br in self.branches():
            r = float(br(np.array([P]))[0])
            if np.isfinite(r) and not any(abs(r - x) <= 1e-10 for x in vals):
                vals.append(r)
        return vals

    def threshold(self, q, others):
        """T for purchase-free probability q given prod of the others' F."""
        if q >= 1.0:
            return _threshold(self.p, (1.0 - self.w) + self.w * others, [], "")
        return float(self.d.quantile(q))


def _p_grid(grid):
    lin = np.linspace(0.0, 1.0, grid + 1)[1:]
    geo = np.geomspace(1e-10, 1.0, max(grid // 4, 10))
    return np.unique(np.concatenate([lin, geo]))


def _q_nodes(m):
    lin = np.linspace(0.0, 1.0, m + 1)[1:-1]
    near0 = np.geomspace(1e-12, 0.5, m // 4)
    near1 = 1.0 - np.geomspace(1e-9, 0.5, m // 4)
    return np.unique(np.concatenate([lin, near0, near1, [1.0]]))


def _worst_box(a, lo, hi, target_log):
    """max sum a_i q_i s.t. sum log q_i = target_log, q in boxes (a vertex optimum)."""
    m = len(a)
    best = None
    for free in range(m):
        rest = [i for i in range(m) if i != free]
        for corner in itertools.product((0, 1), repeat=len(rest)):
            q = np.empty(m)
            for i, c in zip(rest, corner):
                q[i] = hi[i] if c else lo[i]
            qf = math.exp(target_log - sum(math.log(q[i]) for i in rest))
            if qf < lo[free] * (1 - 1e-12) or qf > hi[free] * (1 + 1e-12):
                continue
            q[free] = min(max(qf, lo[free]), hi[free])
            val = float(np.dot(a, q))
            if best is None or val > best[0] + 1e-15:
                best = (val, q)
    return best[1] if best else None


def _best_box(a, lo, hi, target_log):
    """min sum a_i q_i s.t. sum log q_i = target_log: water-filling a_i q_i = lam."""
    def q_of(loglam):
        return np.clip(np.exp(loglam - np.log(a)), lo, hi)

    lo_l, hi_l = math.log(lo.min() * a.min()) - 1, math.log(hi.max() * a.max()) + 1
    for _ in range(200):
        mid = 0.5 * (lo_l + hi_l)
        if np.sum(np.log(q_of(mid))) < target_log:
            lo_l = mid
        else:
            hi_l = mid
        if hi_l - lo_l < 1e-15:
            break
    q = q_of(0.5 * (lo_l + hi_l))
    # push the rounding error into one interior coordinate
    free = [i for i in range(len(a)) if lo[i] < q[i] < hi[i]]
    if free:
        i = free[0]
        q[i] = math.exp(target_log - (np.sum(np.log(q)) - math.log(q[i])))
    return q


def scan_sim_equilibria(s: Scenario, p, grid: int = 10_000, _escalated: bool = False) -> ScanResult:
    """Enumerate simultaneous equilibria via the aggregate no-sale probability P."""
    _require(s, False, (Full, StatusBased), "scan_sim_equilibria")
    if grid < 10:
        raise DomainError("grid must be at least 10")
    n = s.n
    prices = per_agent(p, n)
    w = (1.0,) * n if isinstance(s.externality, Full) else s.externality.w

    # agents whose behaviour ignores P
    const = {}
    for i in range(n):
        if math.isinf(prices[i]):
            const[i] = 1.0
        elif w[i] == 0.0:
            const[i] = _F(s.dists[i], prices[i])
    var = [i for i in range(n) if i not in const]
    const_prod = float(np.prod(list(const.values()))) if const else 1.0

    q_nodes = _q_nodes(max(256, grid // 2))
    agents = {i: _Agent(s.dists[i], prices[i], w[i], q_nodes) for i in var}

    found = {}  # key -> (q vector, flags, continuum-info)

    def add(qvec, flags=(), info=None):
        key = tuple(np.round(qvec, 9))
        if key not in found or (info is not None and found[key][2] is None):
            found[key] = (np.array(qvec, dtype=float), tuple(flags), info)

    # P = 0: some agent never passes on the sale
    q0 = np.array([const.get(i, _F(s.dists[i], _threshold(prices[i], 1.0 - w[i], [], "")))
                   for i in range(n)])
    for i in range(n):
        qv = q0.copy()
        qv[i] = 0.0
        others = float(np.prod(np.delete(qv, i)))
        T = _threshold(prices[i], (1.0 - w[i]) + w[i] * others, [], "")
        if _F(s.dists[i], T) == 0.0 and all(
            (q0[j] == qv[j]) for j in range(n) if j != i
        ):
            add(qv, ("zero-aggregate",))

    # regular branches
    Pg = _p_grid(grid)
    extra = []
    for a in agents.values():
        for pc in a.pieces:
            extra.extend([a.psi_vals[pc[0]], a.psi_vals[pc[1]]])
        extra.append(a.psi_one)
    Pg = np.unique(np.concatenate([Pg, [x for x in extra if 0.0 < x <= 1.0]]))

    br_lists = [agents[i].branches() for i in var]
    br_vals = [[np.asarray(b(Pg)) for b in bl] for bl in br_lists]
    n_combo = int(np.prod([len(b) for b in br_lists])) if var else 1
    if n_combo > 1 << 14:
        raise UnsupportedError(f"too many root branches to enumerate ({n_combo})")

    def q_from_combo(combo, P):
        qv = np.empty(n)
        for i, c in const.items():
            qv[i] = c
        for k, i in enumerate(var):
            qv[i] = float(br_lists[k][combo[k]](np.array([P]))[0])
        return qv

    for combo in itertools.product(*[range(len(b)) for b in br_lists]):
        prod = np.full(Pg.shape, const_prod)
        for k, c in enumerate(combo):
            prod = prod * br_vals[k][c]
        c_vals = prod - Pg
        valid = np.isfinite(c_vals)
        zero = valid & (np.abs(c_vals) <= 1e-13)
        for idx in np.flatnonzero(zero):
            add(q_from_combo(combo, Pg[idx]))
        both = valid[:-1] & valid[1:]
        change = both & (c_vals[:-1] * c_vals[1:] < 0)
        for idx in np.flatnonzero(change):
            a, b = Pg[idx], Pg[idx + 1]

            def c_at(P):
                qv = q_from_combo(combo, P)
                return float(np.prod(qv)) - P

            ca = c_at(a)
            for _ in range(200):
                mid = 0.5 * (a + b)
                cm = c_at(mid)
                if not np.isfinite(cm):
                    break
                if (cm < 0) == (ca < 0):
                    a, ca = mid, cm
                else:
                    b = mid
                if b - a <= 1e-15 * max(1.0, b):
                    break
            qv = q_from_combo(combo, 0.5 * (a + b))
            if np.all(np.isfinite(qv)):
                add(qv)

    # degenerate continua where psi is flat on an interval
    continua = []
    levels = []
    for i in var:
        for L, qa, qb in agents[i].flats:
            if 0.0 < L <= 1.0 and not any(abs(L - x) <= 1e-11 * max(1, L) for x in levels):
                levels.append(L)
    for P in sorted(levels):
        flat_opts = {}
        point_opts = {}
        for i in var:
            boxes = [(qa, qb) for L, qa, qb in agents[i].flats if abs(L - P) <= 1e-11 * max(1, P)]
            pts = agents[i].roots_at(P)
            if boxes:
                # points inside a box are already covered by it
                pts = [x for x in pts if not any(a - 1e-9 <= x <= b + 1e-9 for a, b in boxes)]
                flat_opts[i] = [("box", b) for b in boxes] + [("pt", x) for x in pts]
            else:
                point_opts[i] = [("pt", x) for x in pts]
        order = list(flat_opts) + list(point_opts)
        choices = [flat_opts.get(i) or point_opts.get(i) for i in order]
        if any(len(c) == 0 for c in choices):
            continue
        if int(np.prod([len(c) for c in choices])) > 1 << 14:
            raise UnsupportedError("too many equilibrium branches at a degenerate level")
        for pick in itertools.product(*choices):
            boxed = [(i, v) for i, (kind, v) in zip(order, pick) if kind == "box"]
            if not boxed:
                continue
            fixed = const_prod * float(np.prod([v for (kind, v) in pick if kind == "pt"] or [1.0]))
            target = P / fixed
            lo = np.array([b[0] for _, b in boxed])
            hi = np.array([b[1] for _, b in boxed])
            if not (np.prod(lo) * (1 - 1e-10) <= target <= np.prod(hi) * (1 + 1e-10)):
                continue
            base = np.empty(n)
            for i, c in const.items():
                base[i] = c
            for i, (kind, v) in zip(order, pick):
                if kind == "pt":
                    base[i] = v
            idxs = [i for i, _ in boxed]
            a_coef = np.array([prices[i] for i in idxs])
            tl = math.log(min(max(target, np.prod(lo)), np.prod(hi)))
            q_worst = _worst_box(a_coef, lo, hi, tl) if len(idxs) > 1 else np.array([math.exp(tl)])
            q_best = _best_box(a_coef, lo, hi, tl) if len(idxs) > 1 else np.array([math.exp(tl)])
            info = {"aggregate": P, "agents": idxs, "boxes": [[float(x), float(y)] for x, y in zip(lo, hi)]}
            for tag, qb in (("continuum-worst", q_worst), ("continuum-best", q_best)):
                if qb is None:
                    continue
                qv = base.copy()
                qv[idxs] = qb
                if len(idxs) > 1 and np.prod(hi) > np.prod(lo) * (1 + 1e-9):
                    add(qv, (tag,), info)
                else:
                    add(qv)
            if len(idxs) > 1 and np.prod(hi) > np.prod(lo) * (1 + 1e-9):
                continua.append(info)

    reports = []
    for qv, flags, info in found.values():
        rep = _scan_report(s, prices, w, qv, flags, info)
        if rep is not None:
            reports.append(rep)

    if not reports:
        if not _escalated:
            return scan_sim_equilibria(s, p, grid=grid * 10, _escalated=True)
        raise ConsistencyError("equilibrium scan found no equilibrium even after refinement")

    reports.sort(key=lambda r: (r.revenue, r.thresholds.values))
    kept = []
    for info in continua:
        members = [r for r in reports if r.continuum is info]
        if members:  # a box can collapse onto a single verified point
            info["revenue_range"] = [min(r.revenue for r in members), max(r.revenue for r in members)]
            kept.append(info)
    continua = kept
    return ScanResult(reports, reports[0], reports[-1], continua)


def _scan_report(s, prices, w, qv, flags, info):
    n = s.n
    T = []
    F = []
    for i in range(n):
        others = float(np.prod(np.delete(qv, i)))
        if qv[i] >= 1.0 or math.isinf(prices[i]):
            t = _threshold(prices[i], (1.0 - w[i]) + w[i] * others, [], "")
        elif qv[i] <= 0.0:
            t = _threshold(prices[i], (1.0 - w[i]) + w[i] * others, [], "")
        elif w[i] == 0.0:
            t = prices[i]
        else:
            t = float(s.dists[i].quantile(qv[i]))
        T.append(t)
        F.append(_F(s.dists[i], t))
    F = np.array(F)
    # verify the fixed-point equations
    for i in range(n):
        others = float(np.prod(np.delete(F, i)))
        denom = (1.0 - w[i]) + w[i] * others
        if math.isinf(T[i]):
            if not (denom <= 0 or math.isinf(prices[i])):
                return None
            continue
        if abs(prices[i] - T[i] * denom) > 1e-9 * max(1.0, prices[i]):
            return None
    rep = _sim_report(s, prices, T, [], flags)
    rep.continuum = info
    return rep


def pessimistic_optimistic(s: Scenario, p, grid: int = 10_000) -> tuple[float, float]:
    r = scan_sim_equilibria(s, p, grid)
    return r.worst.revenue, r.best.revenue


# ----------------------------------------------------------------------------
# sequential


def _position_report(sell_unc, revenue, no_sale, flags, thresholds, prices, tables=None):
    return EquilibriumReport(
        thresholds=thresholds,
        buy_probs=tuple(float(x) for x in sell_unc),
        revenue=float(revenue),
        no_sale_prob=no_sale,
        count_tables=tables,
        flags=tuple(flags),
        prices=prices,
        mode="sequential",
    )


def solve_seq_full(s: Scenario, p) -> EquilibriumReport:
    """Unique sequential equilibrium with full externalities."""
    _require(s, True, (Full,), "solve_seq_full")
    n = s.n
    prices = per_agent(p, n)
    order = s.order
    flags = []
    T = [0.0] * n
    cont = 1.0
    for k in reversed(range(n)):
        i = order[k]
        T[i] = _threshold(prices[i], cont, flags, f"agent{i}")
        cont *= _F(s.dists[i], T[i])
    reach = 1.0
    revenue = 0.0
    buy = [0.0] * n
    for i in order:
        sell = 1.0 - _F(s.dists[i], T[i])
        buy[i] = reach * sell
        revenue += _pay(prices[i], buy[i])
        reach *= 1.0 - sell
    return _position_report(buy, revenue, reach, flags, Simple(tuple(T)), Simple(tuple(prices)))


def _two_tier(p, n):
    if isinstance(p, TwoTier):
        if len(p.before) != n:
            raise DomainError(f"schedule has {len(p.before)} entries for {n} agents")
        return p.before, p.after
    v = per_agent(p, n)
    return v, v


def solve_seq_status(s: Scenario, p) -> EquilibriumReport:
    """Sequential equilibrium with status-based externalities and two-tier prices."""
    _require(s, True, (StatusBased, Full), "solve_seq_status")
    n = s.n
    w = (1.0,) * n if isinstance(s.externality, Full) else s.externality.w
    before, after = _two_tier(p, n)
    order = s.order
    flags = []
    T_after = [_threshold(after[i], 1.0 - w[i], flags, f"after{i}") for i in range(n)]
    T_before = [0.0] * n
    cont = 1.0
    for k in reversed(range(n)):
        i = order[k]
        T_before[i] = _threshold(before[i], (1.0 - w[i]) + w[i] * cont, flags, f"before{i}")
        cont *= _F(s.dists[i], T_before[i])
    none_yet = 1.0
    revenue = 0.0
    buy = [0.0] * n
    for i in order:
        s0 = 1.0 - _F(s.dists[i], T_before[i])
        s1 = 1.0 - _F(s.dists[i], T_after[i])
        buy[i] = none_yet * s0 + (1.0 - none_yet) * s1
        revenue += none_yet * _pay(before[i], s0) + (1.0 - none_yet) * _pay(after[i], s1)
        none_yet *= 1.0 - s0
    return _position_report(buy, revenue, none_yet, flags,
                            TwoTier(tuple(T_before), tuple(T_after)),
                            TwoTier(tuple(before), tuple(after)))


def _availability_backward(dists_in_order, weight, values, as_prices: bool):
    """Backward pass over count-indexed rows.

    values are prices (as_prices) or thresholds; returns (T rows, P rows, r, flags)
    where r[k][j][l] is the probability that l agents buy in total given j
    bought before position k.
    """
    n = len(dists_in_order)
    r = np.zeros((n + 1, n + 2, n + 1))
    for j in range(n + 1):
        r[n, j, j] = 1.0
    T_rows, P_rows, flags = [], [], []
    for k in reversed(range(n)):
        d = dists_in_order[k]
        t_row, p_row = [0.0] * (k + 1), [0.0] * (k + 1)
        for j in range(k + 1):
            cont = 1.0 - sum(weight(l) * r[k + 1, j, l] for l in range(j, n))
            if as_prices:
                price = values[k][j]
                t = _threshold(price, cont, flags, f"position{k},count{j}")
            else:
                t = values[k][j]
                price = INF if math.isinf(t) else t * cont
            f = _F(d, t)
            r[k, j, :] = f * r[k + 1, j, :] + (1.0 - f) * r[k + 1, j + 1, :]
            t_row[j], p_row[j] = t, price
        T_rows.insert(0, t_row)
        P_rows.insert(0, p_row)
    return T_rows, P_rows, r[:, : n + 1, :], flags


def count_forward(dists_in_order, T_rows):
    """q[k][j]: probability that j agents bought before position k."""
    n = len(dists_in_order)
    q = np.zeros((n + 1, n + 1))
    q[0, 0] = 1.0
    for k in range(n):
        for j in range(k + 1):
            f = _F(dists_in_order[k], T_rows[k][j])
            q[k + 1, j] += q[k, j] * f
            q[k + 1, j + 1] += q[k, j] * (1.0 - f)
    return q


def solve_seq_availability(s: Scenario, p) -> EquilibriumReport:
    """Sequential equilibrium with availability-based externalities.

    Count-indexed prices use the count recursion; Adaptive (history-set)
    prices are solved by backward induction over purchase histories.
    """
    _require(s, True, (AvailabilityBased, Full), "solve_seq_availability")
    if isinstance(p, Adaptive):
        return solve_seq_adaptive(s, p)
    if not isinstance(p, (CountIndexed, Simple, Anonymous)):
        raise DomainError("availability pricing needs CountIndexed, Adaptive or per-agent prices")
    n = s.n
    p = count_indexed(p, s.order)
    if len(p.rows) != n:
        raise DomainError(f"schedule has {len(p.rows)} rows for {n} agents")
    weight = s.externality.weight if isinstance(s.externality, AvailabilityBased) else (
        lambda k: 0.0 if k == 0 else 1.0)
    dists = [s.dists[i] for i in s.order]
    T_rows, _, r, flags = _availability_backward(dists, weight, p.rows, as_prices=True)
    q = count_forward(dists, T_rows)
    revenue = 0.0
    buy = [0.0] * n
    for k, i in enumerate(s.order):
        for j in range(k + 1):
            sell = 1.0 - _F(dists[k], T_rows[k][j])
            buy[i] += q[k, j] * sell
            revenue += q[k, j] * _pay(p.rows[k][j], sell)
    below = np.cumsum(r, axis=2) - r  # r^{<l}
    return _position_report(buy, revenue, float(q[n, 0]), flags,
                            CountIndexed(tuple(tuple(row) for row in T_rows)), p,
                            tables={"q": q, "r": r, "r_below": below})


def _history_solver(s: Scenario, value_of, as_prices: bool):
    """Backward induction over purchase histories for any externality model.

    value_of(i, H) returns agent i's price (or threshold) after buyers H.
    Returns dict (k, H) -> (revenue, expected fraction per agent, T, price).
    """
    n = s.n
    order = s.order
    ext = s.externality
    memo = {}

    def solve(k, H):
        key = (k, H)
        if key in memo:
            return memo[key]
        if k == n:
            out = (0.0, np.array([ext.fraction(a, H) for a in range(n)]), None, None)
            memo[key] = out
            return out
        i = order[k]
        r0, e0, _, _ = solve(k + 1, H)
        r1, e1, _, _ = solve(k + 1, H | {i})
        cont = 1.0 - e0[i]
        if as_prices:
            price = value_of(i, H)
            t = _threshold(price, cont, [], "")
        else:
            t = value_of(i, H)
            price = INF if math.isinf(t) else t * cont
        f = _F(s.dists[i], t)
        rev = f * r0 + (1.0 - f) * r1 + _pay(price, 1.0 - f)
        out = (rev, f * e0 + (1.0 - f) * e1, t, price)
        memo[key] = out
        return out

    solve(0, frozenset())
    return memo


def solve_seq_adaptive(s: Scenario, p: Adaptive) -> EquilibriumReport:
    """Sequential equilibrium for history-dependent prices (any externality model)."""
    if not s.sequential:
        raise DomainError("adaptive prices need a sequential scenario")
    memo = _history_solver(s, p.get, as_prices=True)
    n = s.n
    order = s.order
    T = {}
    reach = {(0, frozenset()): 1.0}
    buy = [0.0] * n
    flags = []
    for k in range(n):
        i = order[k]
        nxt = {}
        for (kk, H), pr in reach.items():
            _, _, t, price = memo[(k, H)]
            T[(i, H)] = t
            if t == 0.0 and price == 0.0:
                flags.append(f"degenerate:agent{i}")
            f = _F(s.dists[i], t)
            buy[i] += pr * (1.0 - f)
            nxt[(k + 1, H)] = nxt.get((k + 1, H), 0.0) + pr * f
            nxt[(k + 1, H | {i})] = nxt.get((k + 1, H | {i}), 0.0) + pr * (1.0 - f)
        reach = nxt
    no_sale = reach.get((n, frozenset()), 0.0)
    return _position_report(buy, memo[(0, frozenset())][0], no_sale, flags,
                            Adaptive(T), p)


def solve(s: Scenario, p) -> EquilibriumReport:
    """Dispatch to the solver matching the scenario; simultaneous full/status use the worst scanned equilibrium."""
    ext = s.externality
    if s.sequential:
        if isinstance(p, Adaptive):
            return solve_seq_adaptive(s, p)
        if isinstance(ext, Full) and isinstance(p, (Simple, Anonymous)):
            return solve_seq_full(s, p)
        if isinstance(ext, (Full, StatusBased)):
            return solve_seq_status(s, p)
        if isinstance(ext, AvailabilityBased):
            return solve_seq_availability(s, p)
        raise UnsupportedError("sequential network equilibria need fixed values (solve_network_seq_fixed_values)")
    if isinstance(ext, (Full, StatusBased)):
        return scan_sim_equilibria(s, p).worst
    return solve_sim_fixed_point(s, p)


# ----------------------------------------------------------------------------
# thresholds -> prices


def thresholds_to_prices(s: Scenario, T):
    """Prices under which the threshold profile T is an equilibrium."""
    ext = s.externality
    n = s.n
    if isinstance(T, Adaptive):
        if not s.sequential:
            raise UnsupportedError("history-dependent thresholds need a sequential scenario")
        memo = _history_solver(s, T.get, as_prices=False)
        return Adaptive({(s.order[k], H): v[3] for (k, H), v in memo.items() if k < n})
    if not s.sequential:
        tv = per_agent(T, n) if isinstance(T, (Simple, Anonymous)) else None
        if tv is None:
            raise UnsupportedError("simultaneous thresholds must be per-agent")
        F = np.array([_F(d, t) for d, t in zip(s.dists, tv)])
        out = []
        for i in range(n):
            if isinstance(ext, Full):
                factor = float(np.prod(np.delete(F, i)))
            elif isinstance(ext, StatusBased):
                factor = (1.0 - ext.w[i]) + ext.w[i] * float(np.prod(np.delete(F, i)))
            elif isinstance(ext, NetworkBased):
                factor = float(np.prod([F[j] for j in ext.neighbors(i)]))
            else:
                raise UnsupportedError("no threshold inversion for simultaneous availability externalities")
            out.append(INF if math.isinf(tv[i]) else tv[i] * factor)
        return Simple(tuple(out))
    order = s.order
    if isinstance(ext, Full) and isinstance(T, (Simple, Anonymous)):
        tv = per_agent(T, n)
        out = [0.0] * n
        cont = 1.0
        for k in reversed(range(n)):
            i = order[k]
            out[i] = INF if math.isinf(tv[i]) else tv[i] * cont
            cont *= _F(s.dists[i], tv[i])
        return Simple(tuple(out))
    if isinstance(ext, StatusBased) and isinstance(T, (TwoTier, Simple, Anonymous)):
        t0, t1 = _two_tier(T, n)
        w = ext.w
        before, after = [0.0] * n, [0.0] * n
        cont = 1.0
        for k in reversed(range(n)):
            i = order[k]
            before[i] = INF if math.isinf(t0[i]) else (1.0 - w[i]) * t0[i] + w[i] * t0[i] * cont
            after[i] = INF if math.isinf(t1[i]) else (1.0 - w[i]) * t1[i]
            cont *= _F(s.dists[i], t0[i])
        return TwoTier(tuple(before), tuple(after))
    if isinstance(ext, AvailabilityBased) and isinstance(T, CountIndexed):
        dists = [s.dists[i] for i in order]
        _, P_rows, _, _ = _availability_backward(dists, ext.weight, T.rows, as_prices=False)
        return CountIndexed(tuple(tuple(r) for r in P_rows))
    raise UnsupportedError(
        f"no threshold inversion for sequential {type(ext).__name__} with {type(T).__name__} thresholds")


# ----------------------------------------------------------------------------
# residuals


def equilibrium_residual(s: Scenario, p, rep: EquilibriumReport) -> float:
    """Largest violation of the equilibrium condition over agents / count indices."""
    n = s.n
    ext = s.externality
    worst = 0.0

    def check(price, t, denom):
        nonlocal worst
        if math.isinf(t):
            if not (denom <= 0.0 or math.isinf(price)):
                worst = max(worst, INF)
            return
        if math.isinf(price):
            worst = INF
            return
        worst = max(worst, abs(price - t * denom))

    if not s.sequential:
        prices = per_agent(p, n)
        tv = rep.thresholds.values
        buy = [1.0 - _F(d, t) for d, t in zip(s.dists, tv)]
        for i in range(n):
            check(prices[i], tv[i], 1.0 - expected_fraction(ext, i, buy))
        return worst
    if isinstance(rep.thresholds, Adaptive):
        implied = thresholds_to_prices(s, rep.thresholds)
        for (i, H), x in implied.table.items():
            y = p.get(i, H)
            if not (math.isinf(x) or math.isinf(y)):
                worst = max(worst, abs(x - y))
        return worst
    other = thresholds_to_prices(s, rep.thresholds)
    if isinstance(p, (Simple, Anonymous)) and isinstance(other, Simple):
        pairs = zip(per_agent(p, n), other.values)
    elif isinstance(other, TwoTier):
        b, a = _two_tier(p, n)
        pairs = list(zip(b, other.before)) + list(zip(a, other.after))
    else:
        pairs = [(x, y) for r1, r2 in zip(p.rows, other.rows) for x, y in zip(r1, r2)]
    for x, y in pairs:
        if math.isinf(x) or math.isinf(y):
            continue
        worst = max(worst, abs(x - y))
    return worst


# ----------------------------------------------------------------------------
# network externalities


@dataclass
class NetworkEquilibrium:
    report: EquilibriumReport
    support: frozenset


def _graph(graph, n=None) -> NetworkBased:
    if isinstance(graph, NetworkBased):
        return graph
    if isinstance(graph, Scenario) and isinstance(graph.externality, NetworkBased):
        return graph.externality
    nodes, edges = graph
    return NetworkBased(int(nodes), tuple(tuple(e) for e in edges))


def solve_network_sim_greedy(graph, p, dists=None) -> NetworkEquilibrium:
    """Greedy equilibrium for uniform[0,1] agents: cheap agents buy, their neighbours free-ride."""
    from .distributions import Uniform

    g = _graph(graph)
    n = g.n_nodes
    prices = per_agent(p, n) if not isinstance(p, (list, tuple)) else tuple(float(x) for x in p)
    if dists is not None and any(d != Uniform(0.0, 1.0) for d in dists):
        raise DomainError("the greedy network equilibrium needs uniform[0,1] agents")
    S = set()
    for i in sorted(range(n), key=lambda i: (prices[i], i)):
        if prices[i] < 1.0 and not (g.neighbors(i) & S):
            S.add(i)
    T = []
    for i in range(n):
        if i in S:
            T.append(prices[i])
        else:
            block = float(np.prod([prices[j] for j in g.neighbors(i) & S]))
            T.append(_threshold(prices[i], block, [], ""))
    s = Scenario(tuple(Uniform(0.0, 1.0) for _ in range(n)), g)
    rep = _sim_report(s, prices, T, [])
    return NetworkEquilibrium(rep, frozenset(S))


def solve_network_seq_fixed_values(graph, p, order=None) -> frozenset:
    """Subgame-perfect buyers with all values 1: reverse-arrival greedy."""
    g = _graph(graph)
    n = g.n_nodes
    prices = per_agent(p, n) if not isinstance(p, (list, tuple)) else tuple(float(x) for x in p)
    if any(x == 1.0 for x in prices):
        raise DomainError("a price equal to the value 1 leaves the purchase decision tied")
    order = tuple(range(n)) if order is None else tuple(order)
    S = set()
    for i in reversed(order):
        if prices[i] < 1.0 and not (g.neighbors(i) & S):
            S.add(i)
    return frozenset(S)
