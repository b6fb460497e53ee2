"""Brute-force and quadrature benchmarks.

Everything here is written against the primitive definitions (CDFs,
quantiles, virtual values, game trees) rather than through the pricing or
equilibrium code, so that the two can be checked against each other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import equilibrium as eq
from .distributions import Distribution, PiecewiseLinear
from .errors import DomainError, UnsupportedError
from .scenario import (
    Adaptive,
    AvailabilityBased,
    CountIndexed,
    Full,
    NetworkBased,
    Scenario,
    Sequential,
    Simple,
    Simultaneous,
)

INF = math.inf


@dataclass(frozen=True)
class Benchmark:
    kind: str
    value: float
    method: str
    error: float

    def to_doc(self) -> dict:
        return {"kind": self.kind, "value": self.value, "method": self.method, "error": self.error}


def _regular(dists):
    for d in dists:
        if not d.regular:
            raise UnsupportedError("benchmark needs regular distributions")


# ----------------------------------------------------------------------------
# optimal single-item and k-unit revenue


def _phi_of_quantile(d: Distribution, u):
    v = np.asarray(d.quantile(np.clip(u, 0.0, 1.0)), dtype=float)
    v = np.clip(v, d.lo, d.hi)
    return np.asarray(d.virtual_value(v), dtype=float)


def _phi_cdf(d: Distribution, t: np.ndarray, iters: int = 64) -> np.ndarray:
    """P(phi(v) <= t) by bisection on the quantile, vectorized over t."""
    lo = np.zeros_like(t)
    hi = np.ones_like(t)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        below = _phi_of_quantile(d, mid) <= t
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    top = _phi_of_quantile(d, np.ones_like(t)) <= t
    return np.where(top, 1.0, lo)


def _kinks(d: Distribution) -> list[float]:
    pts = [float(d.hi)]
    with np.errstate(all="ignore"):
        base = float(_phi_of_quantile(d, np.asarray(0.0)))
    if np.isfinite(base):
        pts.append(base)
    if isinstance(d, PiecewiseLinear):
        vs = d._vs
        for v in vs[1:-1]:
            for side in (-1e-12, 1e-12):
                x = min(max(v + side, d.lo), d.hi)
                pts.append(float(d.virtual_value(x)))
    return pts


def _expected_top_k(probs: np.ndarray, k: int) -> np.ndarray:
    """E[min(k, N)] for N a sum of independent Bernoulli(probs[i]); probs is (n, m)."""
    n, m = probs.shape
    dist = np.zeros((n + 1, m))
    dist[0] = 1.0
    for i in range(n):
        p = probs[i]
        nxt = dist * (1.0 - p)
        nxt[1:] += dist[:-1] * p
        dist = nxt
    counts = np.minimum(np.arange(n + 1), k)[:, None]
    return np.sum(dist * counts, axis=0)


def _gauss_panels(edges, order):
    x, wts = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * wts)
    return np.concatenate(nodes), np.concatenate(weights)


def _tail_integral(dists, k: int, panels: int):
    # E[sum of the k largest positive virtual values] = int_0^inf E[min(k, #{phi_i > t})] dt
    top = max(float(d.hi) for d in dists)
    cuts = {0.0, top}
    for d in dists:
        cuts.update(x for x in _kinks(d) if 0.0 < x < top)
    cuts = sorted(cuts)
    edges = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        edges.extend(np.linspace(a, b, panels + 1)[:-1])
    edges.append(top)
    edges = np.array(edges)

    def rule(order):
        t, wts = _gauss_panels(edges, order)
        probs = np.vstack([1.0 - _phi_cdf(d, t) for d in dists])
        return float(np.dot(wts, _expected_top_k(probs, k)))

    fine, coarse = rule(16), rule(8)
    return fine, abs(fine - coarse) + 1e-12


def _mc_top_k(dists, k: int, samples: int, seed: int):
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    total = np.zeros(samples)
    phis = []
    for d in dists:
        v = np.clip(np.asarray(d.quantile(rng.random(samples))), d.lo, d.hi)
        phis.append(np.maximum(np.asarray(d.virtual_value(v)), 0.0))
    phis = np.sort(np.vstack(phis), axis=0)[::-1]
    total = phis[:k].sum(axis=0)
    return float(total.mean()), float(total.std(ddof=1) / math.sqrt(samples))


def myerson_k_uniform(dists: Sequence[Distribution], k: int, method: str = "quadrature",
                      samples: int = 1_000_000, seed: int = 0, panels: int = 32) -> Benchmark:
    """Optimal revenue for selling k identical units: E[sum of the k largest positive virtual values]."""
    dists = list(dists)
    _regular(dists)
    if not 1 <= k <= len(dists):
        raise DomainError(f"k must lie in 1..{len(dists)}")
    kind = "Myer" if k == 1 else f"MyerK({k})"
    if method == "quadrature":
        value, err = _tail_integral(dists, k, panels)
        return Benchmark(kind, value, "gauss-legendre tail integral over virtual-value levels", err)
    if method == "mc":
        value, se = _mc_top_k(dists, k, samples, seed)
        return Benchmark(kind, value, f"monte carlo, {samples} samples", 4.0 * se)
    raise DomainError(f"unknown method {method!r}")


def myerson_revenue(dists: Sequence[Distribution], method: str = "quadrature", **kw) -> Benchmark:
    """Optimal single-item revenue E[max_i phi_i(v_i)^+]."""
    return myerson_k_uniform(dists, 1, method=method, **kw)


# ----------------------------------------------------------------------------
# grid-optimal thresholds (full externalities)


@dataclass
class GridOptimum:
    thresholds: Simple
    revenue: float
    error: float
    mode: str
    order: Optional[tuple]
    prices: Simple
    solver_revenue: float

    @property
    def benchmark(self) -> Benchmark:
        kind = "OptSeq" if self.mode == "sequential" else "OptSimBest"
        return Benchmark(kind, self.revenue, "grid search with coordinate polish", self.error)


def _rev_sim(T, F):
    # sum_i p_i (1 - F_i), p_i = T_i prod_{j != i} F_j
    n = len(T)
    total = 0.0
    for i in range(n):
        others = 1.0
        for j in range(n):
            if j != i:
                others = others * F[j]
        total = total + T[i] * others * (1.0 - F[i])
    return total


def _rev_seq(T, F, order):
    # arrival-by-arrival: agent reached with prod_{before} F, pays T_i prod_{after} F
    total = 0.0
    for pos, i in enumerate(order):
        reach = 1.0
        for j in order[:pos]:
            reach = reach * F[j]
        after = 1.0
        for j in order[pos + 1:]:
            after = after * F[j]
        total = total + reach * T[i] * after * (1.0 - F[i])
    return total


def grid_optimal_thresholds(s: Scenario, mode: Optional[str] = None, resolution: int = 200,
                            order: Optional[Sequence[int]] = None, polish: bool = True,
                            verify: bool = True) -> GridOptimum:
    """Maximize full-externality revenue over threshold profiles by exhaustive grid search."""
    if not isinstance(s.externality, Full):
        raise DomainError("grid_optimal_thresholds needs full externalities")
    n = s.n
    if n > 3:
        raise UnsupportedError(f"grid search costs resolution^n; n={n} > 3 is refused, "
                               "use pricing bounds or Monte Carlo instead")
    if resolution < 2:
        raise DomainError("resolution must be at least 2")
    mode = mode or ("sequential" if s.sequential else "simultaneous")
    if mode == "sequential":
        order = tuple(order) if order is not None else (s.order if s.sequential else tuple(range(n)))
        if sorted(order) != list(range(n)):
            raise DomainError("order must be a permutation")
        value = lambda T, F: _rev_seq(T, F, order)
    elif mode == "simultaneous":
        order = None
        value = _rev_sim
    else:
        raise DomainError(f"unknown mode {mode!r}")

    axes = [np.linspace(float(d.lo), float(d.hi), resolution) for d in s.dists]
    cdf_axes = [np.asarray(d.cdf(a), dtype=float) for d, a in zip(s.dists, axes)]

    def shaped(arr, axis, lead):
        shape = [1] * n
        shape[axis] = lead
        return arr.reshape(shape)

    best = -INF
    best_idx = None
    jumps = np.zeros(n)
    rows = max(1, (1 << 22) // (resolution ** (n - 1)))
    for a in range(0, resolution, rows):
        b = min(resolution, a + rows + 1)  # one row of overlap for axis-0 differences
        T = [shaped(axes[0][a:b], 0, b - a)] + [shaped(axes[i], i, resolution) for i in range(1, n)]
        F = [shaped(cdf_axes[0][a:b], 0, b - a)] + [shaped(cdf_axes[i], i, resolution) for i in range(1, n)]
        R = np.broadcast_to(value(T, F), (b - a,) + (resolution,) * (n - 1))
        for ax in range(n):
            if R.shape[ax] > 1:
                jumps[ax] = max(jumps[ax], float(np.max(np.abs(np.diff(R, axis=ax)))))
        flat = int(np.argmax(R))
        if R.flat[flat] > best:
            best = float(R.flat[flat])
            idx = np.unravel_index(flat, R.shape)
            best_idx = (idx[0] + a,) + tuple(idx[1:])
    T_best = [float(axes[i][best_idx[i]]) for i in range(n)]
    step = [float(axes[i][1] - axes[i][0]) for i in range(n)]
    error = 0.5 * float(np.sum(jumps))

    def scalar_rev(Tv):
        return float(value(Tv, [float(d.cdf(t)) for d, t in zip(s.dists, Tv)]))

    if polish:
        for _ in range(8):
            before = scalar_rev(T_best)
            for i in range(n):
                lo = max(float(s.dists[i].lo), T_best[i] - step[i])
                hi = min(float(s.dists[i].hi), T_best[i] + step[i])

                def neg(x, i=i):
                    trial = list(T_best)
                    trial[i] = x
                    return -scalar_rev(trial)

                res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                      options={"xatol": 1e-12})
                if -res.fun > scalar_rev(T_best):
                    T_best[i] = float(res.x)
            if scalar_rev(T_best) - before < 1e-15:
                break
        best = max(best, scalar_rev(T_best))

    thresholds = Simple(tuple(T_best))
    if mode == "sequential":
        scen = Scenario(s.dists, Full(), Sequential(order))
    else:
        scen = Scenario(s.dists, Full(), Simultaneous())
    prices = eq.thresholds_to_prices(scen, thresholds)
    solver_rev = float("nan")
    if verify:
        if mode == "sequential":
            solver_rev = eq.solve(scen, prices).revenue
        else:
            solver_rev = eq.scan_sim_equilibria(scen, prices).best.revenue
    return GridOptimum(thresholds, best, error, mode, order, prices, solver_rev)


# ----------------------------------------------------------------------------
# adaptive pricing under availability externalities


def _histories(n):
    """(position, history) pairs; history = buyers among the earlier positions."""
    out = []
    for k in range(n):
        for r in range(k + 1):
            for H in itertools.combinations(range(k), r):
                out.append((k, frozenset(H)))
    return out


def _game_value(dists, weight, price_of, n):
    """Revenue of history-dependent prices by backward induction (positions are agents)."""
    memo = {}

    def go(k, H):
        # returns (revenue from position k on, expected final fraction for a non-buyer)
        key = (k, H)
        if key in memo:
            return memo[key]
        if k == n:
            out = (0.0, weight(len(H)))
        else:
            r0, w0 = go(k + 1, H)
            r1, w1 = go(k + 1, H | {k})
            p = price_of(k, H)
            if w0 >= 1.0:
                t = 0.0 if p <= 0.0 else INF
            else:
                t = p / (1.0 - w0)
            f = float(dists[k].cdf(t)) if t != INF else 1.0
            sell = 1.0 - f
            out = (f * r0 + sell * (r1 + p), f * w0 + sell * w1)
        memo[key] = out
        return out

    return go(0, frozenset())[0]


@dataclass
class AdaptiveOptimum:
    prices: object
    revenue: float
    error: float
    restricted: bool
    table: dict = field(default_factory=dict)

    @property
    def benchmark(self) -> Benchmark:
        return Benchmark("OptAdaptiveAvailability", self.revenue,
                         "multi-start L-BFGS-B over history prices", self.error)


def optimal_adaptive_availability(dists: Sequence[Distribution], w, restricted: bool = False,
                                  starts: int = 64, seed: int = 0) -> AdaptiveOptimum:
    """Best history-dependent (or count-dependent when restricted) prices in arrival order 0..n-1."""
    dists = list(dists)
    n = len(dists)
    if n > 4:
        raise UnsupportedError("adaptive optimization is desk-scale: n <= 4")
    ext = AvailabilityBased(tuple(w)) if not isinstance(w, AvailabilityBased) else w
    if len(ext.w) != n:
        raise DomainError(f"w must have {n} entries")
    weight = ext.weight
    if restricted:
        keys = [(k, j) for k in range(n) for j in range(k + 1)]
        index = {key: m for m, key in enumerate(keys)}
        price_of = lambda x, k, H: x[index[(k, len(H))]]
    else:
        keys = _histories(n)
        index = {key: m for m, key in enumerate(keys)}
        price_of = lambda x, k, H: x[index[(k, H)]]
    hi = max(float(d.hi) for d in dists)

    def neg(x):
        return -_game_value(dists, weight, lambda k, H: price_of(x, k, H), n)

    def start(rng):
        # random thresholds inside the supports, turned into prices by the same backward pass;
        # starting from prices directly often lands on flat no-sale regions
        T = {key: rng.uniform(float(dists[key[0]].lo), float(dists[key[0]].hi)) for key in _histories(n)}
        cont = {}

        def fraction(k, H):
            if (k, H) in cont:
                return cont[(k, H)]
            if k == n:
                return weight(len(H))
            w0 = fraction(k + 1, H)
            w1 = fraction(k + 1, H | {k})
            f = float(dists[k].cdf(T[(k, H)]))
            cont[(k, H)] = f * w0 + (1.0 - f) * w1
            return cont[(k, H)]

        fraction(0, frozenset())
        x = np.zeros(len(keys))
        hits = np.zeros(len(keys))
        for k, H in _histories(n):
            m = index[(k, len(H))] if restricted else index[(k, H)]
            x[m] += T[(k, H)] * (1.0 - fraction(k + 1, H))
            hits[m] += 1
        return np.clip(x / hits, 0.0, hi)

    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    results = []
    for _ in range(starts):
        x0 = start(rng)
        res = minimize(neg, x0, method="L-BFGS-B", bounds=[(0.0, hi)] * len(keys),
                       options={"ftol": 1e-15, "gtol": 1e-11, "maxiter": 2000})
        results.append((float(-res.fun), res.x))
    results.sort(key=lambda r: -r[0])
    best_val, best_x = results[0]
    # local refinement from the best start
    res = minimize(neg, best_x, method="Nelder-Mead",
                   options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 20000})
    if -res.fun > best_val:
        best_val, best_x = float(-res.fun), np.clip(res.x, 0.0, hi)
    close = [v for v, _ in results if best_val - v < 1e-6]
    spread = best_val - min(close)
    table = {key: float(best_x[m]) for key, m in index.items()}
    if restricted:
        rows = tuple(tuple(table[(k, j)] for j in range(k + 1)) for k in range(n))
        prices = CountIndexed(rows)
    else:
        prices = Adaptive({(k, H): v for (k, H), v in table.items()})
    return AdaptiveOptimum(prices, best_val, spread + 1e-9, restricted, table)


# ----------------------------------------------------------------------------
# network oracles


def _adjacency(graph) -> list[int]:
    g = graph if isinstance(graph, NetworkBased) else eq._graph(graph)
    adj = [0] * g.n_nodes
    for a, b in g.edges:
        adj[a] |= 1 << b
        adj[b] |= 1 << a
    return adj


def max_independent_set(graph) -> tuple[int, frozenset]:
    """Exact maximum independent set by branch and bound (n <= 20)."""
    adj = _adjacency(graph)
    n = len(adj)
    if n > 20:
        raise UnsupportedError(f"exact independent set search is limited to 20 nodes, got {n}")
    best = [0, 0]

    def bits(x):
        return bin(x).count("1")

    def search(cand, chosen, size):
        if size + bits(cand) <= best[0]:
            return
        if cand == 0:
            best[0], best[1] = size, chosen
            return
        # vertices with at most one candidate neighbour can be taken outright
        c = cand
        while c:
            v = (c & -c).bit_length() - 1
            c &= c - 1
            if bits(adj[v] & cand) <= 1:
                search(cand & ~adj[v] & ~(1 << v), chosen | (1 << v), size + 1)
                return
        v = max((i for i in range(n) if cand >> i & 1), key=lambda i: bits(adj[i] & cand))
        search(cand & ~adj[v] & ~(1 << v), chosen | (1 << v), size + 1)
        search(cand & ~(1 << v), chosen, size)

    search((1 << n) - 1, 0, 0)
    return best[0], frozenset(i for i in range(n) if best[1] >> i & 1)


def subgame_perfect_network(graph, prices, values, order=None) -> frozenset:
    """Buyers in the subgame-perfect play of a sequential network sale with known values.

    A non-buyer gets their full value iff some neighbour ends up owning the good.
    Indifference between buying and not (price 0 with a buying neighbour) resolves to
    not buying; a value equal to the price is rejected as ambiguous.
    """
    adj = _adjacency(graph)
    n = len(adj)
    if n > 16:
        raise UnsupportedError("game tree search is limited to 16 agents")
    prices = [float(x) for x in prices]
    values = [float(x) for x in values]
    if len(prices) != n or len(values) != n:
        raise DomainError("prices and values need one entry per node")
    for i in range(n):
        if values[i] == prices[i]:
            raise DomainError(f"agent {i}: value equals price, the decision is tied")
    order = tuple(range(n)) if order is None else tuple(order)
    memo = {}

    def go(k, H):
        if k == n:
            return H
        key = (k, H)
        if key in memo:
            return memo[key]
        i = order[k]
        skip = go(k + 1, H)
        take = go(k + 1, H | (1 << i))
        u_buy = values[i] - prices[i]
        u_skip = values[i] if adj[i] & skip else 0.0
        out = take if u_buy > u_skip else skip
        memo[key] = out
        return out

    final = go(0, 0)
    return frozenset(i for i in range(n) if final >> i & 1)


# ----------------------------------------------------------------------------
# upper bounds on the optimal revenue per externality model


def private_part_max(dists, w) -> float:
    """max_T sum_i (1 - w_i) T_i (1 - F_i(T_i)): separable, each term at its monopoly price."""
    total = 0.0
    for d, wi in zip(dists, w):
        grid = np.linspace(float(d.lo), float(d.hi), 4001)
        rev = grid * (1.0 - np.asarray(d.cdf(grid)))
        k = int(np.argmax(rev))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        res = minimize_scalar(lambda v: -v * (1.0 - float(d.cdf(v))), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        total += (1.0 - wi) * max(float(rev[k]), float(-res.fun))
    return total


def full_optimum(dists, resolution: int = 200) -> Benchmark:
    """Optimal full-externality revenue: grid oracle for n <= 3, else the single-item bound."""
    if len(dists) <= 3:
        g = grid_optimal_thresholds(Scenario(tuple(dists), Full(), Sequential(tuple(range(len(dists))))),
                                    resolution=resolution, verify=False)
        return Benchmark("OptSeq", g.revenue, "grid search with coordinate polish", g.error)
    m = myerson_revenue(dists)
    return Benchmark("Myer", m.value, "single-item optimum (upper bound on OptSeq)", m.error)


def status_upper_bound(dists, w, sequential: bool, resolution: int = 200) -> Benchmark:
    """2 R1max + R2max (sequential) or R1max + R2max (simultaneous)."""
    r1 = private_part_max(dists, w)
    r2 = full_optimum(dists, resolution)
    c = 2.0 if sequential else 1.0
    return Benchmark("StatusBound", c * r1 + r2.value, f"{c:g} R1max + R2max ({r2.kind})", r2.error)


def availability_upper_bound(dists, w) -> Benchmark:
    """sum_{k=1..n} (w(k) - w(k-1)) MyerK(k), w(n) = 1."""
    ext = w if isinstance(w, AvailabilityBased) else AvailabilityBased(tuple(w))
    n = len(dists)
    value = 0.0
    err = 0.0
    for k in range(1, n + 1):
        gap = ext.weight(k) - ext.weight(k - 1)
        if gap > 0.0:
            b = myerson_k_uniform(dists, k)
            value += gap * b.value
            err += gap * b.error
    return Benchmark("AvailabilityBound", value, "weighted k-unit optima", err)


def benchmark_for(s: Scenario, tag, resolution: int = 200) -> Benchmark:
    """The oracle value a guarantee tag is measured against."""
    bench = tag.benchmark
    dists = list(s.dists)
    if isinstance(s.externality, AvailabilityBased):
        return availability_upper_bound(dists, s.externality)
    if bench == "R1":
        return Benchmark("R1max", private_part_max(dists, s.externality.w), "monopoly prices", 1e-12)
    if bench == "R2":
        return full_optimum(dists, resolution)
    if bench in ("OPT_seq", "R*_sim") and not isinstance(s.externality, Full):
        return status_upper_bound(dists, s.externality.w, s.sequential, resolution)
    if bench in ("R*_seq", "R*_sim"):
        return full_optimum(dists, resolution)
    if bench == "MyerK(1)":
        return myerson_revenue(dists)
    raise DomainError(f"no oracle for benchmark {bench!r}")
