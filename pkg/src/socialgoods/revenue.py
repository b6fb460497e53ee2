"""Closed-form revenue and a seeded Monte Carlo sale simulator.

The closed forms here are written from the threshold profile alone, so they
check the revenue the solvers report rather than repeat it.

Seeding: trial t reads its uniforms from a Philox stream keyed by the seed,
starting at block t * ceil(n / 4) (each Philox counter step yields four
64-bit words). Any split of the trials into chunks therefore sees the same
numbers, and per-trial revenues are combined with numpy's pairwise sum over
the full array, so results do not depend on the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import equilibrium as eq
from .errors import DomainError
from .scenario import (
    Adaptive,
    AvailabilityBased,
    CountIndexed,
    Full,
    Scenario,
    Simple,
    StatusBased,
    TwoTier,
    count_indexed,
    per_agent,
)

CHUNK = 1 << 15


def _F(d, t):
    return float(d.cdf(t))


def _term(price, sell):
    return 0.0 if sell <= 0.0 else price * sell


def revenue_closed(s: Scenario, p, rep: eq.EquilibriumReport) -> float:
    """Expected revenue of prices p at the equilibrium described by rep."""
    n = s.n
    want = "sequential" if s.sequential else "simultaneous"
    if rep.mode != want:
        raise DomainError(f"equilibrium is {rep.mode} but the scenario is {want}")
    T = rep.thresholds
    if not s.sequential:
        if not isinstance(T, Simple):
            raise DomainError("simultaneous equilibria carry per-agent thresholds")
        prices = per_agent(p, n)
        return float(sum(_term(x, 1.0 - _F(d, t)) for x, d, t in zip(prices, s.dists, T.values)))
    if isinstance(T, Adaptive):
        return _adaptive_forward(s, p, T)
    ext = s.externality
    if isinstance(ext, Full) and isinstance(T, Simple):
        # sum_i T_i prod_{j != i} F_j(T_j) (1 - F_i(T_i)): order free
        F = [_F(d, t) for d, t in zip(s.dists, T.values)]
        total = 0.0
        for i, t in enumerate(T.values):
            if F[i] < 1.0:
                total += t * math.prod(F[:i] + F[i + 1:]) * (1.0 - F[i])
        return total
    if isinstance(ext, (StatusBased, Full)) and isinstance(T, TwoTier):
        before, after = (p.before, p.after) if isinstance(p, TwoTier) else (per_agent(p, n),) * 2
        none_yet = 1.0
        total = 0.0
        for i in s.order:
            s0 = 1.0 - _F(s.dists[i], T.before[i])
            s1 = 1.0 - _F(s.dists[i], T.after[i])
            total += none_yet * _term(before[i], s0) + (1.0 - none_yet) * _term(after[i], s1)
            none_yet *= 1.0 - s0
        return total
    if isinstance(ext, AvailabilityBased) and isinstance(T, CountIndexed):
        p = count_indexed(p, s.order)
        dist = {0: 1.0}
        total = 0.0
        for pos, i in enumerate(s.order):
            nxt = {}
            for j, pr in dist.items():
                sell = 1.0 - _F(s.dists[i], T.rows[pos][j])
                total += pr * _term(p.rows[pos][j], sell)
                nxt[j] = nxt.get(j, 0.0) + pr * (1.0 - sell)
                nxt[j + 1] = nxt.get(j + 1, 0.0) + pr * sell
            dist = nxt
        return total
    raise DomainError(f"no closed form for {type(ext).__name__} with {type(T).__name__} thresholds")


def _adaptive_forward(s, p, T):
    hist = {frozenset(): 1.0}
    total = 0.0
    for i in s.order:
        nxt = {}
        for H, pr in hist.items():
            sell = 1.0 - _F(s.dists[i], T.get(i, H))
            total += pr * _term(p.get(i, H), sell)
            nxt[H] = nxt.get(H, 0.0) + pr * (1.0 - sell)
            nxt[H | {i}] = nxt.get(H | {i}, 0.0) + pr * sell
        hist = nxt
    return total


def pessimistic_and_optimistic_revenue(s: Scenario, p, grid: int = 10_000) -> tuple[float, float]:
    """(worst, best) equilibrium revenue of a simultaneous full/status scenario."""
    return eq.pessimistic_optimistic(s, p, grid)


# ----------------------------------------------------------------------------
# simulation


@dataclass
class SimulationSummary:
    trials: int
    mean: float
    stderr: float
    frequencies: tuple
    histogram: tuple
    seed: int

    def to_doc(self) -> dict:
        return {
            "trials": self.trials,
            "mean": self.mean,
            "stderr": self.stderr,
            "frequencies": list(self.frequencies),
            "histogram": list(self.histogram),
            "seed": self.seed,
        }


def uniforms(seed: int, start: int, count: int, n: int) -> np.ndarray:
    """Uniform draws for trials start .. start + count - 1, shape (count, n)."""
    blocks = -(-n // 4)
    bg = np.random.Philox(key=int(seed))
    bg.advance(start * blocks)
    return np.random.Generator(bg).random((count, 4 * blocks))[:, :n]


def _values(s, u):
    return np.column_stack([np.asarray(d.quantile(u[:, i])) for i, d in enumerate(s.dists)])


def _play(s, p, T, v):
    """Per-trial revenue and buyer indicators for values v (trials x n)."""
    m, n = v.shape
    paid = np.zeros(m)
    bought = np.zeros((m, n), dtype=bool)
    if not s.sequential:
        prices = per_agent(p, n)
        for i in range(n):
            b = v[:, i] >= T.values[i]
            bought[:, i] = b
            if b.any():
                paid += np.where(b, prices[i], 0.0)
        return paid, bought
    count = np.zeros(m, dtype=np.int64)
    mask = np.zeros(m, dtype=np.int64)
    for pos, i in enumerate(s.order):
        if isinstance(T, Adaptive):
            size = 1 << n
            t_tab = np.full(size, np.inf)
            p_tab = np.full(size, np.inf)
            for (a, H), t in T.table.items():
                if a == i:
                    key = sum(1 << x for x in H)
                    t_tab[key] = t
                    p_tab[key] = p.get(i, H)
            thr, price = t_tab[mask], p_tab[mask]
        elif isinstance(T, CountIndexed):
            p = count_indexed(p, s.order)
            t_row = np.array(T.rows[pos])
            p_row = np.array(p.rows[pos])
            c = np.minimum(count, pos)
            thr, price = t_row[c], p_row[c]
        elif isinstance(T, TwoTier):
            before, after = (p.before, p.after) if isinstance(p, TwoTier) else (per_agent(p, n),) * 2
            some = count > 0
            thr = np.where(some, T.after[i], T.before[i])
            price = np.where(some, after[i], before[i])
        else:  # full externalities: nobody buys after the first sale
            prices = per_agent(p, n)
            thr = np.where(count > 0, np.inf, T.values[i])
            price = np.full(m, prices[i])
        b = v[:, i] >= thr
        bought[:, i] = b
        paid += np.where(b, price, 0.0)
        count += b
        mask |= b.astype(np.int64) << i
    return paid, bought


def _workers(workers):
    env = os.environ.get("SGP_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else None
    w = workers if workers is not None else (cap or 1)
    return max(1, min(w, cap) if cap else w)


def simulate(s: Scenario, p, rep: eq.EquilibriumReport, trials: int, seed: int,
             workers=None) -> SimulationSummary:
    """Monte Carlo estimate of revenue when agents follow rep's thresholds."""
    if trials < 1:
        raise DomainError("trials must be at least 1")
    n = s.n
    T = rep.thresholds
    starts = list(range(0, trials, CHUNK))

    def run(start):
        count = min(CHUNK, trials - start)
        v = _values(s, uniforms(seed, start, count, n))
        return _play(s, p, T, v)

    w = _workers(workers)
    if w == 1:
        parts = [run(st) for st in starts]
    else:
        with ThreadPoolExecutor(max_workers=w) as pool:
            parts = list(pool.map(run, starts))
    paid = np.concatenate([a for a, _ in parts])
    bought = np.concatenate([b for _, b in parts])
    mean = float(np.sum(paid) / trials)
    stderr = float(np.std(paid, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    freq = tuple(float(x) for x in bought.sum(axis=0) / trials)
    hist = tuple(int(x) for x in np.bincount(bought.sum(axis=1), minlength=n + 1))
    return SimulationSummary(trials, mean, stderr, freq, hist, int(seed))
