import itertools
import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from socialgoods import (
    Adaptive,
    Anonymous,
    AvailabilityBased,
    CountIndexed,
    DomainError,
    Full,
    NetworkBased,
    NonConvergenceError,
    Scenario,
    Sequential,
    Simple,
    Simultaneous,
    StatusBased,
    TwoTier,
    Uniform,
    UnsupportedError,
)
from socialgoods import equilibrium as eq
from conftest import random_instance

U = Uniform()
INF = math.inf
R2 = math.sqrt(0.5)
A = 2.0 ** -0.25

# three uniform agents, availability weights (0, 0.5, 0.8): published history prices
# and the revenue they yield
HISTORY_PRICES = {
    (0, frozenset()): 0.4360554077,
    (1, frozenset()): 0.5510244945,
    (1, frozenset({0})): 0.2272487784,
    (2, frozenset()): 0.6757323434,
    (2, frozenset({0})): 0.3119589780,
    (2, frozenset({1})): 0.3040872295,
    (2, frozenset({0, 1})): 0.1,
}
HISTORY_REVENUE = 0.4622033133


def sim(dists, ext=None):
    return Scenario(tuple(dists), ext or Full(), Simultaneous())


def seq(dists, ext=None, order=None):
    return Scenario(tuple(dists), ext or Full(), Sequential(order or tuple(range(len(dists)))))


class TestFixedPoint:
    def test_single_agent(self):
        r = eq.solve_sim_fixed_point(sim([U]), Simple((0.4,)))
        assert r.thresholds.values == pytest.approx((0.4,), abs=1e-12)

    def test_two_uniform_symmetric(self):
        s = sim([U, U])
        r = eq.solve_sim_fixed_point(s, Anonymous(0.5))
        assert r.thresholds.values == pytest.approx((R2, R2), abs=1e-9)
        assert eq.equilibrium_residual(s, Anonymous(0.5), r) <= 1e-9

    def test_undamped_cycles(self):
        with pytest.raises(NonConvergenceError) as exc:
            eq.solve_sim_fixed_point(sim([U, U]), Anonymous(0.5), damping=1.0, max_iter=200)
        assert exc.value.residual > 0.1

    def test_private_status(self):
        r = eq.solve_sim_fixed_point(sim([U, U], StatusBased((0.0, 0.0))), Simple((0.3, 0.8)))
        assert r.thresholds.values == pytest.approx((0.3, 0.8), abs=1e-12)

    def test_availability_flagged(self):
        s = sim([U, U, U], AvailabilityBased((0.0, 0.5, 0.8)))
        r = eq.solve_sim_fixed_point(s, Anonymous(0.4))
        assert "no guarantee" in r.flags
        assert eq.equilibrium_residual(s, Anonymous(0.4), r) <= 1e-9

    def test_bad_damping(self):
        with pytest.raises(DomainError):
            eq.solve_sim_fixed_point(sim([U]), Simple((0.4,)), damping=0.0)


class TestScan:
    def test_two_uniform_continuum(self):
        r = eq.scan_sim_equilibria(sim([U, U]), Simple((0.5, 0.5)))
        assert r.continua
        assert r.worst.revenue == pytest.approx(0.25, abs=1e-9)
        assert r.best.revenue == pytest.approx(1.0 - R2, abs=1e-6)
        for e in r.equilibria:
            T1, T2 = e.thresholds.values
            assert min(T1, 1.0) * min(T2, 1.0) == pytest.approx(0.5, abs=1e-9)

    def test_ten_uniform_anonymous(self):
        n = 10
        p = (n / (n + 1)) ** n
        r = eq.scan_sim_equilibria(sim([U] * n), Anonymous(p))
        assert r.best.revenue >= (n / (n + 1)) ** (n + 1) - 1e-9

    def test_adversarial_worst(self):
        s = sim([U, U])
        r = eq.scan_sim_equilibria(s, Simple((0.5, 0.9)))
        assert r.worst.revenue == pytest.approx(0.25, abs=1e-9)
        assert r.worst.thresholds.values[0] == pytest.approx(0.5, abs=1e-9)
        assert r.worst.thresholds.values[1] >= 1.0

    def test_single_agent_unique(self):
        w, b = eq.pessimistic_optimistic(sim([U]), Simple((0.3,)))
        assert w == b == pytest.approx(0.21, abs=1e-12)

    def test_residuals_and_order(self, rng):
        for _ in range(8):
            n = int(rng.integers(1, 4))
            ds = random_instance(rng, n)
            ext = Full() if rng.random() < 0.5 else StatusBased(tuple(float(x) for x in rng.random(n)))
            s = sim(ds, ext)
            p = Simple(tuple(float(x) for x in rng.uniform(0.05, 0.8, n)))
            r = eq.scan_sim_equilibria(s, p, grid=2000)
            assert r.worst.revenue <= r.best.revenue
            for e in r.equilibria:
                assert eq.equilibrium_residual(s, p, e) <= 1e-9

    def test_network_rejected(self):
        with pytest.raises(DomainError):
            eq.scan_sim_equilibria(sim([U, U], NetworkBased(2, ((0, 1),))), Anonymous(0.5))


class TestSequentialFull:
    def test_backward_induction(self):
        s = seq([U, U])
        r = eq.solve_seq_full(s, Simple((R2, A)))
        assert r.thresholds.values == pytest.approx((A, A), abs=1e-12)
        assert r.revenue == pytest.approx(2 * A * (1 - A) * A, abs=1e-12)
        assert r.revenue == pytest.approx(0.225006, abs=1e-6)

    def test_single(self):
        assert eq.solve_seq_full(seq([U]), Simple((0.3,))).thresholds.values == (0.3,)

    def test_first_agent_priced_out(self):
        r = eq.solve_seq_full(seq([U, U]), Simple((0.9, 0.5)))
        assert r.thresholds.values[0] == pytest.approx(1.8)
        assert r.buy_probs[0] == 0.0
        assert r.revenue == pytest.approx(0.25, abs=1e-12)

    def test_arrival_order_used(self):
        r = eq.solve_seq_full(seq([U, U], order=(1, 0)), Simple((A, R2)))
        assert r.thresholds.values == pytest.approx((A, A), abs=1e-12)


class TestInversion:
    def test_sequential_full(self):
        p = eq.thresholds_to_prices(seq([U, U]), Simple((A, A)))
        assert p.values == pytest.approx((R2, A), abs=1e-12)

    def test_simultaneous_full(self):
        p = eq.thresholds_to_prices(sim([U, U]), Simple((R2, R2)))
        assert p.values == pytest.approx((0.5, 0.5), abs=1e-12)

    def test_single_sale_availability(self):
        s = seq([U, U], AvailabilityBased((0.0, 0.5)))
        p = eq.thresholds_to_prices(s, CountIndexed(((A,), (A, INF))))
        assert p.rows[0][0] == pytest.approx(A * (1 - 0.5 * (1 - A)), abs=1e-12)
        assert p.rows[0][0] == pytest.approx(0.77401, abs=1e-5)
        assert p.rows[1][0] == pytest.approx(A, abs=1e-12)
        assert math.isinf(p.rows[1][1])

    def test_unsupported(self):
        with pytest.raises(UnsupportedError):
            eq.thresholds_to_prices(sim([U, U], AvailabilityBased((0.0, 0.5))), Simple((0.5, 0.5)))


class TestStatus:
    def test_two_tier_example(self):
        s = seq([U, U], StatusBased((0.5, 0.5)))
        r = eq.solve_seq_status(s, TwoTier((0.4, 0.5), (0.25, 0.25)))
        assert r.thresholds.before == pytest.approx((0.4 / 0.75, 0.5), abs=1e-12)
        assert r.thresholds.after == pytest.approx((0.5, 0.5), abs=1e-12)

    def test_private_collapse(self):
        s = seq([U, U], StatusBased((0.0, 0.0)))
        r = eq.solve_seq_status(s, TwoTier((0.5, 0.5), (0.5, 0.5)))
        assert r.thresholds.before == (0.5, 0.5)
        assert r.thresholds.after == (0.5, 0.5)

    def test_full_weight_blocks_after(self):
        r = eq.solve_seq_status(seq([U, U], StatusBased((1.0, 1.0))), TwoTier((0.3, 0.3), (0.2, 0.2)))
        assert r.thresholds.after == (INF, INF)


class TestAvailability:
    def test_single_agent(self):
        r = eq.solve_seq_availability(seq([U], AvailabilityBased((0.0,))), CountIndexed(((0.5,),)))
        assert r.thresholds.rows == ((0.5,),)
        assert r.revenue == pytest.approx(0.25)

    def test_full_collapse(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 5))
            ds = random_instance(rng, n)
            prices = [float(x) for x in rng.uniform(0.05, 0.9, n)]
            rows = tuple((prices[k],) + tuple(float(x) for x in rng.uniform(0, 2, k)) for k in range(n))
            a = eq.solve_seq_availability(seq(ds, AvailabilityBased((0.0,) + (1.0,) * (n - 1))), CountIndexed(rows))
            f = eq.solve_seq_full(seq(ds), Simple(tuple(prices)))
            assert a.revenue == pytest.approx(f.revenue, abs=1e-12)

    def test_per_agent_prices_ignore_count(self):
        s = Scenario((U, U, U), AvailabilityBased((0.0, 0.5, 0.8)), Sequential((2, 0, 1)))
        a = eq.solve(s, Simple((0.3, 0.5, 0.7)))
        b = eq.solve(s, CountIndexed(((0.7,), (0.3, 0.3), (0.5, 0.5, 0.5))))
        assert a.revenue == b.revenue
        assert a.thresholds == b.thresholds

    def test_history_solver_matches_count_recursion(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 5))
            ds = tuple(random_instance(rng, n))
            w = (0.0,) + tuple(float(x) for x in np.sort(rng.random(n - 1)))
            order = tuple(int(x) for x in rng.permutation(n))
            s = Scenario(ds, AvailabilityBased(w), Sequential(order))
            rows = tuple(tuple(float(x) for x in rng.uniform(0.05, 1.0, k + 1)) for k in range(n))
            table = {}
            for pos, i in enumerate(order):
                for H in itertools.chain.from_iterable(
                        itertools.combinations(order[:pos], r) for r in range(pos + 1)):
                    table[(i, frozenset(H))] = rows[pos][len(H)]
            a = eq.solve_seq_adaptive(s, Adaptive(table))
            b = eq.solve_seq_availability(s, CountIndexed(rows))
            assert a.revenue == pytest.approx(b.revenue, abs=1e-12)

    def test_history_prices(self):
        s = seq([U, U, U], AvailabilityBased((0.0, 0.5, 0.8)))
        r = eq.solve(s, Adaptive(HISTORY_PRICES))
        assert abs(r.revenue - HISTORY_REVENUE) <= 1e-6

    def test_tables(self, rng):
        for _ in range(10):
            n = int(rng.integers(1, 6))
            ds = random_instance(rng, n)
            w = (0.0,) + tuple(float(x) for x in np.sort(rng.random(n - 1)))
            rows = tuple(tuple(float(x) for x in rng.uniform(0.05, 1.0, k + 1)) for k in range(n))
            r = eq.solve_seq_availability(seq(ds, AvailabilityBased(w)), CountIndexed(rows))
            q, rr = r.count_tables["q"], r.count_tables["r"]
            assert np.all((q >= -1e-15) & (q <= 1 + 1e-15))
            for k in range(n + 1):
                assert q[k].sum() == pytest.approx(1.0, abs=1e-12)
                for j in range(k + 1):
                    assert rr[k, j].sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all((rr >= -1e-15) & (rr <= 1 + 1e-15))


class TestNetwork:
    def test_four_cycle(self):
        g = NetworkBased(4, ((0, 1), (1, 2), (2, 3), (3, 0)))
        r = eq.solve_network_sim_greedy(g, Anonymous(0.5))
        assert r.support == {0, 2}
        assert r.report.revenue == pytest.approx(0.5, abs=1e-12)

    def test_edgeless(self):
        r = eq.solve_network_sim_greedy(NetworkBased(5, ()), Anonymous(0.5))
        assert r.support == set(range(5))
        assert r.report.revenue == pytest.approx(5 / 4)

    def test_triangle(self):
        g = NetworkBased(3, tuple(itertools.combinations(range(3), 2)))
        r = eq.solve_network_sim_greedy(g, Simple((0.2, 0.5, 0.9)))
        assert r.support == {0}
        assert r.report.revenue == pytest.approx(0.16, abs=1e-12)

    def test_greedy_residual(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 10))
            edges = tuple((a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < 0.4)
            g = NetworkBased(n, edges)
            p = Simple(tuple(float(x) for x in rng.uniform(0.01, 1.3, n)))
            r = eq.solve_network_sim_greedy(g, p)
            s = Scenario((U,) * n, g, Simultaneous())
            assert eq.equilibrium_residual(s, p, r.report) <= 1e-12
            assert all(not (g.neighbors(i) & r.support) for i in r.support)

    def test_needs_uniform(self):
        with pytest.raises(DomainError):
            eq.solve_network_sim_greedy(NetworkBased(1, ()), Anonymous(0.5), dists=[Uniform(0, 2)])

    def test_sequential_path(self):
        assert eq.solve_network_seq_fixed_values((3, [(0, 1), (1, 2)]), (0.9, 0.1, 0.9)) == {0, 2}

    def test_sequential_all_expensive(self):
        assert eq.solve_network_seq_fixed_values((3, [(0, 1), (1, 2)]), (1.2, 1.1, 3.0)) == frozenset()

    def test_sequential_edgeless(self):
        assert eq.solve_network_seq_fixed_values((4, []), (0.5,) * 4) == {0, 1, 2, 3}

    def test_sequential_tie_rejected(self):
        with pytest.raises(DomainError):
            eq.solve_network_seq_fixed_values((2, [(0, 1)]), (1.0, 0.5))


class TestDispatch:
    def test_sequential_network_unsupported(self):
        with pytest.raises(UnsupportedError):
            eq.solve(seq([U, U], NetworkBased(2, ((0, 1),))), Anonymous(0.5))

    def test_report_doc(self):
        r = eq.solve(seq([U, U], AvailabilityBased((0.0, 0.5))), CountIndexed(((0.5,), (0.5, 0.3))))
        doc = r.to_doc()
        assert doc["mode"] == "sequential"
        assert set(doc["count_tables"]) == {"q", "r", "r_below"}


seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _random_seq(rng):
    n = int(rng.integers(1, 5))
    ds = random_instance(rng, n)
    order = tuple(int(x) for x in rng.permutation(n))
    kind = int(rng.integers(3))
    if kind == 0:
        ext = Full()
        T = Simple(tuple(float(d.quantile(rng.uniform(0.05, 0.95))) for d in ds))
    elif kind == 1:
        ext = StatusBased(tuple(float(x) for x in rng.uniform(0, 0.95, n)))
        T = TwoTier(tuple(float(d.quantile(rng.uniform(0.05, 0.95))) for d in ds),
                    tuple(float(d.quantile(rng.uniform(0.05, 0.95))) for d in ds))
    else:
        ext = AvailabilityBased((0.0,) + tuple(float(x) for x in np.sort(rng.uniform(0, 0.95, n - 1))))
        T = CountIndexed(tuple(
            tuple(float(ds[order[k]].quantile(rng.uniform(0.05, 0.95))) for _ in range(k + 1))
            for k in range(n)))
    return Scenario(tuple(ds), ext, Sequential(order)), T


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_sequential_round_trip(seed):
    rng = np.random.default_rng(seed)
    s, T = _random_seq(rng)
    p = eq.thresholds_to_prices(s, T)
    r = eq.solve(s, p)
    assert eq.equilibrium_residual(s, p, r) <= 1e-9
    got = r.thresholds
    if isinstance(T, Simple):
        assert np.allclose(got.values, T.values, atol=1e-9, rtol=0)
    elif isinstance(T, TwoTier):
        assert np.allclose(got.before, T.before, atol=1e-9, rtol=0)
        assert np.allclose(got.after, T.after, atol=1e-9, rtol=0)
    else:
        for a, b in zip(got.rows, T.rows):
            assert np.allclose(a, b, atol=1e-9, rtol=0)
    if isinstance(p, Simple):
        assert np.allclose(eq.thresholds_to_prices(s, got).values, p.values, atol=1e-9, rtol=0)


def _on_continuum(s, r, T):
    # continuum agents may sit anywhere in their CDF boxes; the rest must match a representative
    for c in r.continua:
        inside = all(lo - 1e-9 <= float(s.dists[i].cdf(T.values[i])) <= hi + 1e-9
                     for i, (lo, hi) in zip(c["agents"], c["boxes"]))
        P = math.prod(float(d.cdf(x)) for d, x in zip(s.dists, T.values))
        if not inside or abs(P - c["aggregate"]) > 1e-7 * max(1.0, P):
            continue
        for e in r.equilibria:
            if any(f.startswith("continuum") for f in e.flags) and all(
                    abs(a - b) <= 1e-9 for i, (a, b) in enumerate(zip(e.thresholds.values, T.values))
                    if i not in c["agents"]):
                return True
    return False


@settings(max_examples=25, deadline=None)
@given(seeds)
@example(36671)  # piecewise laws linear through 0 on both thresholds: T lies on a continuum
def test_simultaneous_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    # uniform agents give continua; use strictly curved families here
    ds = tuple(random_instance(rng, n, families=("shifted", "complement", "piecewise")))
    ext = Full() if rng.random() < 0.5 else StatusBased(tuple(float(x) for x in rng.random(n)))
    s = Scenario(ds, ext, Simultaneous())
    T = Simple(tuple(float(d.quantile(rng.uniform(0.2, 0.9))) for d in ds))
    p = eq.thresholds_to_prices(s, T)
    r = eq.scan_sim_equilibria(s, p, grid=4000)
    dist = min(max(abs(a - b) for a, b in zip(e.thresholds.values, T.values)) for e in r.equilibria)
    assert dist <= 1e-9 or _on_continuum(s, r, T)


def test_adaptive_round_trip():
    s = seq([U, U, U], AvailabilityBased((0.0, 0.5, 0.8)))
    r = eq.solve(s, Adaptive(HISTORY_PRICES))
    back = eq.thresholds_to_prices(s, r.thresholds)
    for key, x in HISTORY_PRICES.items():
        assert back.get(*key) == pytest.approx(x, abs=1e-12)
