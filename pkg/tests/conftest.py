import numpy as np
import pytest

from socialgoods import (
    AvailabilityBased,
    ComplementPower,
    CountIndexed,
    Full,
    PiecewiseLinear,
    Scenario,
    Sequential,
    ShiftedPower,
    Simultaneous,
    StatusBased,
    Uniform,
)
from socialgoods import pricing as pr


def random_regular(rng, families=("uniform", "shifted", "complement", "piecewise")):
    """One random regular distribution drawn from the supported families."""
    kind = families[int(rng.integers(len(families)))]
    if kind == "uniform":
        lo = float(rng.uniform(0.0, 1.0))
        return Uniform(lo, lo + float(rng.uniform(0.2, 2.0)))
    if kind == "shifted":
        return ShiftedPower(float(rng.uniform(1.0, 4.0)), float(rng.uniform(0.0, 0.5)))
    if kind == "complement":
        return ComplementPower(float(rng.uniform(0.5, 4.0)))
    # increasing density on two pieces keeps the law regular
    a = float(rng.uniform(0.2, 0.8))
    fa = float(rng.uniform(0.05, a * 0.95))
    return PiecewiseLinear(((0.0, 0.0), (a, fa), (1.0, 1.0)))


def random_instance(rng, n, **kw):
    return [random_regular(rng, **kw) for _ in range(n)]


def random_pair(rng):
    """A random scenario with a schedule built by one of the pricing schemes or at random."""
    n = int(rng.integers(1, 5))
    ds = tuple(random_instance(rng, n))
    order = tuple(int(x) for x in rng.permutation(n))
    kind = int(rng.integers(6))
    if kind == 0:
        return Scenario(ds, Full(), Sequential(order)), pr.seq_full_prices(ds, order)
    if kind == 1:
        s = Scenario(ds, Full(), Simultaneous())
        return s, pr.exante_transform(*pr.ear_prices(ds))
    if kind == 2:
        w = tuple(float(x) for x in rng.random(n))
        s = Scenario(ds, StatusBased(w), Sequential(order))
        return s, pr.status_best_of(ds, w, s.mode, order)[0]
    if kind == 3:
        w = tuple(float(x) for x in rng.random(n))
        return Scenario(ds, StatusBased(w), Simultaneous()), pr.status_private_prices(ds, w)
    w = (0.0,) + tuple(float(x) for x in np.sort(rng.random(n - 1)))
    s = Scenario(ds, AvailabilityBased(w), Sequential(order))
    if kind == 4:
        return s, pr.availability_best_bucket(ds, w, order)[0]
    rows = tuple(tuple(float(x) for x in rng.uniform(0.05, 1.0, k + 1)) for k in range(n))
    return s, CountIndexed(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
