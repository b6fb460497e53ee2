import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socialgoods import (
    ComplementPower,
    DomainError,
    PiecewiseLinear,
    ShiftedPower,
    Uniform,
    UnsupportedError,
)
from socialgoods import distributions as dist
from conftest import random_regular

U = Uniform()


def test_uniform_cdf():
    assert dist.query(U, "cdf", 0.3) == pytest.approx(0.3)


def test_uniform_quantile_endpoint():
    assert dist.query(U, "quantile", 1.0) == 1.0


def test_harmonic_family_lower_endpoint():
    d = Uniform(1 / 3, 2 / 5)
    assert dist.query(d, "cdf", 1 / 3) == 0.0


def test_cdf_clamps_outside_support():
    assert U.cdf(-5.0) == 0.0
    assert U.cdf(7.0) == 1.0
    assert U.cdf(math.inf) == 1.0
    assert U.pdf(2.0) == 0.0


def test_quantile_domain():
    with pytest.raises(DomainError):
        U.quantile(1.5)
    with pytest.raises(DomainError):
        U.quantile(float("nan"))


def test_sample_is_seeded():
    assert dist.query(U, "sample", 11) == dist.query(U, "sample", 11)
    assert 0.0 <= dist.query(U, "sample", 11) <= 1.0


def test_virtual_values():
    assert dist.virtual_value(U, 0.75) == pytest.approx(0.5)
    assert dist.inverse_virtual_value(U, 0.0) == pytest.approx(0.5)
    assert dist.virtual_value(ComplementPower(2), 0.5) == pytest.approx(0.25)


def test_inverse_clamps():
    assert dist.inverse_virtual_value(U, -10.0) == 0.0
    assert dist.inverse_virtual_value(U, 10.0) == 1.0


@pytest.mark.parametrize("d,price,rev", [
    (U, 0.5, 0.25),
    (Uniform(1.0, 2.0), 1.0, 1.0),
    (ComplementPower(1.0), 0.5, 0.25),
])
def test_monopoly(d, price, rev):
    p, r = dist.monopoly_price(d)
    assert p == pytest.approx(price, abs=1e-10)
    assert r == pytest.approx(rev, abs=1e-10)


def test_irregular_flagged():
    d = PiecewiseLinear(((0.0, 0.0), (0.5, 0.9), (1.0, 1.0)))
    assert not d.regular
    with pytest.raises(UnsupportedError):
        dist.monopoly_price(d)
    with pytest.raises(UnsupportedError):
        dist.inverse_virtual_value(d, 0.1)


def test_bad_parameters():
    with pytest.raises(DomainError):
        Uniform(1.0, 1.0)
    with pytest.raises(DomainError):
        PiecewiseLinear(((0.0, 0.0), (0.5, 0.6), (0.4, 1.0)))
    with pytest.raises(DomainError):
        dist.from_literal({"family": "triangle"})
    with pytest.raises(DomainError):
        dist.from_literal({"family": "complement_power"})


def test_literal_round_trip():
    for d in (U, ShiftedPower(3.0, 0.1), ComplementPower(2.0),
              PiecewiseLinear(((0.0, 0.0), (0.4, 0.2), (1.0, 1.0)))):
        assert dist.from_literal(d.to_literal()) == d


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_quantile_inverts_cdf(seed):
    rng = np.random.default_rng(seed)
    d = random_regular(rng)
    v = np.linspace(d.lo, d.hi, 41)[1:-1]
    assert np.max(np.abs(np.asarray(d.quantile(d.cdf(v))) - v)) <= 1e-10


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_pdf_is_cdf_slope(seed):
    rng = np.random.default_rng(seed)
    d = random_regular(rng)
    h = 1e-6 * (d.hi - d.lo)
    v = np.linspace(d.lo, d.hi, 37)[1:-1]
    if isinstance(d, PiecewiseLinear):
        v = v[np.min(np.abs(v[:, None] - np.array(d._vs)[None, :]), axis=1) > 10 * h]
    fd = (np.asarray(d.cdf(v + h)) - np.asarray(d.cdf(v - h))) / (2 * h)
    pdf = np.asarray(d.pdf(v))
    assert np.all(np.abs(fd - pdf) <= 1e-6 * np.maximum(1.0, pdf) + 1e-6)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_virtual_value_from_accessors(seed):
    rng = np.random.default_rng(seed)
    d = random_regular(rng)
    v = np.linspace(d.lo, d.hi, 23)[1:-1]
    direct = v - (1.0 - np.asarray(d.cdf(v))) / np.asarray(d.pdf(v))
    assert np.allclose(np.asarray(d.virtual_value(v)), direct, atol=1e-12, rtol=1e-12)
    assert np.all(np.diff(np.asarray(d.virtual_value(v))) >= -1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_monopoly_beats_grid(seed):
    rng = np.random.default_rng(seed)
    d = random_regular(rng)
    _, rev = d.monopoly_price()
    grid = np.linspace(d.lo, d.hi, 10_000)
    assert rev >= np.max(grid * (1.0 - np.asarray(d.cdf(grid)))) - 1e-9


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(min_value=-2.0, max_value=2.0))
def test_inverse_virtual_value(seed, t):
    rng = np.random.default_rng(seed)
    d = random_regular(rng)
    v = float(d.inverse_virtual_value(t))
    assert d.lo <= v <= d.hi
    # phi may jump up at a density kink, so check the generalized inverse
    if v < d.hi:
        assert float(d.virtual_value(v)) >= t - 1e-9
    if v > d.lo:
        assert float(d.virtual_value(max(d.lo, v - 1e-8))) <= t + 1e-6
