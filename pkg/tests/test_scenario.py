import itertools
import json
import pathlib
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from socialgoods import (
    Adaptive,
    Anonymous,
    AvailabilityBased,
    CountIndexed,
    Full,
    NetworkBased,
    Scenario,
    ScenarioError,
    Sequential,
    Simple,
    Simultaneous,
    StatusBased,
    TwoTier,
    Uniform,
    load_scenario,
    save_scenario,
)
from socialgoods import scenario as sc
from conftest import random_instance

U = Uniform()


def test_full_empty_set():
    assert sc.externality_fraction(Full(), 0, set()) == 0.0


def test_status_non_owner():
    assert sc.externality_fraction(StatusBased((0.5, 0.8)), 1, {0}) == 0.8


def test_availability_two_buyers():
    assert sc.externality_fraction(AvailabilityBased((0.0, 0.5, 0.8)), 2, {0, 1}) == 0.8


def test_network_fraction():
    g = NetworkBased(3, ((0, 1),))
    assert g.fraction(0, {1}) == 1.0
    assert g.fraction(2, {1}) == 0.0
    assert g.fraction(2, {2}) == 1.0


def test_owner_gets_full_value():
    for m in (Full(), StatusBased((0.2, 0.3)), AvailabilityBased((0.0, 0.4)), NetworkBased(2, ())):
        assert m.fraction(0, {0}) == 1.0
        assert m.fraction(1, set()) == 0.0


def test_invalid_models():
    with pytest.raises(ScenarioError):
        StatusBased((0.5, 1.2))
    with pytest.raises(ScenarioError):
        AvailabilityBased((0.1, 0.5))
    with pytest.raises(ScenarioError, match="nondecreasing"):
        AvailabilityBased((0.0, 0.8, 0.5))
    with pytest.raises(ScenarioError):
        NetworkBased(2, ((1, 1),))
    with pytest.raises(ScenarioError):
        NetworkBased(2, ((0, 2),))


def test_dimension_checks():
    with pytest.raises(ScenarioError):
        Scenario((U, U), StatusBased((0.5,)))
    with pytest.raises(ScenarioError):
        Scenario((U, U), AvailabilityBased((0.0, 0.5, 0.8)))
    with pytest.raises(ScenarioError):
        Scenario((U, U), Full(), Sequential((0, 0)))
    with pytest.raises(ScenarioError):
        Scenario(())


def test_schedule_shapes():
    with pytest.raises(ScenarioError):
        CountIndexed(((0.5,), (0.5,)))
    with pytest.raises(ScenarioError):
        TwoTier((0.1, 0.2), (0.1,))
    with pytest.raises(ScenarioError):
        Simple((-0.1,))
    assert Simple(("inf", 0.3)).values[0] == float("inf")


def test_per_agent():
    assert sc.per_agent(Anonymous(0.3), 3) == (0.3, 0.3, 0.3)
    with pytest.raises(sc.DomainError):
        sc.per_agent(Simple((0.1,)), 2)


@pytest.mark.parametrize("p", [
    Simple((0.5, "inf")),
    Anonymous(0.25),
    TwoTier((0.4, 0.5), (0.25, "inf")),
    CountIndexed(((0.4,), (0.5, "inf"))),
    Adaptive({(0, frozenset()): 0.4, (1, frozenset()): 0.5, (1, frozenset({0})): 0.2}),
])
def test_schedule_doc_round_trip(p):
    doc = json.loads(json.dumps(sc.schedule_to_doc(p)))
    assert sc.schedule_from_doc(doc) == p


def test_load_reference_file(tmp_path):
    path = tmp_path / "three.json"
    path.write_text(json.dumps({
        "agents": [{"family": "uniform", "lo": 0.0, "hi": 1.0}] * 3,
        "externality": {"type": "availability", "w": [0, 0.5, 0.8]},
        "mode": {"type": "sequential", "order": [0, 1, 2]},
    }))
    s = load_scenario(path)
    assert s == Scenario((U, U, U), AvailabilityBased((0.0, 0.5, 0.8)), Sequential((0, 1, 2)))


def test_decreasing_weights_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "agents": [{"family": "uniform"}] * 3,
        "externality": {"type": "availability", "w": [0, 0.8, 0.5]},
    }))
    with pytest.raises(ScenarioError) as exc:
        load_scenario(path)
    assert exc.value.field == "externality.w[2]"


def test_parse_error_has_position(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "agents": [\n')
    with pytest.raises(ScenarioError, match="line"):
        load_scenario(path)


def test_bad_agent_literal_names_field(tmp_path):
    path = tmp_path / "agent.json"
    path.write_text(json.dumps({"agents": [{"family": "uniform"}, {"family": "triangle"}]}))
    with pytest.raises(ScenarioError) as exc:
        load_scenario(path)
    assert exc.value.field == "agents[1]"


def _random_model(rng, n):
    kind = int(rng.integers(4))
    if kind == 0:
        return Full()
    if kind == 1:
        return StatusBased(tuple(float(x) for x in rng.random(n)))
    if kind == 2:
        return AvailabilityBased((0.0,) + tuple(float(x) for x in np.sort(rng.random(n - 1))))
    edges = tuple((a, b) for a, b in itertools.combinations(range(n), 2) if rng.random() < 0.4)
    return NetworkBased(n, edges)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_save_load_round_trip(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    mode = Sequential(tuple(int(x) for x in rng.permutation(n))) if rng.random() < 0.5 else Simultaneous()
    s = Scenario(tuple(random_instance(rng, n)), _random_model(rng, n), mode)
    with tempfile.TemporaryDirectory() as d:
        path = pathlib.Path(d) / "s.json"
        save_scenario(s, path)
        assert load_scenario(path) == s


@settings(max_examples=1000, deadline=None)
@given(seeds)
def test_fraction_monotone(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 8))
    m = _random_model(rng, n)
    i = int(rng.integers(n))
    S = {j for j in range(n) if rng.random() < 0.4}
    S2 = S | {j for j in range(n) if rng.random() < 0.4}
    assert 0.0 <= m.fraction(i, S) <= m.fraction(i, S2) <= 1.0


@pytest.mark.parametrize("n", [1, 2, 5, 10])
def test_full_collapse(n):
    full = Full()
    status = StatusBased((1.0,) * n)
    avail = AvailabilityBased((0.0,) + (1.0,) * (n - 1))
    for mask in range(1 << n):
        S = {j for j in range(n) if mask >> j & 1}
        for i in range(n):
            x = full.fraction(i, S)
            assert status.fraction(i, S) == x
            assert avail.fraction(i, S) == x
