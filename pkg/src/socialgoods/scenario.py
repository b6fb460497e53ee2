"""Externality models, sale modes, price/threshold containers and scenario files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

from . import distributions as dist
from .errors import DomainError, ScenarioError

INF = math.inf


# ----------------------------------------------------------------------------
# externality models


@dataclass(frozen=True)
class Full:
    """Public good: everyone gets full value once anyone buys."""

    def fraction(self, i: int, S: Iterable[int]) -> float:
        return 1.0 if set(S) else 0.0


@dataclass(frozen=True)
class StatusBased:
    """Non-owner i gets fraction w[i] of their value once anyone buys."""

    w: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        object.__setattr__(self, "w", w)
        for i, x in enumerate(w):
            if not 0.0 <= x <= 1.0:
                raise ScenarioError(f"weight {x} outside [0, 1]", field=f"externality.w[{i}]")

    def fraction(self, i: int, S: Iterable[int]) -> float:
        S = set(S)
        if i in S:
            return 1.0
        return self.w[i] if S else 0.0


@dataclass(frozen=True)
class AvailabilityBased:
    """Non-owner fraction w[k] depends on the number k of buyers."""

    w: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        object.__setattr__(self, "w", w)
        if not w:
            raise ScenarioError("weights must be nonempty", field="externality.w")
        if w[0] != 0.0:
            raise ScenarioError("w(0) must equal 0", field="externality.w[0]")
        for k, x in enumerate(w):
            if not 0.0 <= x <= 1.0:
                raise ScenarioError(f"weight {x} outside [0, 1]", field=f"externality.w[{k}]")
            if k and x < w[k - 1]:
                raise ScenarioError(
                    f"weights must be nondecreasing: w({k})={x} < w({k - 1})={w[k - 1]}",
                    field=f"externality.w[{k}]",
                )

    def weight(self, k: int) -> float:
        """w(k); counts past the stored range are normalized to 1."""
        return self.w[k] if k < len(self.w) else 1.0

    def fraction(self, i: int, S: Iterable[int]) -> float:
        S = set(S)
        return 1.0 if i in S else self.weight(len(S))


@dataclass(frozen=True)
class NetworkBased:
    """Full value iff the agent or a graph neighbor buys."""

    n_nodes: int
    edges: tuple = ()
    adjacency: tuple = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        adj = [set() for _ in range(self.n_nodes)]
        clean = set()
        for e in self.edges:
            u, v = (int(x) for x in e)
            if u == v:
                raise ScenarioError(f"self-loop at node {u}", field="externality.edges")
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes):
                raise ScenarioError(f"edge ({u}, {v}) out of range", field="externality.edges")
            adj[u].add(v)
            adj[v].add(u)
            clean.add((min(u, v), max(u, v)))
        object.__setattr__(self, "edges", tuple(sorted(clean)))
        object.__setattr__(self, "adjacency", tuple(frozenset(a) for a in adj))

    def neighbors(self, i: int) -> frozenset:
        return self.adjacency[i]

    def fraction(self, i: int, S: Iterable[int]) -> float:
        S = set(S)
        return 1.0 if i in S or (self.adjacency[i] & S) else 0.0


ExternalityModel = Union[Full, StatusBased, AvailabilityBased, NetworkBased]


def externality_fraction(model: ExternalityModel, i: int, S: Iterable[int]) -> float:
    return model.fraction(i, S)


# ----------------------------------------------------------------------------
# sale modes and scenario


@dataclass(frozen=True)
class Simultaneous:
    pass


@dataclass(frozen=True)
class Sequential:
    """order[k] is the agent that arrives k-th."""

    order: tuple

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(x) for x in self.order))


@dataclass(frozen=True)
class Scenario:
    dists: tuple
    externality: ExternalityModel = Full()
    mode: Union[Simultaneous, Sequential] = Simultaneous()

    def __post_init__(self):
        object.__setattr__(self, "dists", tuple(self.dists))
        n = len(self.dists)
        if n < 1:
            raise ScenarioError("need at least one agent", field="agents")
        ext = self.externality
        if isinstance(ext, StatusBased) and len(ext.w) != n:
            raise ScenarioError(f"expected {n} weights, got {len(ext.w)}", field="externality.w")
        if isinstance(ext, AvailabilityBased) and len(ext.w) != n:
            raise ScenarioError(
                f"expected weights w(0..{n - 1}), got {len(ext.w)} entries", field="externality.w"
            )
        if isinstance(ext, NetworkBased) and ext.n_nodes != n:
            raise ScenarioError(f"graph has {ext.n_nodes} nodes for {n} agents", field="externality")
        if isinstance(self.mode, Sequential) and sorted(self.mode.order) != list(range(n)):
            raise ScenarioError(f"order {list(self.mode.order)} is not a permutation of 0..{n - 1}",
                                field="mode.order")

    @property
    def n(self) -> int:
        return len(self.dists)

    @property
    def sequential(self) -> bool:
        return isinstance(self.mode, Sequential)

    @property
    def order(self) -> tuple:
        return self.mode.order if self.sequential else tuple(range(self.n))

    def with_mode(self, mode) -> "Scenario":
        return Scenario(self.dists, self.externality, mode)


# ----------------------------------------------------------------------------
# price schedules and threshold profiles share these shapes


def _ext_real(x, where):
    if isinstance(x, str):
        if x.strip().lower() in ("inf", "infinity"):
            return INF
        raise ScenarioError(f"expected a number or 'inf', got {x!r}", field=where)
    x = float(x)
    if math.isnan(x) or x < 0:
        raise ScenarioError(f"value {x} must be a nonnegative extended real", field=where)
    return x


@dataclass(frozen=True)
class Simple:
    """One value per agent, indexed by agent id. inf means never offered / never buys."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(_ext_real(x, f"values[{i}]") for i, x in enumerate(self.values)))

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


@dataclass(frozen=True)
class Anonymous:
    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", _ext_real(self.value, "value"))


@dataclass(frozen=True)
class TwoTier:
    """Per-agent values before any sale and after at least one sale."""

    before: tuple
    after: tuple

    def __post_init__(self):
        object.__setattr__(self, "before", tuple(_ext_real(x, f"before[{i}]") for i, x in enumerate(self.before)))
        object.__setattr__(self, "after", tuple(_ext_real(x, f"after[{i}]") for i, x in enumerate(self.after)))
        if len(self.before) != len(self.after):
            raise ScenarioError("tiers differ in length", field="after")


@dataclass(frozen=True)
class CountIndexed:
    """rows[k][j]: value for the k-th arriving agent when j earlier agents bought (j <= k)."""

    rows: tuple

    def __post_init__(self):
        rows = tuple(
            tuple(_ext_real(x, f"rows[{k}][{j}]") for j, x in enumerate(row)) for k, row in enumerate(self.rows)
        )
        for k, row in enumerate(rows):
            if len(row) != k + 1:
                raise ScenarioError(f"row {k} has {len(row)} entries, expected {k + 1}", field=f"rows[{k}]")
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class Adaptive:
    """Value for agent i given the set of earlier buyers: table[(i, frozenset)]."""

    table: Mapping

    def __post_init__(self):
        clean = {}
        for (i, S), x in dict(self.table).items():
            clean[(int(i), frozenset(int(a) for a in S))] = _ext_real(x, f"table[{i}, {sorted(S)}]")
        object.__setattr__(self, "table", clean)

    def __hash__(self):
        return hash(tuple(sorted((k[0], tuple(sorted(k[1])), v) for k, v in self.table.items())))

    def get(self, i: int, S) -> float:
        try:
            return self.table[(i, frozenset(S))]
        except KeyError:
            raise DomainError(f"no entry for agent {i} after buyers {sorted(S)}") from None


PriceSchedule = Union[Simple, Anonymous, TwoTier, CountIndexed, Adaptive]
ThresholdProfile = PriceSchedule


def per_agent(p, n: int) -> tuple:
    """Per-agent vector for Simple or Anonymous schedules."""
    if isinstance(p, Anonymous):
        return (p.value,) * n
    if isinstance(p, Simple):
        if len(p.values) != n:
            raise DomainError(f"schedule has {len(p.values)} entries for {n} agents")
        return p.values
    raise DomainError(f"{type(p).__name__} schedule has no single per-agent vector")


def count_indexed(p, order) -> "CountIndexed":
    """Widen per-agent prices to rows that ignore the purchase count."""
    if isinstance(p, CountIndexed):
        return p
    v = per_agent(p, len(order))
    return CountIndexed(tuple((v[i],) * (pos + 1) for pos, i in enumerate(order)))


def _enc(x):
    return "inf" if math.isinf(x) else x


def schedule_to_doc(p) -> dict:
    if isinstance(p, Simple):
        return {"type": "simple", "values": [_enc(x) for x in p.values]}
    if isinstance(p, Anonymous):
        return {"type": "anonymous", "value": _enc(p.value)}
    if isinstance(p, TwoTier):
        return {"type": "two_tier", "before": [_enc(x) for x in p.before], "after": [_enc(x) for x in p.after]}
    if isinstance(p, CountIndexed):
        return {"type": "count_indexed", "rows": [[_enc(x) for x in r] for r in p.rows]}
    if isinstance(p, Adaptive):
        items = sorted(p.table.items(), key=lambda kv: (kv[0][0], len(kv[0][1]), sorted(kv[0][1])))
        return {"type": "adaptive",
                "entries": [{"agent": i, "after": sorted(S), "value": _enc(x)} for (i, S), x in items]}
    raise DomainError(f"unknown schedule type {type(p).__name__}")


def schedule_from_doc(doc: dict):
    kind = doc.get("type")
    if kind == "simple":
        return Simple(tuple(doc["values"]))
    if kind == "anonymous":
        return Anonymous(doc["value"])
    if kind == "two_tier":
        return TwoTier(tuple(doc["before"]), tuple(doc["after"]))
    if kind == "count_indexed":
        return CountIndexed(tuple(tuple(r) for r in doc["rows"]))
    if kind == "adaptive":
        return Adaptive({(e["agent"], frozenset(e["after"])): e["value"] for e in doc["entries"]})
    raise ScenarioError(f"unknown schedule type {kind!r}", field="type")


# ----------------------------------------------------------------------------
# scenario documents


def externality_to_doc(ext) -> dict:
    if isinstance(ext, Full):
        return {"type": "full"}
    if isinstance(ext, StatusBased):
        return {"type": "status", "w": list(ext.w)}
    if isinstance(ext, AvailabilityBased):
        return {"type": "availability", "w": list(ext.w)}
    if isinstance(ext, NetworkBased):
        return {"type": "network", "edges": [list(e) for e in ext.edges]}
    raise DomainError(f"unknown externality {type(ext).__name__}")


def scenario_to_doc(s: Scenario) -> dict:
    mode = ({"type": "sequential", "order": list(s.mode.order)} if s.sequential
            else {"type": "simultaneous"})
    return {
        "agents": [d.to_literal() for d in s.dists],
        "externality": externality_to_doc(s.externality),
        "mode": mode,
    }


def scenario_from_doc(doc) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be an object")
    if "agents" not in doc:
        raise ScenarioError("missing field", field="agents")
    agents = doc["agents"]
    if not isinstance(agents, list):
        raise ScenarioError("must be a list of distribution literals", field="agents")
    dists = []
    for i, lit in enumerate(agents):
        try:
            dists.append(dist.from_literal(lit))
        except DomainError as exc:
            raise ScenarioError(str(exc), field=f"agents[{i}]") from None
    n = len(dists)

    ext_doc = doc.get("externality", {"type": "full"})
    kind = ext_doc.get("type") if isinstance(ext_doc, dict) else None
    if kind == "full":
        ext = Full()
    elif kind in ("status", "availability"):
        if "w" not in ext_doc:
            raise ScenarioError("missing field", field="externality.w")
        ext = (StatusBased if kind == "status" else AvailabilityBased)(tuple(ext_doc["w"]))
    elif kind == "network":
        ext = NetworkBased(n, tuple(tuple(e) for e in ext_doc.get("edges", [])))
    else:
        raise ScenarioError(f"unknown externality type {kind!r}", field="externality.type")

    mode_doc = doc.get("mode", {"type": "simultaneous"})
    mkind = mode_doc.get("type") if isinstance(mode_doc, dict) else None
    if mkind == "simultaneous":
        mode = Simultaneous()
    elif mkind == "sequential":
        mode = Sequential(tuple(mode_doc.get("order", range(n))))
    else:
        raise ScenarioError(f"unknown mode type {mkind!r}", field="mode.type")
    return Scenario(tuple(dists), ext, mode)


def load_scenario(path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_doc(doc)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_doc(s), indent=2) + "\n", encoding="utf-8")
