"""Probabilistic circuit structures: parsing, validation, generation and
structural analytics (topological order, tree mass, minimum value, sampling).

A circuit is a rooted DAG of sum, product and indicator units over discrete
variables.  Sum children carry non-negative weights that sum to one; products
multiply children with disjoint scopes; indicators test one variable value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

#: joint state spaces at or below this size are checked exhaustively
EXHAUSTIVE_STATE_LIMIT = 1 << 20

WEIGHT_SUM_TOL = 1e-12


class CircuitFormatError(ValueError):
    """Structural or serialization problem, reported with the offending unit."""


@dataclass(frozen=True)
class Variable:
    id: int
    cardinality: int


@dataclass(frozen=True)
class SumUnit:
    id: int
    children: tuple[int, ...]
    weights: tuple[float, ...]


@dataclass(frozen=True)
class ProductUnit:
    id: int
    children: tuple[int, ...]


@dataclass(frozen=True)
class IndicatorUnit:
    id: int
    var: int
    value: int


Unit = Union[SumUnit, ProductUnit, IndicatorUnit]

#: a sum-edge identifier: (sum unit id, child position)
Edge = tuple[int, int]


@dataclass(frozen=True)
class StructureReport:
    smooth: bool
    decomposable: bool
    deterministic: bool
    violations: tuple[tuple[int, str], ...]
    determinism_check: str  # "exhaustive" or "syntactic"


class Circuit:
    """Validated circuit with precomputed scopes and topological order."""

    def __init__(self, variables: Sequence[Variable], units: Sequence[Unit], root: int):
        self.variables = tuple(sorted(variables, key=lambda v: v.id))
        self.units: dict[int, Unit] = {}
        for u in units:
            if u.id in self.units:
                raise CircuitFormatError(f"duplicate unit id {u.id}")
            self.units[u.id] = u
        self.root = root
        self._check_variables()
        self._check_units()
        self.order = self._topological_order()
        self.scopes = self._compute_scopes()
        self._check_reachable()

    # -- construction checks ------------------------------------------------

    def _check_variables(self) -> None:
        ids = [v.id for v in self.variables]
        if ids != list(range(len(ids))):
            raise CircuitFormatError(f"variable ids must be dense 0..d-1, got {ids}")
        for v in self.variables:
            if v.cardinality < 2:
                raise CircuitFormatError(f"variable {v.id} has cardinality {v.cardinality}")

    def _check_units(self) -> None:
        if self.root not in self.units:
            raise CircuitFormatError(f"root id {self.root} is not a unit")
        n_vars = len(self.variables)
        for u in self.units.values():
            if isinstance(u, IndicatorUnit):
                if not 0 <= u.var < n_vars:
                    raise CircuitFormatError(f"unit {u.id}: unknown variable {u.var}")
                if not 0 <= u.value < self.variables[u.var].cardinality:
                    raise CircuitFormatError(f"unit {u.id}: value {u.value} out of range")
                continue
            for c in u.children:
                if c not in self.units:
                    raise CircuitFormatError(f"unit {u.id}: dangling child id {c}")
            if isinstance(u, ProductUnit) and len(u.children) < 2:
                raise CircuitFormatError(f"product {u.id} needs at least 2 children")
            if isinstance(u, SumUnit):
                if len(u.children) < 1:
                    raise CircuitFormatError(f"sum {u.id} has no children")
                if len(u.children) != len(u.weights):
                    raise CircuitFormatError(f"sum {u.id}: children/weights length mismatch")
                if any(w < 0 for w in u.weights):
                    raise CircuitFormatError(f"sum {u.id} has a negative weight")
                if abs(sum(u.weights) - 1.0) > WEIGHT_SUM_TOL:
                    raise CircuitFormatError(
                        f"sum {u.id} weights sum to {sum(u.weights)!r}, expected 1")

    def _topological_order(self) -> tuple[int, ...]:
        # Kahn's algorithm, smallest ready id first for a stable order
        import heapq

        indegree = {uid: 0 for uid in self.units}
        parents: dict[int, list[int]] = {uid: [] for uid in self.units}
        for u in self.units.values():
            for c in getattr(u, "children", ()):  # indicators have no children
                indegree[u.id] += 1
                parents[c].append(u.id)
        ready = [uid for uid, deg in indegree.items() if deg == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            uid = heapq.heappop(ready)
            order.append(uid)
            for p in parents[uid]:
                indegree[p] -= 1
                if indegree[p] == 0:
                    heapq.heappush(ready, p)
        if len(order) != len(self.units):
            stuck = sorted(set(self.units) - set(order))
            raise CircuitFormatError(f"cycle detected involving units {stuck}")
        return tuple(order)

    def _compute_scopes(self) -> dict[int, frozenset[int]]:
        scopes: dict[int, frozenset[int]] = {}
        for uid in self.order:
            u = self.units[uid]
            if isinstance(u, IndicatorUnit):
                scopes[uid] = frozenset((u.var,))
            else:
                scopes[uid] = frozenset().union(*(scopes[c] for c in u.children))
        return scopes

    def _check_reachable(self) -> None:
        seen = {self.root}
        stack = [self.root]
        while stack:
            u = self.units[stack.pop()]
            for c in getattr(u, "children", ()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        unreachable = sorted(set(self.units) - seen)
        if unreachable:
            raise CircuitFormatError(f"units not reachable from root: {unreachable}")

    # -- convenience ---------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def state_space_size(self) -> int:
        size = 1
        for v in self.variables:
            size *= v.cardinality
        return size

    def sum_units(self) -> list[SumUnit]:
        return [u for u in self.units.values() if isinstance(u, SumUnit)]

    def weight_edges(self) -> list[Edge]:
        """All sum edges in (unit id, child position) order."""
        edges = []
        for uid in sorted(self.units):
            u = self.units[uid]
            if isinstance(u, SumUnit):
                edges.extend((uid, i) for i in range(len(u.children)))
        return edges


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def parse_circuit(text: str) -> Circuit:
    """Build a circuit from its JSON description.

    Weights arrive as decimal strings and are held as 64-bit floats; any
    quantization to narrower formats happens at inference time.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CircuitFormatError(f"invalid JSON: {exc}") from exc
    try:
        variables = [Variable(int(v["id"]), int(v["cardinality"]))
                     for v in doc["variables"]]
        units: list[Unit] = []
        for spec in doc["units"]:
            uid, kind = int(spec["id"]), spec["type"]
            if kind == "sum":
                units.append(SumUnit(uid, tuple(int(c) for c in spec["children"]),
                                     tuple(float(w) for w in spec["weights"])))
            elif kind == "product":
                units.append(ProductUnit(uid, tuple(int(c) for c in spec["children"])))
            elif kind == "indicator":
                units.append(IndicatorUnit(uid, int(spec["var"]), int(spec["value"])))
            else:
                raise CircuitFormatError(f"unit {uid}: unknown type {kind!r}")
        root = int(doc["root"])
    except (KeyError, TypeError) as exc:
        raise CircuitFormatError(f"malformed circuit document: {exc}") from exc
    return Circuit(variables, units, root)


def circuit_to_json(c: Circuit) -> str:
    units = []
    for uid in sorted(c.units):
        u = c.units[uid]
        if isinstance(u, SumUnit):
            units.append({"id": uid, "type": "sum", "children": list(u.children),
                          "weights": [repr(w) for w in u.weights]})
        elif isinstance(u, ProductUnit):
            units.append({"id": uid, "type": "product", "children": list(u.children)})
        else:
            units.append({"id": uid, "type": "indicator", "var": u.var, "value": u.value})
    doc = {"variables": [{"id": v.id, "cardinality": v.cardinality} for v in c.variables],
           "units": units, "root": c.root}
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------------------
# structural validation
# ---------------------------------------------------------------------------

def topological_order(c: Circuit) -> list[int]:
    """Children before parents, ties broken by ascending unit id."""
    return list(c.order)


def validate(c: Circuit) -> StructureReport:
    """Check smoothness, decomposability and determinism.

    Determinism is decided exhaustively when the joint state space fits the
    enumeration budget; otherwise a syntactic sufficient condition is used
    and failures are flagged as unverified rather than proven violations.
    """
    violations: list[tuple[int, str]] = []
    smooth = decomposable = True
    for uid in c.order:
        u = c.units[uid]
        if isinstance(u, SumUnit):
            scopes = {c.scopes[ch] for ch in u.children}
            if len(scopes) > 1:
                smooth = False
                violations.append((uid, "sum children have differing scopes"))
        elif isinstance(u, ProductUnit):
            seen: set[int] = set()
            for ch in u.children:
                if c.scopes[ch] & seen:
                    decomposable = False
                    violations.append((uid, "product children share variables"))
                    break
                seen |= c.scopes[ch]

    if c.state_space_size() <= EXHAUSTIVE_STATE_LIMIT:
        check = "exhaustive"
        deterministic = True
        for uid, reason in _determinism_exhaustive(c):
            deterministic = False
            violations.append((uid, reason))
    else:
        check = "syntactic"
        deterministic = True
        for uid, reason in _determinism_syntactic(c):
            deterministic = False
            violations.append((uid, reason))
    return StructureReport(smooth, decomposable, deterministic,
                           tuple(violations), check)


def _determinism_exhaustive(c: Circuit) -> list[tuple[int, str]]:
    bad = []
    for chunk in _state_chunks(c):
        values = _eval_units_double(c, chunk)
        for u in c.sum_units():
            positive = np.zeros(len(chunk), dtype=np.int32)
            for ch in u.children:
                positive += values[ch] > 0
            if np.any(positive > 1):
                bad.append((u.id, "multiple children positive on a complete state"))
    # deduplicate across chunks, keep id order
    return sorted(set(bad))


def _determinism_syntactic(c: Circuit) -> list[tuple[int, str]]:
    """Sufficient condition: each pair of sum children disagrees on some
    variable's admissible values."""
    supports: dict[int, dict[int, frozenset[int]]] = {}
    for uid in c.order:
        u = c.units[uid]
        if isinstance(u, IndicatorUnit):
            supports[uid] = {u.var: frozenset((u.value,))}
        elif isinstance(u, ProductUnit):
            merged: dict[int, frozenset[int]] = {}
            for ch in u.children:
                for var, vals in supports[ch].items():
                    merged[var] = merged[var] & vals if var in merged else vals
            supports[uid] = merged
        else:
            merged = {}
            for ch in u.children:
                sub = supports[ch]
                for var in c.scopes[uid]:
                    full = frozenset(range(c.variables[var].cardinality))
                    vals = sub.get(var, full)
                    merged[var] = merged.get(var, frozenset()) | vals
            supports[uid] = merged
    bad = []
    for u in c.sum_units():
        for i in range(len(u.children)):
            for j in range(i + 1, len(u.children)):
                a, b = supports[u.children[i]], supports[u.children[j]]
                if not any((a.get(v) is not None and b.get(v) is not None
                            and not (a[v] & b[v])) for v in c.scopes[u.id]):
                    bad.append((u.id, "determinism unverified for a child pair"))
                    break
            else:
                continue
            break
    return bad


# ---------------------------------------------------------------------------
# dense evaluation helpers (64-bit reference arithmetic)
# ---------------------------------------------------------------------------

def enumerate_states(c: Circuit) -> np.ndarray:
    """All complete assignments as an (N, d) int array, lexicographic order."""
    size = c.state_space_size()
    if size > EXHAUSTIVE_STATE_LIMIT:
        raise ValueError(f"state space {size} exceeds enumeration budget "
                         f"{EXHAUSTIVE_STATE_LIMIT}")
    grids = np.meshgrid(*(np.arange(v.cardinality) for v in c.variables),
                        indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def _state_chunks(c: Circuit, chunk: int = 1 << 14) -> Iterable[np.ndarray]:
    states = enumerate_states(c)
    for start in range(0, len(states), chunk):
        yield states[start:start + chunk]


def _eval_units_double(c: Circuit, x: np.ndarray) -> dict[int, np.ndarray]:
    values: dict[int, np.ndarray] = {}
    for uid in c.order:
        u = c.units[uid]
        if isinstance(u, IndicatorUnit):
            values[uid] = (x[:, u.var] == u.value).astype(np.float64)
        elif isinstance(u, ProductUnit):
            acc = values[u.children[0]].copy()
            for ch in u.children[1:]:
                acc *= values[ch]
            values[uid] = acc
        else:
            acc = np.zeros(len(x))
            for w, ch in zip(u.weights, u.children):
                acc += w * values[ch]
            values[uid] = acc
    return values


def eval_double(c: Circuit, x: np.ndarray) -> np.ndarray:
    """Reference 64-bit probabilities for a batch of complete assignments."""
    x = np.atleast_2d(np.asarray(x, dtype=np.int64))
    return _eval_units_double(c, x)[c.root]


# ---------------------------------------------------------------------------
# random circuit generation
# ---------------------------------------------------------------------------

def generate_random_tree_pc(seed: int, n_vars: int, depth: int,
                            sum_fanout: int) -> Circuit:
    """Random smooth, decomposable, tree-shaped circuit over binary variables.

    Alternates sum and product layers; every product splits its variable
    block into two random halves, so each sum mixes differently structured
    children and the result is generally not deterministic.
    """
    if n_vars < 2:
        raise ValueError("need at least 2 variables")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if sum_fanout < 2:
        raise ValueError("sum_fanout must be >= 2")
    if 1 << (depth - 1) > n_vars:
        raise ValueError(f"depth {depth} too large for {n_vars} variables")
    rng = np.random.default_rng(seed)
    builder = _Builder()

    def univariate(var: int) -> int:
        w = rng.dirichlet(np.ones(2))
        kids = [builder.indicator(var, 0), builder.indicator(var, 1)]
        return builder.sum(kids, w)

    def build(vars_block: list[int], levels: int) -> int:
        if len(vars_block) == 1:
            return univariate(vars_block[0])
        if levels <= 0:
            return builder.product([univariate(v) for v in vars_block])
        kids = []
        for _ in range(sum_fanout):
            block = list(rng.permutation(vars_block))
            half = len(block) // 2
            kids.append(builder.product([build(block[:half], levels - 1),
                                         build(block[half:], levels - 1)]))
        return builder.sum(kids, rng.dirichlet(np.ones(sum_fanout)))

    root = build(list(range(n_vars)), depth)
    return Circuit([Variable(i, 2) for i in range(n_vars)], builder.units, root)


def generate_random_det_pc(seed: int, n_vars: int) -> Circuit:
    """Random deterministic circuit: a probabilistic decision tree where each
    sum splits on one variable's indicators, giving disjoint child supports."""
    if n_vars < 1:
        raise ValueError("need at least 1 variable")
    rng = np.random.default_rng(seed)
    builder = _Builder()

    def build(vars_block: list[int]) -> int:
        split = vars_block[int(rng.integers(len(vars_block)))]
        rest = [v for v in vars_block if v != split]
        w = rng.dirichlet(np.ones(2))
        kids = []
        for val in (0, 1):
            ind = builder.indicator(split, val)
            kids.append(ind if not rest else builder.product([ind, build(rest)]))
        return builder.sum(kids, w)

    root = build(list(range(n_vars)))
    return Circuit([Variable(i, 2) for i in range(n_vars)], builder.units, root)


class _Builder:
    """Accumulates units with sequential ids."""

    def __init__(self) -> None:
        self.units: list[Unit] = []

    def _next(self) -> int:
        return len(self.units)

    def indicator(self, var: int, value: int) -> int:
        self.units.append(IndicatorUnit(self._next(), var, value))
        return self.units[-1].id

    def product(self, children: list[int]) -> int:
        self.units.append(ProductUnit(self._next(), tuple(children)))
        return self.units[-1].id

    def sum(self, children: list[int], weights) -> int:
        w = np.asarray(weights, dtype=np.float64)
        w = w / w.sum()
        self.units.append(SumUnit(self._next(), tuple(children), tuple(float(x) for x in w)))
        return self.units[-1].id


# ---------------------------------------------------------------------------
# tree mass, minimum value, sampling
# ---------------------------------------------------------------------------

def edge_masses(c: Circuit) -> dict[Edge, float]:
    """Total probability mass of the induced trees through each sum edge.

    Bottom-up pass with all indicators at one gives each unit's subtree mass;
    a top-down flow pass accumulates the mass of all partial trees above a
    unit.  The edge mass is flow(sum) * weight * subtree_mass(child).
    """
    value: dict[int, float] = {}
    for uid in c.order:
        u = c.units[uid]
        if isinstance(u, IndicatorUnit):
            value[uid] = 1.0
        elif isinstance(u, ProductUnit):
            v = 1.0
            for ch in u.children:
                v *= value[ch]
            value[uid] = v
        else:
            value[uid] = sum(w * value[ch] for w, ch in zip(u.weights, u.children))

    flow = {uid: 0.0 for uid in c.units}
    flow[c.root] = 1.0
    for uid in reversed(c.order):
        u = c.units[uid]
        if isinstance(u, SumUnit):
            for w, ch in zip(u.weights, u.children):
                flow[ch] += flow[uid] * w
        elif isinstance(u, ProductUnit):
            for pos, ch in enumerate(u.children):
                other = 1.0
                for k, sibling in enumerate(u.children):
                    if k != pos:
                        other *= value[sibling]
                flow[ch] += flow[uid] * other

    masses: dict[Edge, float] = {}
    for u in c.sum_units():
        for i, (w, ch) in enumerate(zip(u.weights, u.children)):
            masses[(u.id, i)] = flow[u.id] * w * value[ch]
    return masses


def weight_tree_mass(c: Circuit, edge: Edge) -> float:
    """Mass of one sum edge; see edge_masses."""
    uid, idx = edge
    u = c.units.get(uid)
    if not isinstance(u, SumUnit) or not 0 <= idx < len(u.children):
        raise ValueError(f"{edge} is not a sum edge of this circuit")
    return edge_masses(c)[edge]


def min_positive_value(c: Circuit) -> float:
    """Smallest probability the circuit can output on its support: replace
    sums by a min over positive weighted children, indicators by one."""
    value: dict[int, float] = {}
    for uid in c.order:
        u = c.units[uid]
        if isinstance(u, IndicatorUnit):
            value[uid] = 1.0
        elif isinstance(u, ProductUnit):
            v = 1.0
            for ch in u.children:
                v *= value[ch]
            value[uid] = v
        else:
            terms = [w * value[ch] for w, ch in zip(u.weights, u.children)
                     if w * value[ch] > 0]
            value[uid] = min(terms) if terms else 0.0
    if value[c.root] <= 0:
        raise ValueError("circuit has no positive output (all-zero circuit)")
    return value[c.root]


def sample(c: Circuit, seed: int, n: int) -> np.ndarray:
    """Draw n complete assignments by ancestral descent.

    Each sum unit consumes one dedicated column of uniforms per call, drawn
    in topological order from a single seeded stream, so results are
    reproducible and each sample's path is independent of the others.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if c.scopes[c.root] != frozenset(range(c.n_vars)):
        missing = sorted(frozenset(range(c.n_vars)) - c.scopes[c.root])
        raise ValueError(f"root scope does not cover variables {missing}; "
                         "samples would leave them unassigned")
    rng = np.random.default_rng(seed)
    out = np.full((n, c.n_vars), -1, dtype=np.int64)
    reach: dict[int, np.ndarray] = {uid: np.zeros(n, dtype=bool) for uid in c.units}
    reach[c.root][:] = True
    cum: dict[int, np.ndarray] = {}
    for uid in sorted(c.units):
        u = c.units[uid]
        if isinstance(u, SumUnit):
            cum[uid] = np.cumsum(np.asarray(u.weights) / np.sum(u.weights))
    for uid in reversed(c.order):
        u = c.units[uid]
        mask = reach[uid]
        if isinstance(u, IndicatorUnit):
            out[mask, u.var] = u.value
        elif isinstance(u, ProductUnit):
            for ch in u.children:
                reach[ch] |= mask
        else:
            draws = rng.random(n)  # full column keeps the stream layout fixed
            choice = np.searchsorted(cum[uid], draws[mask], side="right")
            choice = np.minimum(choice, len(u.children) - 1)
            idx = np.flatnonzero(mask)
            for k in range(len(u.children)):
                reach[u.children[k]][idx[choice == k]] = True
    assert np.all(out >= 0)
    return out
