"""Finite-precision circuit evaluation: marginal and MAP queries under a
per-multiplication choice of exact or approximate hardware.

Every multiplication site in a circuit (one per sum edge for the weight
multiply, one per binary fold step inside a product) is assigned a mode by a
MultiplierPlan.  Additions always use the exact adder.  The 64-bit baseline
is an all-exact plan at the IEEE double layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .circuit import Circuit, IndicatorUnit, ProductUnit, SumUnit
from .floats import (
    FLOAT64,
    CustomFloat,
    FloatConfig,
    MultResult,
    aai_mul,
    encode,
    exact_add,
    exact_mul,
    log2_value,
)

EXACT = "exact"
AAI = "aai"

#: ("w", sum id, child position) or ("p", product id, fold step)
Site = tuple[str, int, int]


def enumerate_sites(c: Circuit) -> list[Site]:
    """Every multiplication site of the circuit, in deterministic order."""
    sites: list[Site] = []
    for uid in sorted(c.units):
        u = c.units[uid]
        if isinstance(u, SumUnit):
            sites.extend(("w", uid, i) for i in range(len(u.children)))
        elif isinstance(u, ProductUnit):
            sites.extend(("p", uid, k) for k in range(len(u.children) - 1))
    return sites


@dataclass(frozen=True)
class MultiplierPlan:
    """Mode assignment covering every multiplication site exactly once."""

    modes: Mapping[Site, str]

    @classmethod
    def all_exact(cls, c: Circuit) -> "MultiplierPlan":
        return cls({s: EXACT for s in enumerate_sites(c)})

    @classmethod
    def all_aai(cls, c: Circuit) -> "MultiplierPlan":
        return cls({s: AAI for s in enumerate_sites(c)})

    @classmethod
    def from_aai_weight_sites(cls, c: Circuit,
                              aai_edges: Sequence[tuple[int, int]]) -> "MultiplierPlan":
        """AAI on the listed sum edges, exact everywhere else."""
        chosen = {("w", uid, i) for uid, i in aai_edges}
        modes = {}
        for s in enumerate_sites(c):
            modes[s] = AAI if s in chosen else EXACT
        missing = chosen - set(modes)
        if missing:
            raise ValueError(f"edges are not sites of this circuit: {sorted(missing)}")
        return cls(modes)

    def mode(self, site: Site) -> str:
        return self.modes[site]

    def check_covers(self, c: Circuit) -> None:
        expected = set(enumerate_sites(c))
        got = set(self.modes)
        if expected != got:
            raise ValueError("plan does not cover the circuit's sites exactly: "
                             f"missing {sorted(expected - got)[:4]}, "
                             f"extra {sorted(got - expected)[:4]}")

    def aai_weight_fraction(self, c: Circuit) -> float:
        """Fraction of all multiplication sites currently mapped to AAI."""
        sites = enumerate_sites(c)
        return sum(self.modes[s] == AAI for s in sites) / len(sites)


@dataclass(frozen=True)
class MapResult:
    """Backtracked MAP solution: assignment, its log2 score, and the per-sum
    child choices the assignment was reconstructed from."""

    assignment: np.ndarray
    log2_value: float
    trace: dict[int, int]


@dataclass(frozen=True)
class QueryMetrics:
    mean_log_error: float
    map_accuracy: float
    underflow_count: int
    overflow_count: int
    n_instances: int = 0
    n_mar_instances: int = 0


class EvaluationError(ValueError):
    """Raised when a metric is undefined, e.g. the baseline underflows."""


def _greater(a: CustomFloat, b: CustomFloat) -> bool:
    """Exact value comparison without decoding."""
    if a.is_zero:
        return False
    if b.is_zero:
        return True
    return (a.exponent, a.mantissa) > (b.exponent, b.mantissa)


class CircuitEvaluator:
    """Reusable evaluation state for one (circuit, config, plan) triple.

    Weights are quantized once, per cfg.rounding; under toward-zero this
    preserves the one-sided underestimation property end to end.
    """

    def __init__(self, c: Circuit, cfg: FloatConfig, plan: MultiplierPlan):
        plan.check_covers(c)
        self.circuit = c
        self.cfg = cfg
        self.plan = plan
        self.weight_quant_underflows = 0
        self.weight_quant_overflows = 0
        self.qweights: dict[tuple[int, int], CustomFloat] = {}
        for u in c.sum_units():
            for i, w in enumerate(u.weights):
                r = encode(w, cfg)
                self.qweights[(u.id, i)] = r.value
                self.weight_quant_underflows += r.underflowed
                self.weight_quant_overflows += r.overflowed
        self._fold_children = {u.id: tuple(sorted(u.children))
                               for u in c.units.values()
                               if isinstance(u, ProductUnit)}

    def _mul(self, site: Site, a: CustomFloat, b: CustomFloat) -> MultResult:
        if self.plan.mode(site) == AAI:
            return aai_mul(a, b, self.cfg)
        return exact_mul(a, b, self.cfg)

    # -- marginal (complete evidence) pass ----------------------------------

    def mar(self, x: Sequence[int]) -> tuple[MultResult, int, int]:
        """Evaluate one complete assignment; returns the root result plus
        counts of saturating operations along the way."""
        c, cfg = self.circuit, self.cfg
        under = over = 0
        one = CustomFloat.one(cfg.man_bits)
        zero = CustomFloat.zero(cfg.man_bits)
        val: dict[int, CustomFloat] = {}
        for uid in c.order:
            u = c.units[uid]
            if isinstance(u, IndicatorUnit):
                val[uid] = one if x[u.var] == u.value else zero
            elif isinstance(u, ProductUnit):
                kids = self._fold_children[uid]
                acc = val[kids[0]]
                for k, ch in enumerate(kids[1:]):
                    r = self._mul(("p", uid, k), acc, val[ch])
                    under += r.underflowed
                    over += r.overflowed
                    acc = r.value
                val[uid] = acc
            else:
                acc = zero
                for i, ch in enumerate(u.children):
                    r = self._mul(("w", uid, i), self.qweights[(uid, i)], val[ch])
                    under += r.underflowed
                    over += r.overflowed
                    r2 = exact_add(acc, r.value, cfg)
                    under += r2.underflowed
                    over += r2.overflowed
                    acc = r2.value
                val[uid] = acc
        return (MultResult(val[c.root],
                           under > 0 or self.weight_quant_underflows > 0,
                           over > 0 or self.weight_quant_overflows > 0),
                under, over)

    # -- MAP (max-product) pass ----------------------------------------------

    def map_query(self, evidence: Mapping[int, int]) -> tuple[MapResult, int, int]:
        """Max-product upward pass with argmax trace, then top-down
        backtracking.  Unobserved indicators score one; ties pick the lowest
        child index."""
        c, cfg = self.circuit, self.cfg
        under = over = 0
        one = CustomFloat.one(cfg.man_bits)
        zero = CustomFloat.zero(cfg.man_bits)
        val: dict[int, CustomFloat] = {}
        trace: dict[int, int] = {}
        for uid in c.order:
            u = c.units[uid]
            if isinstance(u, IndicatorUnit):
                if u.var in evidence:
                    val[uid] = one if evidence[u.var] == u.value else zero
                else:
                    val[uid] = one
            elif isinstance(u, ProductUnit):
                kids = self._fold_children[uid]
                acc = val[kids[0]]
                for k, ch in enumerate(kids[1:]):
                    r = self._mul(("p", uid, k), acc, val[ch])
                    under += r.underflowed
                    over += r.overflowed
                    acc = r.value
                val[uid] = acc
            else:
                best: Optional[CustomFloat] = None
                best_i = 0
                for i, ch in enumerate(u.children):
                    r = self._mul(("w", uid, i), self.qweights[(uid, i)], val[ch])
                    under += r.underflowed
                    over += r.overflowed
                    if best is None or _greater(r.value, best):
                        best, best_i = r.value, i
                val[uid] = best
                trace[uid] = best_i
        assignment = self._backtrack(trace)
        return MapResult(assignment, log2_value(val[c.root]), trace), under, over

    def _backtrack(self, trace: Mapping[int, int]) -> np.ndarray:
        c = self.circuit
        assignment = np.full(c.n_vars, -1, dtype=np.int64)
        stack = [c.root]
        while stack:
            u = c.units[stack.pop()]
            if isinstance(u, IndicatorUnit):
                assignment[u.var] = u.value
            elif isinstance(u, ProductUnit):
                stack.extend(u.children)
            else:
                stack.append(u.children[trace[u.id]])
        return assignment

    def restricted_value(self, trace: Mapping[int, int],
                         evidence: Mapping[int, int]) -> CustomFloat:
        """Re-evaluate only the induced tree selected by a MAP trace; must
        reproduce the MAP score bit for bit."""
        c, cfg = self.circuit, self.cfg
        one = CustomFloat.one(cfg.man_bits)
        zero = CustomFloat.zero(cfg.man_bits)

        def ev(uid: int) -> CustomFloat:
            u = c.units[uid]
            if isinstance(u, IndicatorUnit):
                if u.var in evidence:
                    return one if evidence[u.var] == u.value else zero
                return one
            if isinstance(u, ProductUnit):
                kids = self._fold_children[uid]
                acc = ev(kids[0])
                for k, ch in enumerate(kids[1:]):
                    acc = self._mul(("p", uid, k), acc, ev(ch)).value
                return acc
            i = trace[uid]
            return self._mul(("w", uid, i), self.qweights[(uid, i)], ev(u.children[i])).value

        return ev(c.root)


def induced_tree_edges(c: Circuit, trace: Mapping[int, int]) -> list[tuple[int, int]]:
    """Sum edges of the induced tree a MAP trace selects."""
    edges = []
    stack = [c.root]
    while stack:
        u = c.units[stack.pop()]
        if isinstance(u, ProductUnit):
            stack.extend(u.children)
        elif isinstance(u, SumUnit):
            i = trace[u.id]
            edges.append((u.id, i))
            stack.append(u.children[i])
    return edges


# ---------------------------------------------------------------------------
# public query API
# ---------------------------------------------------------------------------

def eval_mar(c: Circuit, x: Sequence[int], cfg: FloatConfig,
             plan: MultiplierPlan) -> MultResult:
    """Probability of one complete assignment under the given plan."""
    x = np.asarray(x, dtype=np.int64)
    cards = np.array([v.cardinality for v in c.variables])
    if x.shape != (c.n_vars,) or np.any(x < 0) or np.any(x >= cards):
        raise ValueError("eval_mar needs one complete assignment "
                         f"of {c.n_vars} variables")
    result, _, _ = CircuitEvaluator(c, cfg, plan).mar(x)
    return result


def eval_map(c: Circuit, evidence: Mapping[int, int], cfg: FloatConfig,
             plan: MultiplierPlan) -> MapResult:
    """Most likely completion of partial evidence under the given plan."""
    for var, value in evidence.items():
        if not 0 <= var < c.n_vars:
            raise ValueError(f"evidence names unknown variable {var}")
        if not 0 <= value < c.variables[var].cardinality:
            raise ValueError(f"evidence value {value} out of range for variable {var}")
    result, _, _ = CircuitEvaluator(c, cfg, plan).map_query(dict(evidence))
    return result


def compare_queries(c: Circuit, data: np.ndarray, cfg: FloatConfig,
                    plan: MultiplierPlan,
                    correction: float = 0.0) -> QueryMetrics:
    """Compare a reduced-precision plan against the 64-bit exact baseline.

    Rows with every variable observed contribute a marginal log error term
    |log2 p64 - (log2 p_approx + correction)|; every row contributes a MAP
    query whose observed entries (values >= 0) form the evidence.  MAP
    accuracy counts assignments identical to the baseline's.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.int64))
    if data.shape[1] != c.n_vars:
        raise ValueError(f"data has {data.shape[1]} columns, circuit has {c.n_vars}")
    base = CircuitEvaluator(c, FLOAT64, MultiplierPlan.all_exact(c))
    test = CircuitEvaluator(c, cfg, plan)
    under = test.weight_quant_underflows
    over = test.weight_quant_overflows
    log_err_sum = 0.0
    n_mar = 0
    map_hits = 0
    for row_idx, row in enumerate(data):
        observed = row >= 0
        if observed.all():
            b, _, _ = base.mar(row)
            if b.value.is_zero:
                raise EvaluationError(
                    f"baseline probability is zero for instance {row_idx}; "
                    "log error is undefined")
            t, du, do = test.mar(row)
            under += du
            over += do
            log_err_sum += abs(log2_value(b.value)
                               - (log2_value(t.value) + correction))
            n_mar += 1
        evidence = {int(v): int(row[v]) for v in np.flatnonzero(observed)}
        bm, _, _ = base.map_query(evidence)
        tm, du, do = test.map_query(evidence)
        under += du
        over += do
        map_hits += int(np.array_equal(bm.assignment, tm.assignment))
    n = len(data)
    return QueryMetrics(
        mean_log_error=log_err_sum / n_mar if n_mar else 0.0,
        map_accuracy=map_hits / n if n else 0.0,
        underflow_count=under,
        overflow_count=over,
        n_instances=n,
        n_mar_instances=n_mar,
    )
