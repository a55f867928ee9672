"""Predicting the divergence introduced by the approximate multiplier.

For deterministic circuits the expected log-probability gap of an all-AAI
evaluation has a closed form: each quantized weight contributes its mantissa's
log shortfall, weighted by the probability mass of the induced trees through
that edge.  Non-deterministic circuits get a sampled surrogate; both are
cross-checkable against a brute-force divergence over the full state space.
A separate Monte-Carlo estimator bounds how often approximate scores flip a
MAP comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circuit import Circuit, edge_masses, enumerate_states, eval_double, sample, validate
from .floats import FloatConfig, decode, encode, log2_value, mitchell_delta
from .inference import CircuitEvaluator, MultiplierPlan, induced_tree_edges


@dataclass(frozen=True)
class WeightContribution:
    edge: tuple[int, int]
    delta_w: float
    mass: float

    @property
    def contribution(self) -> float:
        return self.delta_w * self.mass


@dataclass(frozen=True)
class AnalysisReport:
    """Per-edge attribution plus the aggregate divergence prediction."""

    contributions: tuple[WeightContribution, ...]
    delta_det: Optional[float] = None
    delta_dc: Optional[float] = None
    dc_std_error: Optional[float] = None
    note: str = ""

    def to_json(self) -> str:
        doc = {
            "delta_det": self.delta_det,
            "delta_dc": self.delta_dc,
            "dc_std_error": self.dc_std_error,
            "note": self.note,
            "contributions": {f"{uid}:{idx}": c.contribution
                              for (uid, idx), c in
                              ((c.edge, c) for c in self.contributions)},
        }
        return json.dumps(doc, indent=1)


@dataclass(frozen=True)
class FailureEstimate:
    delta_e: int
    n_mults_per_branch: int
    probability: float
    std_error: float


def _quantized_mantissa_fraction(w: float, cfg: FloatConfig) -> float:
    v = encode(w, cfg).value
    return 0.0 if v.is_zero else v.mantissa_fraction


def delta_det(c: Circuit, cfg: FloatConfig) -> AnalysisReport:
    """Closed-form expected log2 gap of an all-AAI evaluation.

    Exact for smooth, decomposable, deterministic circuits (a single tree is
    live per state, additions pass through, and the mantissa shortfalls of
    the weights in that tree add up); otherwise a lower-bound style estimate
    flagged in the report note.
    """
    rep = validate(c)
    note = "" if rep.deterministic else "bound, not equality"
    masses = edge_masses(c)
    contribs = []
    for u in c.sum_units():
        for i, w in enumerate(u.weights):
            f = _quantized_mantissa_fraction(w, cfg)
            contribs.append(WeightContribution((u.id, i), mitchell_delta(f),
                                               masses[(u.id, i)]))
    total = sum(wc.contribution for wc in contribs)
    return AnalysisReport(tuple(contribs), delta_det=total, note=note)


def delta_nondet_mc(c: Circuit, cfg: FloatConfig, n_samples: int,
                    seed: int) -> AnalysisReport:
    """Sampled divergence surrogate for non-deterministic circuits.

    Per sampled state, the dominant induced tree under the approximate
    semantics contributes its weights' mantissa shortfalls; the remaining
    tree mass enters as a linearized tail correction.  The dropped curvature
    term makes this a surrogate, not an exact expectation.
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    plan = MultiplierPlan.all_aai(c)
    ev = CircuitEvaluator(c, cfg, plan)
    deltas = {}
    for u in c.sum_units():
        for i, w in enumerate(u.weights):
            deltas[(u.id, i)] = mitchell_delta(_quantized_mantissa_fraction(w, cfg))

    data = sample(c, seed, n_samples)
    terms = np.empty(n_samples)
    hits: dict[tuple[int, int], int] = {e: 0 for e in deltas}
    for k, x in enumerate(data):
        evidence = {int(v): int(x[v]) for v in range(c.n_vars)}
        top, _, _ = ev.map_query(evidence)
        tree_sum = 0.0
        for edge in induced_tree_edges(c, top.trace):
            tree_sum += deltas[edge]
            hits[edge] += 1
        full, _, _ = ev.mar(x)
        top_value = ev.restricted_value(top.trace, evidence)
        tail = max(decode(full.value) - decode(top_value), 0.0)
        terms[k] = tree_sum - tail
    contribs = tuple(WeightContribution(e, deltas[e], hits[e] / n_samples)
                     for e in sorted(deltas))
    return AnalysisReport(
        contribs,
        delta_dc=float(np.mean(terms)),
        dc_std_error=float(np.std(terms, ddof=1) / math.sqrt(n_samples)),
        note="surrogate",
    )


def kl_bruteforce(c: Circuit, cfg: FloatConfig) -> float:
    """Exhaustive sum of p64(x) * (log2 p64(x) - log2 p_aai(x)).

    Enumerates the full joint state space (bounded), evaluating the
    approximate side with an all-AAI plan at cfg.
    """
    states = enumerate_states(c)
    p64 = eval_double(c, states)
    ev = CircuitEvaluator(c, cfg, MultiplierPlan.all_aai(c))
    total = 0.0
    for x, p in zip(states, p64):
        if p <= 0.0:
            continue
        approx, _, _ = ev.mar(x)
        if approx.value.is_zero:
            raise ValueError(f"approximate probability is zero at state {x.tolist()} "
                             "while the reference is positive: infinite divergence")
        total += float(p) * (math.log2(float(p)) - log2_value(approx.value))
    return total


def map_failure_prob(delta_e: int, n_mults_per_branch: int = 1,
                     n_samples: int = 100_000, seed: int = 0) -> FailureEstimate:
    """Probability that the approximate scores reorder two MAP branches.

    Two branches whose exact log scores differ by delta_e in the exponent sum
    and by Mitchell-style mantissa terms are compared; a failure occurs when
    the exact and approximate differences disagree in sign (or either is
    zero).  Mantissas are drawn uniformly on [0, 1).  When delta_e is at
    least twice the per-branch multiplication count, the mantissa terms can
    never overcome the exponent gap and the probability is exactly zero.
    """
    delta_e = abs(int(delta_e))
    if n_mults_per_branch < 1:
        raise ValueError("n_mults_per_branch must be >= 1")
    if n_samples < 10_000:
        raise ValueError("need at least 10^4 samples")
    if delta_e >= 2 * n_mults_per_branch:
        return FailureEstimate(delta_e, n_mults_per_branch, 0.0, 0.0)
    rng = np.random.default_rng(seed)
    fails = 0
    chunk = 1 << 16
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        u = rng.random((m, n_mults_per_branch, 4))
        exact = np.log2(1.0 + u)
        d_exact = delta_e + np.sum(exact[:, :, 0] + exact[:, :, 1]
                                   - exact[:, :, 2] - exact[:, :, 3], axis=1)
        d_aai = delta_e + np.sum(u[:, :, 0] + u[:, :, 1]
                                 - u[:, :, 2] - u[:, :, 3], axis=1)
        fails += int(np.count_nonzero(d_exact * d_aai <= 0.0))
        done += m
    p = fails / n_samples
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n_samples)
    return FailureEstimate(delta_e, n_mults_per_branch, p, se)
