"""Deterministic Plan stage: scoring, constrained selection, activation order."""
from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .catalog import RESOURCES, Catalog, SecurityPattern, conflict_count, synergy_count
from .context import BudgetVector, StructuredContext


class WeightsError(ValueError):
    pass


@dataclass(frozen=True)
class ScoringWeights:
    alpha: tuple[float, float, float, float, float] = (0.4, 0.2, 0.2, 0.1, 0.1)
    beta: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    eta: float = 0.1
    lam: float = 1000.0
    epsilon: float = 1e-6
    portfolio_bound: int = 3
    candidate_bound: int = 5

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if len(self.alpha) != 5 or len(self.beta) != 4:
            raise WeightsError("alpha needs 5 components and beta 4")
        if min(self.alpha) < 0 or min(self.beta) < 0 or self.eta < 0:
            raise WeightsError("alpha, beta and eta must be non-negative")
        if not self.epsilon > 0:
            raise WeightsError("epsilon must be > 0")
        if not self.lam > sum(self.alpha):
            raise WeightsError("lambda must exceed sum(alpha) so one conflict dominates suitability")
        for name in ("portfolio_bound", "candidate_bound"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise WeightsError(f"{name} must be a positive integer")

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoringWeights":
        kw = dict(d)
        if "lambda" in kw:
            kw["lam"] = kw.pop("lambda")
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> "ScoringWeights":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["alpha"], d["beta"] = list(self.alpha), list(self.beta)
        return d


@dataclass(frozen=True)
class Portfolio:
    members: tuple[str, ...] = ()
    score: float = 0.0
    per_pattern: tuple[tuple[str, float, float], ...] = field(default=(), compare=False)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def to_dict(self) -> dict:
        return {
            "members": list(self.members),
            "score": self.score,
            "per_pattern": [
                {"id": i, "suitability": s, "normalized_cost": c} for i, s, c in self.per_pattern
            ],
        }


def evidence_alignment(p: SecurityPattern, evidence: Iterable[str]) -> float:
    expected = p.expected_evidence
    return len(expected & frozenset(evidence)) / max(1, len(expected))


def suitability(p: SecurityPattern, s: StructuredContext, w: ScoringWeights) -> float:
    a1, a2, a3, a4, a5 = w.alpha
    covered = 1.0 if s.threat in p.covered_threats else 0.0
    capable = 1.0 if p.required_capabilities <= s.capabilities else 0.0
    return (a1 * covered + a2 * s.severity + a3 * s.confidence
            + a4 * capable + a5 * evidence_alignment(p, s.evidence))


def normalized_cost(p: SecurityPattern, b: BudgetVector, w: ScoringWeights) -> float:
    q = p.cost.as_tuple()
    budget = b.as_tuple()
    return sum(beta * qr / max(w.epsilon, br) for beta, qr, br in zip(w.beta, q, budget))


def portfolio_score(Y: Iterable[str], s: StructuredContext, b: BudgetVector,
                    catalog: Catalog, w: ScoringWeights) -> float:
    ids = sorted(set(Y))
    total = 0.0
    for pid in ids:
        p = catalog.get(pid)
        total += suitability(p, s, w) - normalized_cost(p, b, w)
    return total + w.eta * synergy_count(ids, catalog) - w.lam * conflict_count(ids, catalog)


def within_budget(Y: Iterable[str], b: BudgetVector, catalog: Catalog) -> bool:
    totals = [0.0] * len(RESOURCES)
    for pid in sorted(set(Y)):
        for r, q in enumerate(catalog.get(pid).cost.as_tuple()):
            totals[r] += q
    return all(t <= br for t, br in zip(totals, b.as_tuple()))


def select_portfolio(F: Iterable[str], s: StructuredContext, b: BudgetVector,
                     catalog: Catalog, w: ScoringWeights) -> Portfolio:
    """Exhaustive constrained argmax over subsets of ``F`` with size <= B.

    Subsets with any conflict or any resource total above budget are
    discarded. Exact score ties go to the smaller subset, then to the
    lexicographically smallest sorted id sequence.
    """
    cand = sorted(set(F))
    for pid in cand:
        catalog.index(pid)
    net = {pid: suitability(catalog.get(pid), s, w) - normalized_cost(catalog.get(pid), b, w)
           for pid in cand}

    best: tuple[str, ...] = ()
    best_score = 0.0
    for k in range(1, min(w.portfolio_bound, len(cand)) + 1):
        for combo in combinations(cand, k):
            if conflict_count(combo, catalog) or not within_budget(combo, b, catalog):
                continue
            score = sum(net[p] for p in combo) + w.eta * synergy_count(combo, catalog)
            # combinations() yields in lexicographic order and k ascends, so
            # strict > already implements the tie-break.
            if score > best_score:
                best, best_score = combo, score
    return _portfolio(best, best_score, s, b, catalog, w)


def _portfolio(members: Sequence[str], score: float, s: StructuredContext, b: BudgetVector,
               catalog: Catalog, w: ScoringWeights) -> Portfolio:
    per = tuple(
        (pid, suitability(catalog.get(pid), s, w), normalized_cost(catalog.get(pid), b, w))
        for pid in members
    )
    return Portfolio(members=tuple(members), score=float(score), per_pattern=per)


def count_subsets(n: int, bound: int) -> int:
    return sum(comb(n, k) for k in range(0, min(n, bound) + 1))


def activation_order(Y: Iterable[str], catalog: Catalog) -> list[str]:
    """Topological order of the precedence DAG induced on ``Y``; ties by id."""
    members = set(Y)
    for pid in members:
        catalog.index(pid)
    succ: dict[str, list[str]] = {p: [] for p in members}
    indeg = dict.fromkeys(members, 0)
    for a, b in catalog.precedence:
        if a in members and b in members:
            succ[a].append(b)
            indeg[b] += 1
    ready = [p for p, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        p = heapq.heappop(ready)
        order.append(p)
        for q in succ[p]:
            indeg[q] -= 1
            if indeg[q] == 0:
                heapq.heappush(ready, q)
    if len(order) != len(members):
        raise ValueError("precedence restricted to portfolio is cyclic")
    return order
