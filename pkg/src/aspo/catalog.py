"""Closed-world security-pattern catalogue.

A catalogue is the fixed set of mitigation primitives the gateway is allowed
to activate, together with the pairwise conflict/synergy structure and the
precedence DAG used for activation ordering. It is immutable after loading.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable

import numpy as np

RESOURCES = ("cpu", "mem", "lat", "ene")

_TOP_LEVEL_KEYS = {
    "version", "patterns", "threats", "capabilities",
    "conflicts", "synergies", "precedence", "sla_levels",
}
_PATTERN_KEYS = {
    "id", "name", "covered_threats", "required_capabilities", "cost",
    "expected_evidence", "activation_semantics", "rollback_triggers",
    "is_baseline", "annotation",
}


class CatalogError(ValueError):
    """Raised when a catalogue document violates the schema or an invariant."""


class UnknownPatternError(KeyError):
    pass


@dataclass(frozen=True)
class CostVector:
    cpu: float = 0.0
    mem: float = 0.0
    lat: float = 0.0
    ene: float = 0.0

    def __post_init__(self):
        for r in RESOURCES:
            v = getattr(self, r)
            if not math.isfinite(v) or v < 0:
                raise CatalogError(f"cost component {r}={v!r} must be finite and >= 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.cpu, self.mem, self.lat, self.ene)


@dataclass(frozen=True)
class SecurityPattern:
    id: str
    name: str
    covered_threats: frozenset[str]
    required_capabilities: frozenset[str]
    cost: CostVector
    expected_evidence: frozenset[str] = frozenset()
    activation_semantics: str = ""
    rollback_triggers: tuple[str, ...] = ()
    is_baseline: bool = False
    # Opaque per-pattern descriptor; carried through but never used in scoring.
    annotation: str = ""


@dataclass(frozen=True, eq=False)
class Catalog:
    patterns: tuple[SecurityPattern, ...]
    threat_taxonomy: frozenset[str]
    capability_universe: frozenset[str]
    conflict_matrix: np.ndarray
    synergy_matrix: np.ndarray
    precedence: frozenset[tuple[str, str]]
    sla_levels: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {p.id: i for i, p in enumerate(self.patterns)})
        for m in (self.conflict_matrix, self.synergy_matrix):
            m.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.patterns)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.patterns)

    def __contains__(self, pattern_id: object) -> bool:
        return pattern_id in self._index

    def index(self, pattern_id: str) -> int:
        try:
            return self._index[pattern_id]
        except KeyError:
            raise UnknownPatternError(pattern_id) from None

    def get(self, pattern_id: str) -> SecurityPattern:
        return self.patterns[self.index(pattern_id)]

    def conflicts(self, a: str, b: str) -> bool:
        return bool(self.conflict_matrix[self.index(a), self.index(b)])

    def baselines(self) -> list[SecurityPattern]:
        return [p for p in self.patterns if p.is_baseline]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Catalog):
            return NotImplemented
        return (
            self.patterns == other.patterns
            and self.threat_taxonomy == other.threat_taxonomy
            and self.capability_universe == other.capability_universe
            and np.array_equal(self.conflict_matrix, other.conflict_matrix)
            and np.array_equal(self.synergy_matrix, other.synergy_matrix)
            and self.precedence == other.precedence
            and self.sla_levels == other.sla_levels
        )

    __hash__ = None  # type: ignore[assignment]

    def to_document(self) -> dict:
        """Inverse of :func:`load_catalog` (pair lists, sorted)."""
        def pairs(mat):
            return [[self.patterns[i].id, self.patterns[j].id]
                    for i, j in zip(*np.nonzero(np.triu(mat)))]

        return {
            "threats": sorted(self.threat_taxonomy),
            "capabilities": sorted(self.capability_universe),
            "sla_levels": list(self.sla_levels),
            "patterns": [
                {
                    "id": p.id,
                    "name": p.name,
                    "covered_threats": sorted(p.covered_threats),
                    "required_capabilities": sorted(p.required_capabilities),
                    "cost": dict(zip(RESOURCES, p.cost.as_tuple())),
                    "expected_evidence": sorted(p.expected_evidence),
                    "activation_semantics": p.activation_semantics,
                    "rollback_triggers": list(p.rollback_triggers),
                    "is_baseline": p.is_baseline,
                    "annotation": p.annotation,
                }
                for p in self.patterns
            ],
            "conflicts": pairs(self.conflict_matrix),
            "synergies": pairs(self.synergy_matrix),
            "precedence": sorted([list(e) for e in self.precedence]),
        }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise CatalogError(msg)


def _str_list(value, where: str) -> list[str]:
    _require(isinstance(value, list) and all(isinstance(v, str) for v in value),
             f"{where} must be a list of strings")
    return value


def _parse_pattern(raw: dict, threats: frozenset[str], caps: frozenset[str]) -> SecurityPattern:
    _require(isinstance(raw, dict), "each pattern must be an object")
    unknown = set(raw) - _PATTERN_KEYS
    _require(not unknown, f"unknown pattern keys: {sorted(unknown)}")
    for key in ("id", "name", "covered_threats", "required_capabilities", "cost"):
        _require(key in raw, f"pattern missing required key {key!r}")
    pid = raw["id"]
    _require(isinstance(pid, str) and pid, "pattern id must be a non-empty string")

    covered = frozenset(_str_list(raw["covered_threats"], f"{pid}.covered_threats"))
    _require(covered <= threats, f"{pid} covers threats outside taxonomy: {sorted(covered - threats)}")
    required = frozenset(_str_list(raw["required_capabilities"], f"{pid}.required_capabilities"))
    _require(required <= caps, f"{pid} requires undeclared capabilities: {sorted(required - caps)}")

    cost = raw["cost"]
    _require(isinstance(cost, dict) and set(cost) == set(RESOURCES),
             f"{pid}.cost must have exactly the keys {RESOURCES}")
    for r in RESOURCES:
        _require(isinstance(cost[r], (int, float)) and not isinstance(cost[r], bool),
                 f"{pid}.cost.{r} must be a number")
    try:
        qvec = CostVector(**{r: float(cost[r]) for r in RESOURCES})
    except CatalogError as exc:
        raise CatalogError(f"{pid}: {exc}") from None

    baseline = raw.get("is_baseline", False)
    _require(isinstance(baseline, bool), f"{pid}.is_baseline must be boolean")
    return SecurityPattern(
        id=pid,
        name=str(raw["name"]),
        covered_threats=covered,
        required_capabilities=required,
        cost=qvec,
        expected_evidence=frozenset(_str_list(raw.get("expected_evidence", []), f"{pid}.expected_evidence")),
        activation_semantics=str(raw.get("activation_semantics", "")),
        rollback_triggers=tuple(_str_list(raw.get("rollback_triggers", []), f"{pid}.rollback_triggers")),
        is_baseline=baseline,
        annotation=str(raw.get("annotation", "")),
    )


def _pair_matrix(pairs, index: dict[str, int], what: str) -> np.ndarray:
    _require(isinstance(pairs, list), f"{what} must be a list of pairs")
    mat = np.zeros((len(index), len(index)), dtype=np.int8)
    for pair in pairs:
        _require(isinstance(pair, list) and len(pair) == 2, f"{what} entries must be 2-element lists")
        a, b = pair
        _require(a in index and b in index, f"{what} pair {pair} references unknown pattern")
        _require(a != b, f"nonzero diagonal: {what} pair {pair} pairs a pattern with itself")
        mat[index[a], index[b]] = 1
        mat[index[b], index[a]] = 1
    return mat


def find_cycle(nodes: Iterable[str], edges: Iterable[tuple[str, str]]) -> list[str] | None:
    """Return one directed cycle as a node list, or None if the graph is acyclic."""
    adj: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, [])
    WHITE, GREY, BLACK = 0, 1, 2
    colour = dict.fromkeys(adj, WHITE)
    parent: dict[str, str] = {}

    for root in sorted(adj):
        if colour[root] != WHITE:
            continue
        stack = [(root, iter(sorted(adj[root])))]
        colour[root] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                colour[node] = BLACK
                stack.pop()
            elif colour[nxt] == GREY:
                path = [node]
                while path[-1] != nxt:
                    path.append(parent[path[-1]])
                return path[::-1] + [nxt]
            elif colour[nxt] == WHITE:
                parent[nxt] = node
                colour[nxt] = GREY
                stack.append((nxt, iter(sorted(adj[nxt]))))
    return None


def catalog_from_document(doc: dict) -> Catalog:
    """Build and validate a :class:`Catalog` from an already-parsed document."""
    _require(isinstance(doc, dict), "catalogue document must be an object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    _require(not unknown, f"unknown top-level keys: {sorted(unknown)}")
    for key in ("patterns", "threats", "capabilities"):
        _require(key in doc, f"missing top-level key {key!r}")

    threats = frozenset(_str_list(doc["threats"], "threats"))
    caps = frozenset(_str_list(doc["capabilities"], "capabilities"))
    sla = tuple(_str_list(doc.get("sla_levels", ["normal", "degraded", "critical"]), "sla_levels"))
    _require(len(sla) > 0, "sla_levels must not be empty")

    _require(isinstance(doc["patterns"], list) and doc["patterns"], "patterns must be a non-empty list")
    patterns = tuple(_parse_pattern(p, threats, caps) for p in doc["patterns"])
    index: dict[str, int] = {}
    for i, p in enumerate(patterns):
        _require(p.id not in index, f"duplicate pattern id {p.id!r}")
        index[p.id] = i

    conflict = _pair_matrix(doc.get("conflicts", []), index, "conflicts")
    synergy = _pair_matrix(doc.get("synergies", []), index, "synergies")
    overlap = np.argwhere(np.triu(conflict & synergy))
    _require(len(overlap) == 0,
             "conflict/synergy overlap: " + ", ".join(
                 f"{patterns[i].id}-{patterns[j].id}" for i, j in overlap))

    raw_edges = doc.get("precedence", [])
    _require(isinstance(raw_edges, list), "precedence must be a list of ordered pairs")
    edges = set()
    for e in raw_edges:
        _require(isinstance(e, list) and len(e) == 2, "precedence entries must be 2-element lists")
        _require(e[0] in index and e[1] in index, f"precedence edge {e} references unknown pattern")
        edges.add((e[0], e[1]))
    cycle = find_cycle(index, edges)
    _require(cycle is None, f"precedence cycle: {' -> '.join(cycle or [])}")

    _require(any(p.is_baseline and not p.required_capabilities for p in patterns),
             "missing baseline pattern: need is_baseline=true with no required capabilities")

    return Catalog(
        patterns=patterns,
        threat_taxonomy=threats,
        capability_universe=caps,
        conflict_matrix=conflict,
        synergy_matrix=synergy,
        precedence=frozenset(edges),
        sla_levels=sla,
    )


def validate_matrices(conflict: np.ndarray, synergy: np.ndarray) -> list[str]:
    """Invariant report for dense matrices (used on hand-built catalogues)."""
    problems = []
    for name, mat in (("conflict", conflict), ("synergy", synergy)):
        if not np.array_equal(mat, mat.T):
            i, j = np.argwhere(mat != mat.T)[0]
            problems.append(f"asymmetric {name} matrix at [{i}][{j}]")
        if np.any(np.diag(mat)):
            problems.append(f"nonzero diagonal in {name} matrix")
    if np.any(conflict & synergy):
        problems.append("conflict/synergy overlap")
    return problems


def catalog_from_dense(doc: dict) -> Catalog:
    """Variant accepting dense ``conflict_matrix``/``synergy_matrix`` keys.

    Lets the asymmetry and diagonal checks be exercised directly; the on-disk
    format uses pair lists, which are symmetric by construction.
    """
    doc = dict(doc)
    dense_c = np.asarray(doc.pop("conflict_matrix"), dtype=np.int8)
    dense_s = np.asarray(doc.pop("synergy_matrix"), dtype=np.int8)
    problems = validate_matrices(dense_c, dense_s)
    if problems:
        raise CatalogError("; ".join(problems))
    cat = catalog_from_document(doc)
    _require(dense_c.shape == (cat.m, cat.m), "matrix shape does not match pattern count")
    return Catalog(
        patterns=cat.patterns,
        threat_taxonomy=cat.threat_taxonomy,
        capability_universe=cat.capability_universe,
        conflict_matrix=dense_c,
        synergy_matrix=dense_s,
        precedence=cat.precedence,
        sla_levels=cat.sla_levels,
    )


def load_catalog(source: str | bytes | Path | dict | None = None) -> Catalog:
    """Load a catalogue from a path, JSON text/bytes, or a parsed document.

    ``None`` loads the default catalogue shipped with the package.
    """
    if source is None:
        text = resources.files("aspo").joinpath("data/catalog.json").read_text()
        doc = json.loads(text)
    elif isinstance(source, dict):
        doc = source
    elif isinstance(source, Path):
        doc = json.loads(source.read_text())
    elif isinstance(source, bytes):
        doc = json.loads(source.decode())
    else:
        s = source.lstrip()
        doc = json.loads(source) if s.startswith("{") else json.loads(Path(source).read_text())
    return catalog_from_document(doc)


def _pairwise(portfolio: Iterable[str], catalog: Catalog, mat: np.ndarray) -> int:
    idx = sorted({catalog.index(p) for p in portfolio})
    return int(sum(mat[i, j] for i, j in combinations(idx, 2)))


def conflict_count(portfolio: Iterable[str], catalog: Catalog) -> int:
    """Number of unordered conflicting pairs inside ``portfolio``."""
    return _pairwise(portfolio, catalog, catalog.conflict_matrix)


def synergy_count(portfolio: Iterable[str], catalog: Catalog) -> int:
    """Number of unordered synergistic pairs inside ``portfolio``."""
    return _pairwise(portfolio, catalog, catalog.synergy_matrix)
