"""Causal influence graphs for synthetic configurable modular systems.

A system is a DAG over three node kinds: binary option variables and
real-valued intermediate variables (IVs) grouped into modules, plus
system-wide performance variables fed by every IV. Edge generation is
governed by the structural aspects: a within-module connection probability,
a truncated-normal law for cross-module connection probabilities (one draw
per ordered module pair), and an optional IV-to-IV wiring probability.
"""

from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .seeds import rng_for

TRUNC_LO, TRUNC_HI = 0.01, 0.4
_TRUNC_MAX_ATTEMPTS = 10_000
DEFAULT_IV_TO_IV_P = 0.15


class GraphStructureError(Exception):
    """A generated graph violated a structural invariant (generator bug)."""


class NodeKind(str, enum.Enum):
    OPTION = "O"
    INTERMEDIATE = "IV"
    PERFORMANCE = "P"


@dataclass(frozen=True, order=True)
class NodeId:
    """Graph node: kind, owning module (None for performance), local index."""

    kind: NodeKind
    module: int | None
    index: int

    def encode(self) -> str:
        if self.kind is NodeKind.PERFORMANCE:
            return f"P:{self.index}"
        return f"{self.kind.value}:{self.module}:{self.index}"

    @staticmethod
    def decode(text: str) -> "NodeId":
        parts = text.split(":")
        if parts[0] == "P":
            return NodeId(NodeKind.PERFORMANCE, None, int(parts[1]))
        kind = NodeKind.OPTION if parts[0] == "O" else NodeKind.INTERMEDIATE
        return NodeId(kind, int(parts[1]), int(parts[2]))


def option(module: int, index: int) -> NodeId:
    return NodeId(NodeKind.OPTION, module, index)


def intermediate(module: int, index: int) -> NodeId:
    return NodeId(NodeKind.INTERMEDIATE, module, index)


def performance(index: int) -> NodeId:
    return NodeId(NodeKind.PERFORMANCE, None, index)


class EdgeKind(str, enum.Enum):
    WITHIN_OI = "within_oi"
    ACROSS_OI = "across_oi"
    IV_TO_IV = "iv_to_iv"
    IV_TO_PERF = "iv_to_perf"


Edge = tuple[NodeId, NodeId, EdgeKind]


@dataclass(frozen=True)
class StructuralAspects:
    """One system draw: option count per module, edge-probability parameters,
    and module count. IV and performance counts are held constant by default.
    """

    option_count: int
    p_w: float
    mu_a: float
    sigma_a: float
    module_count: int
    iv_per_module: int = 3
    perf_count: int = 1

    def __post_init__(self):
        if self.option_count < 1 or self.module_count < 1:
            raise ValueError("counts must be positive")
        if self.iv_per_module < 1 or self.perf_count < 1:
            raise ValueError("iv_per_module and perf_count must be >= 1")
        if not 0.0 <= self.p_w <= 1.0:
            raise ValueError(f"p_w must be a probability, got {self.p_w}")
        if self.sigma_a < 0:
            raise ValueError("sigma_a must be nonnegative")

    def as_feature_dict(self) -> dict[str, float]:
        return {
            "option_count": float(self.option_count),
            "p_w": self.p_w,
            "mu_a": self.mu_a,
            "sigma_a": self.sigma_a,
            "module_count": float(self.module_count),
        }


@dataclass(frozen=True)
class AspectRanges:
    """Sampling bounds for structural aspects (inclusive for integer fields).

    Defaults give the standard synthetic-system parameter space: 6..16
    options, within-edge probability 0.5..1, truncated-normal parameters in
    0.01..0.4, and 5..40 modules.
    """

    option_count: tuple[int, int] = (6, 16)
    p_w: tuple[float, float] = (0.5, 1.0)
    mu_a: tuple[float, float] = (0.01, 0.4)
    sigma_a: tuple[float, float] = (0.01, 0.4)
    module_count: tuple[int, int] = (5, 40)
    iv_per_module: int = 3
    perf_count: int = 1

    def __post_init__(self):
        for name in ("option_count", "p_w", "mu_a", "sigma_a", "module_count"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"invalid range for {name}: [{lo}, {hi}]")


def scale_aspects(aspects: StructuralAspects, ranges: AspectRanges = AspectRanges()) -> list[float]:
    """Scale the five aspect parameters to [0, 1] by their value-space bounds
    (regression features). Degenerate point ranges map to 0.5."""
    scaled = []
    for name, value in aspects.as_feature_dict().items():
        lo, hi = getattr(ranges, name)
        scaled.append(0.5 if hi == lo else (value - lo) / (hi - lo))
    return scaled


def sample_aspects(seed: int, ranges: AspectRanges = AspectRanges()) -> StructuralAspects:
    """Draw each aspect uniformly and independently from its range."""
    rng = rng_for(seed, "aspects")
    option_count = int(rng.integers(ranges.option_count[0], ranges.option_count[1] + 1))
    p_w = float(rng.uniform(*ranges.p_w))
    mu_a = float(rng.uniform(*ranges.mu_a))
    sigma_a = float(rng.uniform(*ranges.sigma_a))
    module_count = int(rng.integers(ranges.module_count[0], ranges.module_count[1] + 1))
    return StructuralAspects(
        option_count=option_count,
        p_w=p_w,
        mu_a=mu_a,
        sigma_a=sigma_a,
        module_count=module_count,
        iv_per_module=ranges.iv_per_module,
        perf_count=ranges.perf_count,
    )


def _truncated_normal(rng: np.random.Generator, mu: float, sigma: float) -> float:
    # Rejection sampling; mu always lies inside [TRUNC_LO, TRUNC_HI] for
    # Table-style draws, so acceptance is fast. Clamp after the attempt cap.
    if sigma == 0.0:
        return min(max(mu, TRUNC_LO), TRUNC_HI)
    for _ in range(_TRUNC_MAX_ATTEMPTS):
        value = rng.normal(mu, sigma)
        if TRUNC_LO <= value <= TRUNC_HI:
            return float(value)
    return min(max(value, TRUNC_LO), TRUNC_HI)


@dataclass(frozen=True)
class CausalInfluenceGraph:
    aspects: StructuralAspects
    seed: int
    iv_to_iv_p: float
    edges: tuple[Edge, ...]
    cross_probs: dict[tuple[int, int], float] = field(compare=False, default_factory=dict)

    def option_nodes(self) -> list[NodeId]:
        a = self.aspects
        return [option(m, j) for m in range(a.module_count) for j in range(a.option_count)]

    def iv_nodes(self) -> list[NodeId]:
        a = self.aspects
        return [intermediate(m, k) for m in range(a.module_count) for k in range(a.iv_per_module)]

    def perf_nodes(self) -> list[NodeId]:
        return [performance(q) for q in range(self.aspects.perf_count)]

    def parents_of(self, node: NodeId) -> list[NodeId]:
        return sorted(src for src, dst, _ in self.edges if dst == node)

    def parent_map(self) -> dict[NodeId, list[NodeId]]:
        out: dict[NodeId, list[NodeId]] = {n: [] for n in self.iv_nodes() + self.perf_nodes()}
        for src, dst, _ in self.edges:
            out[dst].append(src)
        for node in out:
            out[node].sort()
        return out

    def edges_of_kind(self, kind: EdgeKind) -> list[Edge]:
        return [e for e in self.edges if e[2] is kind]


def generate_graph(
    aspects: StructuralAspects,
    seed: int,
    iv_to_iv_p: float = DEFAULT_IV_TO_IV_P,
) -> CausalInfluenceGraph:
    """Generate the causal influence graph for one system.

    Within each module, every (option, IV) pair is connected independently
    with probability p_w. For each ordered module pair a connection
    probability is drawn once from Normal(mu_a, sigma_a) truncated to
    [0.01, 0.4] and applied to all cross (option, IV) pairs. IV-to-IV edges
    go only from lower- to higher-ordered IVs, which keeps the graph acyclic
    by construction; every IV feeds every performance node.
    """
    if not 0.0 <= iv_to_iv_p <= 1.0:
        raise ValueError(f"iv_to_iv_p must be a probability, got {iv_to_iv_p}")
    rng = rng_for(seed, "graph")
    a = aspects
    edges: list[Edge] = []

    for m in range(a.module_count):
        draws = rng.random((a.option_count, a.iv_per_module))
        for j, k in zip(*np.nonzero(draws < a.p_w)):
            edges.append((option(m, int(j)), intermediate(m, int(k)), EdgeKind.WITHIN_OI))

    cross_probs: dict[tuple[int, int], float] = {}
    for src_m in range(a.module_count):
        for dst_m in range(a.module_count):
            if src_m == dst_m:
                continue
            p_a = _truncated_normal(rng, a.mu_a, a.sigma_a)
            cross_probs[(src_m, dst_m)] = p_a
            draws = rng.random((a.option_count, a.iv_per_module))
            for j, k in zip(*np.nonzero(draws < p_a)):
                edges.append(
                    (option(src_m, int(j)), intermediate(dst_m, int(k)), EdgeKind.ACROSS_OI)
                )

    ivs = [intermediate(m, k) for m in range(a.module_count) for k in range(a.iv_per_module)]
    if iv_to_iv_p > 0.0:
        for i in range(len(ivs)):
            for j in range(i + 1, len(ivs)):
                if rng.random() < iv_to_iv_p:
                    edges.append((ivs[i], ivs[j], EdgeKind.IV_TO_IV))

    for iv in ivs:
        for q in range(a.perf_count):
            edges.append((iv, performance(q), EdgeKind.IV_TO_PERF))

    return CausalInfluenceGraph(
        aspects=aspects,
        seed=seed,
        iv_to_iv_p=iv_to_iv_p,
        edges=tuple(edges),
        cross_probs=cross_probs,
    )


def topological_order(graph: CausalInfluenceGraph) -> list[NodeId]:
    """Kahn's algorithm with canonical tie-breaking (options, IVs, perf).

    Raises GraphStructureError on a cycle; the generator can only produce
    DAGs, so a cycle here means the graph was built or mutated incorrectly.
    """
    nodes = graph.option_nodes() + graph.iv_nodes() + graph.perf_nodes()
    rank = {n: i for i, n in enumerate(nodes)}
    indegree = {n: 0 for n in nodes}
    children: dict[NodeId, list[NodeId]] = {n: [] for n in nodes}
    for src, dst, _ in graph.edges:
        indegree[dst] += 1
        children[src].append(dst)

    ready = [rank[n] for n in nodes if indegree[n] == 0]
    heapq.heapify(ready)
    order: list[NodeId] = []
    while ready:
        node = nodes[heapq.heappop(ready)]
        order.append(node)
        for child in children[node]:
            indegree[child] -= 1
            if indegree[child] == 0:
                heapq.heappush(ready, rank[child])
    if len(order) != len(nodes):
        raise GraphStructureError("cycle detected in influence graph")
    return order


@dataclass(frozen=True)
class KnowledgeArtifacts:
    """Structural knowledge extracted from a graph.

    logical_boundaries: module index -> (option nodes, IV nodes).
    influence_edges: the true option->IV and IV->IV edges (IE).
    potential_influence_edges: a superset of IE (PIE) standing in for what an
    execution graph would reveal: all within-module pairs, plus all cross
    pairs for ordered module pairs that contain at least one true cross edge.
    """

    logical_boundaries: dict[int, tuple[tuple[NodeId, ...], tuple[NodeId, ...]]]
    influence_edges: frozenset[tuple[NodeId, NodeId]]
    potential_influence_edges: frozenset[tuple[NodeId, NodeId]]


def derive_knowledge(graph: CausalInfluenceGraph, decoy_seed: int = 0) -> KnowledgeArtifacts:
    """Read LB/IE off the graph and build the PIE superset.

    The superset is data-driven (execution-graph adjacency emulation), so
    `decoy_seed` is currently unused; it is kept for alternative randomized
    decoy strategies.
    """
    del decoy_seed
    a = graph.aspects
    boundaries = {
        m: (
            tuple(option(m, j) for j in range(a.option_count)),
            tuple(intermediate(m, k) for k in range(a.iv_per_module)),
        )
        for m in range(a.module_count)
    }

    ie = frozenset(
        (src, dst)
        for src, dst, kind in graph.edges
        if kind in (EdgeKind.WITHIN_OI, EdgeKind.ACROSS_OI, EdgeKind.IV_TO_IV)
    )

    pie: set[tuple[NodeId, NodeId]] = set()
    for m in range(a.module_count):
        for j in range(a.option_count):
            for k in range(a.iv_per_module):
                pie.add((option(m, j), intermediate(m, k)))
    linked_pairs = {
        (src.module, dst.module)
        for src, dst, kind in graph.edges
        if kind is EdgeKind.ACROSS_OI
    }
    for src_m, dst_m in linked_pairs:
        for j in range(a.option_count):
            for k in range(a.iv_per_module):
                pie.add((option(src_m, j), intermediate(dst_m, k)))
    for src, dst, kind in graph.edges:
        if kind is EdgeKind.IV_TO_IV:
            pie.add((src, dst))

    artifacts = KnowledgeArtifacts(
        logical_boundaries=boundaries,
        influence_edges=ie,
        potential_influence_edges=frozenset(pie),
    )
    if not artifacts.influence_edges <= artifacts.potential_influence_edges:
        raise GraphStructureError("IE not contained in PIE")
    return artifacts


def graph_to_json(graph: CausalInfluenceGraph) -> str:
    """Stable serialization; identical graphs re-serialize byte-identically."""
    doc = {
        "aspects": {
            "option_count": graph.aspects.option_count,
            "p_w": graph.aspects.p_w,
            "mu_a": graph.aspects.mu_a,
            "sigma_a": graph.aspects.sigma_a,
            "module_count": graph.aspects.module_count,
            "iv_per_module": graph.aspects.iv_per_module,
            "perf_count": graph.aspects.perf_count,
        },
        "seed": graph.seed,
        "iv_to_iv_p": graph.iv_to_iv_p,
        "edges": [
            {"src": src.encode(), "dst": dst.encode(), "kind": kind.value}
            for src, dst, kind in graph.edges
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2)


def graph_from_json(text: str) -> CausalInfluenceGraph:
    doc = json.loads(text)
    aspects = StructuralAspects(**doc["aspects"])
    edges = tuple(
        (NodeId.decode(e["src"]), NodeId.decode(e["dst"]), EdgeKind(e["kind"]))
        for e in doc["edges"]
    )
    return CausalInfluenceGraph(
        aspects=aspects, seed=doc["seed"], iv_to_iv_p=doc["iv_to_iv_p"], edges=edges
    )
