"""Causal DAG over named variables with a sensitive node and an outcome node.

The graph is immutable after construction and knows how to derive the
structure needed by the interventional views: graph surgery (dropping the
sensitive node's incoming edges), enumeration of directed sensitive-to-outcome
paths, and edge sets for path-restricted interventions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

__all__ = [
    "GraphError",
    "NodeSpec",
    "CausalGraph",
    "PathSet",
    "parse_graph",
    "split_sections",
    "intervention_surgery",
    "enumerate_paths",
    "total_path_set",
    "direct_path_set",
    "indirect_path_set",
    "counterfactual_path_set",
    "pi_active_nodes",
    "graph_fingerprint",
]

MAX_PATHS = 10_000


class GraphError(ValueError):
    """Structural problem in a graph document or derived path set."""


@dataclass(frozen=True)
class NodeSpec:
    """A variable: continuous, or categorical with a fixed level count."""

    name: str
    kind: str  # "continuous" | "categorical"
    cardinality: int | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise GraphError(f"node {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if self.cardinality is None or self.cardinality < 2:
                raise GraphError(
                    f"node {self.name!r}: categorical cardinality must be >= 2"
                )
        elif self.cardinality is not None:
            raise GraphError(f"node {self.name!r}: continuous nodes take no cardinality")

    @property
    def is_binary(self) -> bool:
        return self.kind == "categorical" and self.cardinality == 2


class CausalGraph:
    """Validated DAG with designated sensitive and outcome nodes."""

    def __init__(self, nodes, edges, sensitive: str, outcome: str):
        specs = [n if isinstance(n, NodeSpec) else NodeSpec(*n) for n in nodes]
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise GraphError(f"duplicate node declaration: {dup[0]!r}")
        self.nodes: tuple[NodeSpec, ...] = tuple(specs)
        self._by_name = {s.name: s for s in specs}

        seen: set[tuple[str, str]] = set()
        for parent, child in edges:
            if parent not in self._by_name:
                raise GraphError(f"edge ({parent!r}, {child!r}): unknown node {parent!r}")
            if child not in self._by_name:
                raise GraphError(f"edge ({parent!r}, {child!r}): unknown node {child!r}")
            if parent == child:
                raise GraphError(f"self-loop on node {parent!r}")
            if (parent, child) in seen:
                raise GraphError(f"duplicate edge ({parent!r}, {child!r})")
            seen.add((parent, child))
        self.edges: tuple[tuple[str, str], ...] = tuple(edges)

        for role, name in (("sensitive", sensitive), ("outcome", outcome)):
            if name not in self._by_name:
                raise GraphError(f"{role} node {name!r} is not declared")
        if sensitive == outcome:
            raise GraphError("sensitive and outcome must be distinct nodes")
        self.sensitive = sensitive
        self.outcome = outcome

        self._parents: dict[str, list[str]] = {n: [] for n in names}
        self._children: dict[str, list[str]] = {n: [] for n in names}
        for parent, child in self.edges:
            self._parents[child].append(parent)
            self._children[parent].append(child)

        self.topo_order: tuple[str, ...] = tuple(self._topological_sort())
        self.topo_index: dict[str, int] = {n: i for i, n in enumerate(self.topo_order)}
        # canonical parent order: by topological index, for stable input layout
        for child in self._parents:
            self._parents[child].sort(key=self.topo_index.__getitem__)
            self._children[child].sort(key=self.topo_index.__getitem__)

    def _topological_sort(self) -> list[str]:
        indegree = {s.name: len(self._parents[s.name]) for s in self.nodes}
        ready = [s.name for s in self.nodes if indegree[s.name] == 0]
        order: list[str] = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            for child in self._children[node]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    ready.append(child)
        if len(order) != len(self.nodes):
            stuck = sorted(n for n, d in indegree.items() if d > 0)
            raise GraphError(f"cycle detected among nodes {stuck}")
        return order

    # -- structure queries -------------------------------------------------

    def node(self, name: str) -> NodeSpec:
        return self._by_name[name]

    def parents(self, name: str) -> list[str]:
        return list(self._parents[name])

    def children(self, name: str) -> list[str]:
        return list(self._children[name])

    @property
    def roots(self) -> tuple[str, ...]:
        return tuple(n for n in self.topo_order if not self._parents[n])

    def descendants(self, name: str) -> frozenset[str]:
        out: set[str] = set()
        frontier = list(self._children[name])
        while frontier:
            node = frontier.pop()
            if node not in out:
                out.add(node)
                frontier.extend(self._children[node])
        return frozenset(out)

    @property
    def has_effect_path(self) -> bool:
        """Whether any directed path runs from the sensitive node to the outcome."""
        return self.outcome in self.descendants(self.sensitive)

    def column_names(self) -> list[str]:
        return [s.name for s in self.nodes]

    def __repr__(self):
        return (
            f"CausalGraph({len(self.nodes)} nodes, {len(self.edges)} edges, "
            f"sensitive={self.sensitive!r}, outcome={self.outcome!r})"
        )


@dataclass(frozen=True)
class PathSet:
    """Which causal routes carry the intervention, per fairness notion.

    ``on_pi_edges`` holds the union of edges of the selected sensitive-to-
    outcome paths; ``condition`` restricts the evaluation to rows matching the
    given (node, value) pairs and is only used in counterfactual mode.
    """

    mode: str  # "total" | "path_specific" | "counterfactual"
    on_pi_edges: frozenset[tuple[str, str]] = frozenset()
    condition: tuple[tuple[str, object], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.mode not in ("total", "path_specific", "counterfactual"):
            raise GraphError(f"unknown fairness mode {self.mode!r}")
        if self.mode == "counterfactual" and not self.condition:
            raise GraphError("counterfactual mode requires a non-empty condition")


# -- document parsing ----------------------------------------------------------


def split_sections(text: str) -> dict[str, list[str]]:
    """Split a sectioned document into ``{section: lines}``.

    Sections open with ``[name]``; blank lines and ``#`` comments are dropped.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current in sections:
                raise GraphError(f"duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise GraphError(f"content before any section header: {line!r}")
        sections[current].append(line)
    return sections


def parse_graph(text: str, extra_sections: tuple[str, ...] = ()) -> CausalGraph:
    """Parse the nodes/edges/roles graph document into a validated graph."""
    sections = split_sections(text)
    unknown = set(sections) - {"nodes", "edges", "roles"} - set(extra_sections)
    if unknown:
        raise GraphError(f"unknown section [{sorted(unknown)[0]}]")
    for required in ("nodes", "roles"):
        if required not in sections:
            raise GraphError(f"missing [{required}] section")

    nodes: list[NodeSpec] = []
    for line in sections["nodes"]:
        parts = line.split()
        if len(parts) == 2 and parts[1] == "continuous":
            nodes.append(NodeSpec(parts[0], "continuous"))
        elif len(parts) == 3 and parts[1] == "categorical":
            try:
                cardinality = int(parts[2])
            except ValueError:
                raise GraphError(f"bad cardinality in node line: {line!r}") from None
            nodes.append(NodeSpec(parts[0], "categorical", cardinality))
        else:
            raise GraphError(f"cannot parse node line: {line!r}")

    edges: list[tuple[str, str]] = []
    for line in sections.get("edges", []):
        if "->" not in line:
            raise GraphError(f"cannot parse edge line: {line!r}")
        parent, child = (part.strip() for part in line.split("->", 1))
        if not parent or not child:
            raise GraphError(f"cannot parse edge line: {line!r}")
        edges.append((parent, child))

    roles: dict[str, str] = {}
    for line in sections["roles"]:
        parts = line.split()
        if len(parts) != 2 or parts[0] not in ("sensitive", "outcome"):
            raise GraphError(f"cannot parse role line: {line!r}")
        roles[parts[0]] = parts[1]
    if "sensitive" not in roles:
        raise GraphError("missing sensitive designation in [roles]")
    if "outcome" not in roles:
        raise GraphError("missing outcome designation in [roles]")

    return CausalGraph(nodes, edges, roles["sensitive"], roles["outcome"])


# -- interventional structure ---------------------------------------------------


def intervention_surgery(g: CausalGraph) -> CausalGraph:
    """The post-intervention graph: all incoming edges of the sensitive node cut."""
    kept = [(p, c) for (p, c) in g.edges if c != g.sensitive]
    return CausalGraph(g.nodes, kept, g.sensitive, g.outcome)


def enumerate_paths(
    g: CausalGraph, max_paths: int = MAX_PATHS
) -> list[tuple[tuple[str, str], ...]]:
    """All simple directed paths from the sensitive node to the outcome.

    Each path is an edge sequence.  Order is deterministic: depth-first with
    children visited by topological index.  Raises once ``max_paths`` is
    exceeded to guard against pathological graphs.
    """
    paths: list[tuple[tuple[str, str], ...]] = []
    trail: list[tuple[str, str]] = []

    def visit(node: str) -> None:
        if node == g.outcome:
            if len(paths) >= max_paths:
                raise GraphError(f"more than {max_paths} paths; aborting enumeration")
            paths.append(tuple(trail))
            return
        for child in g.children(node):
            trail.append((node, child))
            visit(child)
            trail.pop()

    visit(g.sensitive)
    return paths


def _all_path_edges(g: CausalGraph) -> frozenset[tuple[str, str]]:
    return frozenset(edge for path in enumerate_paths(g) for edge in path)


def total_path_set(g: CausalGraph) -> PathSet:
    """Intervention along every sensitive-to-outcome path."""
    return PathSet("total", _all_path_edges(g))


def direct_path_set(g: CausalGraph) -> PathSet:
    """Intervention along the direct edge only."""
    direct = (g.sensitive, g.outcome)
    if direct not in g.edges:
        raise GraphError(
            f"no direct edge {g.sensitive!r} -> {g.outcome!r}; direct effect undefined"
        )
    return PathSet("path_specific", frozenset([direct]))


def indirect_path_set(g: CausalGraph) -> PathSet:
    """Intervention along all paths except the direct edge."""
    direct = (g.sensitive, g.outcome)
    edges = set()
    for path in enumerate_paths(g):
        if path == (direct,):
            continue
        edges.update(path)
    edges.discard(direct)
    if not edges:
        raise GraphError(
            "no indirect path from sensitive to outcome; indirect effect undefined"
        )
    return PathSet("path_specific", frozenset(edges))


def counterfactual_path_set(g: CausalGraph, condition) -> PathSet:
    """Full intervention evaluated on the sub-population matching ``condition``."""
    pairs = tuple((str(n), v) for n, v in condition)
    if not pairs:
        raise GraphError("counterfactual mode requires a non-empty condition")
    for name, _ in pairs:
        if name not in {s.name for s in g.nodes}:
            raise GraphError(f"condition names unknown node {name!r}")
        if name == g.sensitive:
            raise GraphError("condition must not include the sensitive node")
    return PathSet("counterfactual", _all_path_edges(g), pairs)


def validate_path_set(g: CausalGraph, ps: PathSet) -> None:
    """Check a path set against the graph it will be used with."""
    if ps.mode == "path_specific":
        on_any_path = _all_path_edges(g)
        stray = ps.on_pi_edges - on_any_path
        if stray:
            edge = sorted(stray)[0]
            raise GraphError(
                f"edge {edge} is not on any path from {g.sensitive!r} to {g.outcome!r}"
            )
        if not ps.on_pi_edges:
            raise GraphError("path_specific mode requires a non-empty edge set")
    if ps.mode == "counterfactual":
        counterfactual_path_set(g, ps.condition)


def pi_active_nodes(g: CausalGraph, ps: PathSet) -> frozenset[str]:
    """Nodes lying on at least one selected path.

    A sensitive-to-outcome path is selected when every one of its edges is in
    ``on_pi_edges``; a node is active when some selected path passes through it.
    """
    active: set[str] = set()
    for path in enumerate_paths(g):
        if all(edge in ps.on_pi_edges for edge in path):
            active.add(g.sensitive)
            for _, child in path:
                active.add(child)
    return frozenset(active)


def graph_fingerprint(g: CausalGraph) -> str:
    """Stable hash of the graph used to tie checkpoints to their structure."""
    payload = {
        "nodes": [[s.name, s.kind, s.cardinality] for s in g.nodes],
        "edges": [list(e) for e in g.edges],
        "sensitive": g.sensitive,
        "outcome": g.outcome,
    }
    canonical = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(canonical).hexdigest()
