"""
Typed knowledge graph over a networkx MultiDiGraph.

Nodes carry one NodeType, a display label and scalar attributes. Edges carry
an ontology label and get integer ids in insertion order; the id doubles as
the MultiDiGraph edge key.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import networkx as nx

from src.common.errors import ConfigurationError, NodeNotFoundError
from src.graph.ontology import Ontology


def normalize_label(text: str) -> str:
    """Trim, collapse internal whitespace and case-fold."""
    return " ".join(str(text).split()).casefold()


def value_node_id(node_type: str, label: str) -> str:
    return f"{node_type}:{normalize_label(label)}"


@dataclass(frozen=True)
class Node:
    id: str
    type: str
    label: str
    attributes: Dict[str, Any] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class Edge:
    id: int
    source: str
    label: str
    target: str
    attributes: Dict[str, Any] = field(default_factory=dict, hash=False)


class KnowledgeGraph:
    """Ontology-checked graph with type and label indexes."""

    def __init__(self, ontology: Ontology):
        self.ontology = ontology
        self.graph = nx.MultiDiGraph()
        self._edges: Dict[int, Edge] = {}
        self._next_edge_id = 0
        self._by_type: Dict[str, List[str]] = {}
        self._by_label: Dict[str, List[str]] = {}
        self._frozen = False
        self.build_report = None
        self._sentence_cache = None

    # -- construction -----------------------------------------------------

    def _check_writable(self) -> None:
        if self._frozen:
            raise RuntimeError("graph is frozen")

    def add_node(self, node_id: str, node_type: str, label: str,
                 attributes: Optional[Dict[str, Any]] = None) -> bool:
        """
        Add a node; returns False when the id already exists.

        An existing node keeps its first display label and attributes.
        """
        self._check_writable()
        if node_type not in self.ontology.node_types:
            raise ConfigurationError(f"unknown node type '{node_type}'")
        if node_id in self.graph:
            existing = self.graph.nodes[node_id]['node_type']
            if existing != node_type:
                raise ConfigurationError(
                    f"node '{node_id}' already exists as {existing}, not {node_type}"
                )
            return False

        self.graph.add_node(node_id, node_type=node_type, label=label, attrs=dict(attributes or {}))
        self._by_type.setdefault(node_type, []).append(node_id)
        self._by_label.setdefault(normalize_label(label), []).append(node_id)
        return True

    def add_edge(self, source: str, label: str, target: str,
                 attributes: Optional[Dict[str, Any]] = None, edge_id: Optional[int] = None) -> int:
        self._check_writable()
        for endpoint in (source, target):
            if endpoint not in self.graph:
                raise NodeNotFoundError(f"unknown node: {endpoint}", {'edge': label})
        self.ontology.check_edge(label, self.node_type(source), self.node_type(target))

        if edge_id is None:
            edge_id = self._next_edge_id
        elif edge_id in self._edges:
            raise ConfigurationError(f"duplicate edge id {edge_id}")
        self._next_edge_id = max(self._next_edge_id, edge_id + 1)

        attrs = {k: v for k, v in (attributes or {}).items() if v is not None}
        self.graph.add_edge(source, target, key=edge_id, label=label, attrs=attrs)
        self._edges[edge_id] = Edge(edge_id, source, label, target, attrs)
        return edge_id

    def freeze(self) -> "KnowledgeGraph":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    # -- reads --------------------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.graph

    def has_node(self, node_id: str) -> bool:
        return node_id in self.graph

    def node(self, node_id: str) -> Node:
        if node_id not in self.graph:
            raise NodeNotFoundError(f"unknown node: {node_id}", {'node': node_id})
        data = self.graph.nodes[node_id]
        return Node(node_id, data['node_type'], data['label'], dict(data['attrs']))

    def node_type(self, node_id: str) -> str:
        return self.graph.nodes[node_id]['node_type']

    def node_label(self, node_id: str) -> str:
        return self.graph.nodes[node_id]['label']

    def nodes(self) -> Iterator[Node]:
        """Nodes sorted by id."""
        for node_id in sorted(self.graph.nodes):
            yield self.node(node_id)

    def edges(self) -> Iterator[Edge]:
        """Edges in id order."""
        for edge_id in sorted(self._edges):
            yield self._edges[edge_id]

    def edge(self, edge_id: int) -> Edge:
        return self._edges[edge_id]

    def edge_ids(self) -> List[int]:
        return sorted(self._edges)

    def nodes_of_type(self, node_type: str) -> List[str]:
        return list(self._by_type.get(node_type, []))

    def find_by_label(self, text: str, node_type: Optional[str] = None) -> List[str]:
        ids = self._by_label.get(normalize_label(text), [])
        if node_type is not None:
            ids = [i for i in ids if self.node_type(i) == node_type]
        return list(ids)

    def incident_edges(self, node_id: str) -> List[Edge]:
        """Edges touching a node, in id order."""
        if node_id not in self.graph:
            raise NodeNotFoundError(f"unknown node: {node_id}", {'node': node_id})
        keys = {k for _, _, k in self.graph.out_edges(node_id, keys=True)}
        keys |= {k for _, _, k in self.graph.in_edges(node_id, keys=True)}
        return [self._edges[k] for k in sorted(keys)]

    @property
    def node_count(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def _signature(self) -> Tuple[Dict[str, tuple], Dict[int, tuple]]:
        nodes = {n.id: (n.type, n.label, n.attributes) for n in self.nodes()}
        edges = {e.id: (e.source, e.label, e.target, e.attributes) for e in self.edges()}
        return nodes, edges

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self._signature() == other._signature()

    def __repr__(self) -> str:
        return f"KnowledgeGraph(nodes={self.node_count}, edges={self.edge_count})"
