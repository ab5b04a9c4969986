"""
Graph persistence and export.

Native format: one JSON document with the ontology descriptor, a node table
sorted by id and an edge table in edge-id order. Exports: tab-separated edge
list and GraphML.
"""
import io
import json
from pathlib import Path
from typing import Any, Dict

import networkx as nx

from src.common.errors import (
    ConfigurationError,
    GraphCorruptionError,
    GraphVersionError,
    NodeNotFoundError,
)
from src.common.logging import setup_logger
from src.common.state_store import write_bytes_atomic
from src.graph.knowledge_graph import KnowledgeGraph
from src.graph.ontology import Ontology

logger = setup_logger(__name__)

GRAPH_FORMAT = "gdelt-dkg"
GRAPH_SCHEMA_VERSION = 1
EXPORT_FORMATS = ('edge_list_text', 'graphml')


def graph_to_document(kg: KnowledgeGraph) -> Dict[str, Any]:
    return {
        'format': GRAPH_FORMAT,
        'schema_version': GRAPH_SCHEMA_VERSION,
        'ontology': kg.ontology.to_descriptor(),
        'nodes': [
            {'id': n.id, 'type': n.type, 'label': n.label, 'attributes': n.attributes}
            for n in kg.nodes()
        ],
        'edges': [
            {'id': e.id, 'source': e.source, 'label': e.label, 'target': e.target, 'attributes': e.attributes}
            for e in kg.edges()
        ],
    }


def graph_to_bytes(kg: KnowledgeGraph) -> bytes:
    document = graph_to_document(kg)
    return (json.dumps(document, sort_keys=True, ensure_ascii=False, indent=1) + "\n").encode('utf-8')


def save_graph(kg: KnowledgeGraph, path: Path) -> Path:
    path = Path(path)
    write_bytes_atomic(path, graph_to_bytes(kg))
    logger.info(f"Saved graph ({kg.node_count} nodes, {kg.edge_count} edges) to {path}")
    return path


def graph_from_document(document: Any, source: str = "<document>") -> KnowledgeGraph:
    if not isinstance(document, dict) or document.get('format') != GRAPH_FORMAT:
        raise GraphCorruptionError("not a DKG graph document", {'path': source})

    version = document.get('schema_version')
    if version != GRAPH_SCHEMA_VERSION:
        raise GraphVersionError(
            f"graph schema version {version} cannot be read by this build (supports {GRAPH_SCHEMA_VERSION})",
            {'path': source, 'found': version, 'expected': GRAPH_SCHEMA_VERSION}
        )

    try:
        kg = KnowledgeGraph(Ontology.from_descriptor(document['ontology']))
        for node in document['nodes']:
            if not kg.add_node(node['id'], node['type'], node['label'], node.get('attributes') or {}):
                raise GraphCorruptionError(f"duplicate node id {node['id']}", {'path': source})
        for edge in document['edges']:
            kg.add_edge(edge['source'], edge['label'], edge['target'],
                        edge.get('attributes') or {}, edge_id=int(edge['id']))
    except (KeyError, TypeError, ValueError, ConfigurationError, NodeNotFoundError) as e:
        raise GraphCorruptionError(f"invalid graph structure: {e}", {'path': source}) from e

    return kg.freeze()


def load_graph(path: Path) -> KnowledgeGraph:
    """
    Load a graph written by save_graph.

    Raises:
        FileNotFoundError: path does not exist
        GraphVersionError: written with another schema version
        GraphCorruptionError: truncated or structurally invalid file
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Graph file not found: {path}")

    try:
        document = json.loads(path.read_text(encoding='utf-8'))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise GraphCorruptionError(f"unreadable graph file: {e}", {'path': str(path)}) from e

    kg = graph_from_document(document, str(path))
    logger.info(f"Loaded graph from {path}: {kg.node_count} nodes, {kg.edge_count} edges")
    return kg


def edge_list_text(kg: KnowledgeGraph) -> bytes:
    """One `source<TAB>label<TAB>target` line per edge, sorted by ids."""
    lines = sorted((e.source, e.label, e.target, e.id) for e in kg.edges())
    return "".join(f"{s}\t{label}\t{t}\n" for s, label, t, _ in lines).encode('utf-8')


def _graphml_value(value: Any) -> Any:
    if isinstance(value, (bool, int, float, str)):
        return value
    return json.dumps(value, sort_keys=True)


def to_graphml(kg: KnowledgeGraph) -> bytes:
    """GraphML document; node attributes are prefixed `attr_` to avoid clashes."""
    out = nx.MultiDiGraph()
    for node in kg.nodes():
        data = {'node_type': node.type, 'label': node.label}
        data.update({f"attr_{k}": _graphml_value(v) for k, v in sorted(node.attributes.items()) if v is not None})
        out.add_node(node.id, **data)
    for edge in kg.edges():
        data = {'label': edge.label, 'edge_id': edge.id}
        data.update({f"attr_{k}": _graphml_value(v) for k, v in sorted(edge.attributes.items()) if v is not None})
        out.add_edge(edge.source, edge.target, key=str(edge.id), **data)

    buffer = io.BytesIO()
    nx.write_graphml(out, buffer, encoding='utf-8', prettyprint=True)
    return buffer.getvalue()


def export_graph(kg: KnowledgeGraph, fmt: str) -> bytes:
    if fmt == 'edge_list_text':
        return edge_list_text(kg)
    if fmt == 'graphml':
        return to_graphml(kg)
    raise ValueError(f"Unknown export format: {fmt} (choose from {', '.join(EXPORT_FORMATS)})")
