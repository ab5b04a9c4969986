"""
DKG builder: one star per table row, linked over shared value nodes, plus the
structural Event -> Mention -> Article edges.
"""
from dataclasses import dataclass, field, fields as dataclass_fields
from datetime import date, datetime
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from src.common.errors import ConfigurationError, UnresolvedReferenceError
from src.common.logging import setup_logger
from src.common.state_store import read_yaml
from src.extract.gdelt_tables import ArticleRecord, EventRecord, MentionRecord
from src.graph.knowledge_graph import KnowledgeGraph, normalize_label, value_node_id
from src.graph.ontology import ROW_TYPES, FieldRule, Ontology, default_ontology
from src.transform.subset_filter import CaseStudySubset

logger = setup_logger(__name__)

RECORD_TYPES = {'events': EventRecord, 'mentions': MentionRecord, 'articles': ArticleRecord}


@dataclass
class ValueEdge:
    label: str
    node_type: str
    value_label: str
    attributes: Dict[str, Any] = field(default_factory=dict)


@dataclass
class StarFragment:
    """A row node and its outgoing value edges, not yet merged into a graph."""
    node_id: str
    node_type: str
    label: str
    attributes: Dict[str, Any]
    edges: List[ValueEdge]


@dataclass
class BuildReport:
    row_nodes: int = 0
    value_nodes: int = 0
    star_edges: int = 0
    structural_edges: int = 0
    fact_edges: int = 0
    duplicate_rows: List[str] = field(default_factory=list)
    skipped_structural: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'row_nodes': self.row_nodes,
            'value_nodes': self.value_nodes,
            'star_edges': self.star_edges,
            'structural_edges': self.structural_edges,
            'fact_edges': self.fact_edges,
            'duplicate_rows': list(self.duplicate_rows),
            'skipped_structural': list(self.skipped_structural),
        }


def event_node_id(global_event_id: int) -> str:
    return f"Event:{global_event_id}"


def article_node_id(document_identifier: str) -> str:
    return f"Article:{document_identifier}"


def mention_node_id(global_event_id: int, mention_identifier: str) -> str:
    return f"Mention:{global_event_id}|{mention_identifier}"


def row_identity(row: Mapping[str, Any], row_type: str) -> Tuple[str, str]:
    """(node id, display label) for a row node."""
    if row_type == 'Event':
        return event_node_id(row['global_event_id']), str(row['global_event_id'])
    if row_type == 'Article':
        return article_node_id(row['document_identifier']), str(row['document_identifier'])
    if row_type == 'Mention':
        label = f"{row['global_event_id']}|{row['mention_identifier']}"
        return f"Mention:{label}", label
    raise ConfigurationError(f"'{row_type}' is not a row node type")


def _display(value: Any) -> str:
    if isinstance(value, datetime):
        return value.date().isoformat()
    if isinstance(value, date):
        return value.isoformat()
    return str(value).strip()


def _scalar(value: Any) -> Any:
    if isinstance(value, (datetime, date)):
        return value.isoformat()
    return value


def row_to_star(row: Mapping[str, Any], row_type: str, field_plan: Mapping[str, FieldRule]) -> StarFragment:
    """
    Expand one row into its star.

    Args:
        row: Column -> value map (a record's fields)
        row_type: Event, Mention or Article
        field_plan: Column -> FieldRule

    Returns:
        StarFragment with one edge per non-empty value (per element for lists)
    """
    unknown = [column for column in field_plan if column not in row]
    if unknown:
        raise ConfigurationError(f"field plan references unknown columns: {', '.join(unknown)}")

    node_id, label = row_identity(row, row_type)
    attributes: Dict[str, Any] = {}
    edges: List[ValueEdge] = []

    for column, rule in field_plan.items():
        value = row[column]
        if rule.kind == 'skip' or value is None:
            continue
        if rule.kind == 'attribute':
            if not isinstance(value, (list, dict)):
                attributes[column] = _scalar(value)
            continue

        elements = value if isinstance(value, list) else [value]
        row_edge_attrs = {name: row.get(source) for name, source in rule.edge_attributes}
        for element in elements:
            edge_attrs = dict(row_edge_attrs)
            if isinstance(element, Mapping):
                text = element.get(rule.label_key) if rule.label_key else None
                edge_attrs.update({k: v for k, v in element.items() if k != rule.label_key})
            else:
                text = element
            if text is None or not normalize_label(_display(text)):
                continue
            edges.append(ValueEdge(
                label=rule.edge,
                node_type=rule.node_type,
                value_label=_display(text),
                attributes={k: _scalar(v) for k, v in edge_attrs.items() if v is not None},
            ))

    return StarFragment(node_id, row_type, label, attributes, edges)


def _merge_star(kg: KnowledgeGraph, star: StarFragment, report: BuildReport) -> bool:
    if not kg.add_node(star.node_id, star.node_type, star.label, star.attributes):
        report.duplicate_rows.append(star.node_id)
        logger.warning(f"Duplicate row node skipped: {star.node_id}")
        return False
    report.row_nodes += 1

    for edge in star.edges:
        target = value_node_id(edge.node_type, edge.value_label)
        if kg.add_node(target, edge.node_type, edge.value_label):
            report.value_nodes += 1
        kg.add_edge(star.node_id, edge.label, target, edge.attributes)
        report.star_edges += 1
    return True


def _table_rows(records: Sequence[Any]) -> List[Dict[str, Any]]:
    return [{f.name: getattr(r, f.name) for f in dataclass_fields(r)} for r in records]


def load_facts(path: Path) -> List[Tuple[str, str, str, str, str]]:
    """
    Read curated facts.

    Each entry is either a 5-item list [source type, source label, edge,
    target type, target label] or a mapping with those keys.
    """
    raw = read_yaml(path) or {}
    facts = []
    for i, entry in enumerate(raw.get('facts') or []):
        if isinstance(entry, Mapping):
            keys = ('source_type', 'source', 'edge', 'target_type', 'target')
            if any(k not in entry for k in keys):
                raise ConfigurationError(f"fact #{i} is missing keys", {'path': str(path)})
            entry = [entry[k] for k in keys]
        if not isinstance(entry, (list, tuple)) or len(entry) != 5:
            raise ConfigurationError(f"fact #{i} must have 5 parts", {'path': str(path)})
        facts.append(tuple(str(part) for part in entry))
    return facts


def build_dkg(
    subset: CaseStudySubset,
    ontology: Optional[Ontology] = None,
    skip_unresolved: bool = False,
    facts: Optional[Sequence[Tuple[str, str, str, str, str]]] = None
) -> KnowledgeGraph:
    """
    Build the DKG from a case-study subset.

    Stars are merged in table order (events, articles, mentions) and row order,
    so edge ids are reproducible. Curated facts are added last.

    Args:
        subset: Filtered subset
        ontology: Ontology with field plans (default: config/ontology.yaml)
        skip_unresolved: Skip mentions whose event or article is absent instead of failing
        facts: Optional curated (type, label, edge, type, label) triples

    Returns:
        Frozen KnowledgeGraph; its build_report holds the BuildReport
    """
    ontology = ontology or default_ontology()
    for table, record_type in RECORD_TYPES.items():
        ontology.check_plan_columns(table, [f.name for f in dataclass_fields(record_type)])

    if subset.unresolved and not skip_unresolved:
        raise UnresolvedReferenceError(
            f"subset has {len(subset.unresolved)} unresolved references",
            {'events': len(subset.unresolved_events), 'articles': len(subset.unresolved_articles)}
        )

    kg = KnowledgeGraph(ontology)
    report = BuildReport()

    for table in ('events', 'articles'):
        plan = ontology.plan(table)
        for row in _table_rows(getattr(subset, table)):
            _merge_star(kg, row_to_star(row, ROW_TYPES[table], plan), report)

    mention_plan = ontology.plan('mentions')
    for row in _table_rows(subset.mentions):
        event_id = event_node_id(row['global_event_id'])
        article_id = article_node_id(row['mention_identifier'])
        missing = [kind for kind, node in (('event', event_id), ('article', article_id)) if node not in kg]
        if missing:
            skipped = {'global_event_id': row['global_event_id'],
                       'mention_identifier': row['mention_identifier'], 'missing': missing}
            if not skip_unresolved:
                raise UnresolvedReferenceError("mention references a missing row", skipped)
            report.skipped_structural.append(skipped)

        star = row_to_star(row, 'Mention', mention_plan)
        if not _merge_star(kg, star, report) or missing:
            continue
        kg.add_edge(event_id, 'mentioned_in', star.node_id)
        kg.add_edge(star.node_id, 'appears_in', article_id)
        report.structural_edges += 2

    for source_type, source, label, target_type, target in facts or []:
        ontology.check_edge(label, source_type, target_type)
        source_id = value_node_id(source_type, source)
        target_id = value_node_id(target_type, target)
        for node_id, node_type, text in ((source_id, source_type, source), (target_id, target_type, target)):
            if kg.add_node(node_id, node_type, text):
                report.value_nodes += 1
        kg.add_edge(source_id, label, target_id, {'curated': True})
        report.fact_edges += 1

    if report.skipped_structural:
        logger.warning(f"Skipped structural edges for {len(report.skipped_structural)} mentions")
    logger.info(
        f"Built DKG: {kg.node_count} nodes, {kg.edge_count} edges "
        f"({report.row_nodes} rows, {report.value_nodes} values, {report.fact_edges} curated)"
    )
    kg.build_report = report
    return kg.freeze()


def graph_stats(kg: KnowledgeGraph) -> Dict[str, Any]:
    """Node counts per type and edge counts per label."""
    node_types: Dict[str, int] = {}
    for node in kg.nodes():
        node_types[node.type] = node_types.get(node.type, 0) + 1
    edge_labels: Dict[str, int] = {}
    for edge in kg.edges():
        edge_labels[edge.label] = edge_labels.get(edge.label, 0) + 1
    return {
        'nodes': kg.node_count,
        'edges': kg.edge_count,
        'node_types': dict(sorted(node_types.items())),
        'edge_labels': dict(sorted(edge_labels.items())),
    }
