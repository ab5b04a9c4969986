"""
DKG ontology: node types, edge label signatures and per-table field plans.

Loaded from config/ontology.yaml. Core labels are used by row stars;
extension labels are only available to curated facts.
"""
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from src.common.config import PROJECT_ROOT
from src.common.errors import ConfigurationError
from src.common.state_store import read_yaml

ONTOLOGY_VERSION = 1
DEFAULT_ONTOLOGY_PATH = PROJECT_ROOT / "config" / "ontology.yaml"

NODE_TYPES = (
    'Event', 'Mention', 'Article', 'Actor', 'EventCode', 'Theme', 'Person',
    'Organization', 'Location', 'Source', 'Quotation', 'DateValue',
)

# Subset table -> row node type
ROW_TYPES = {'events': 'Event', 'mentions': 'Mention', 'articles': 'Article'}


@dataclass(frozen=True)
class FieldRule:
    """How one record column is rendered in a row star."""
    column: str
    kind: str                                  # attribute | skip | node
    node_type: Optional[str] = None
    edge: Optional[str] = None
    label_key: Optional[str] = None
    edge_attributes: Tuple[Tuple[str, str], ...] = ()

    def to_descriptor(self) -> Any:
        if self.kind != 'node':
            return self.kind
        rule: Dict[str, Any] = {'node': self.node_type, 'edge': self.edge}
        if self.label_key:
            rule['label_key'] = self.label_key
        if self.edge_attributes:
            rule['edge_attributes'] = dict(self.edge_attributes)
        return rule


def parse_rule(column: str, raw: Any) -> FieldRule:
    if raw in ('attribute', 'skip'):
        return FieldRule(column=column, kind=raw)
    if isinstance(raw, dict) and 'node' in raw and 'edge' in raw:
        return FieldRule(
            column=column,
            kind='node',
            node_type=raw['node'],
            edge=raw['edge'],
            label_key=raw.get('label_key'),
            edge_attributes=tuple(sorted((raw.get('edge_attributes') or {}).items())),
        )
    raise ConfigurationError(f"bad field rule for column '{column}'", {'rule': raw})


@dataclass
class Ontology:
    version: int
    node_types: Tuple[str, ...]
    edge_labels: Dict[str, Tuple[str, str]]
    extensions: Dict[str, Tuple[str, str]] = field(default_factory=dict)
    field_plans: Dict[str, Dict[str, FieldRule]] = field(default_factory=dict)

    def signature(self, label: str) -> Tuple[str, str]:
        if label in self.edge_labels:
            return self.edge_labels[label]
        if label in self.extensions:
            return self.extensions[label]
        raise ConfigurationError(f"unknown edge label '{label}'")

    def check_edge(self, label: str, source_type: str, target_type: str) -> None:
        expected = self.signature(label)
        if (source_type, target_type) != expected:
            raise ConfigurationError(
                f"edge '{label}' expects {expected[0]}->{expected[1]}, got {source_type}->{target_type}"
            )

    def plan(self, table: str) -> Dict[str, FieldRule]:
        if table not in self.field_plans:
            raise ConfigurationError(f"no field plan for table '{table}'")
        return self.field_plans[table]

    def validate(self) -> None:
        unknown_types = [t for t in self.node_types if t not in NODE_TYPES]
        if unknown_types:
            raise ConfigurationError(f"unknown node types: {unknown_types}")

        for label, (src, dst) in {**self.edge_labels, **self.extensions}.items():
            if src not in self.node_types or dst not in self.node_types:
                raise ConfigurationError(f"edge '{label}' uses undeclared node types {src}->{dst}")

        overlap = set(self.edge_labels) & set(self.extensions)
        if overlap:
            raise ConfigurationError(f"extension labels redefine core labels: {sorted(overlap)}")

        for table, plan in self.field_plans.items():
            row_type = ROW_TYPES.get(table)
            if row_type is None:
                raise ConfigurationError(f"field plan for unknown table '{table}'")
            for rule in plan.values():
                if rule.kind != 'node':
                    continue
                if rule.edge not in self.edge_labels:
                    raise ConfigurationError(
                        f"plan {table}.{rule.column} uses non-core edge '{rule.edge}'"
                    )
                self.check_edge(rule.edge, row_type, rule.node_type)

    def check_plan_columns(self, table: str, columns: Iterable[str]) -> None:
        """Every planned column must exist on the record type."""
        columns = set(columns)
        plan = self.plan(table)
        unknown = sorted(c for c in plan if c not in columns)
        referenced = sorted(
            source for rule in plan.values() for _, source in rule.edge_attributes if source not in columns
        )
        if unknown or referenced:
            raise ConfigurationError(
                f"field plan '{table}' references unknown columns: {', '.join(unknown + referenced)}"
            )

    def to_descriptor(self) -> Dict[str, Any]:
        return {
            'version': self.version,
            'node_types': list(self.node_types),
            'edge_labels': {k: list(v) for k, v in self.edge_labels.items()},
            'extensions': {k: list(v) for k, v in self.extensions.items()},
            'field_plans': {
                table: {col: rule.to_descriptor() for col, rule in plan.items()}
                for table, plan in self.field_plans.items()
            },
        }

    @classmethod
    def from_descriptor(cls, raw: Dict[str, Any]) -> "Ontology":
        try:
            ontology = cls(
                version=int(raw['version']),
                node_types=tuple(raw['node_types']),
                edge_labels={k: tuple(v) for k, v in raw['edge_labels'].items()},
                extensions={k: tuple(v) for k, v in (raw.get('extensions') or {}).items()},
                field_plans={
                    table: {col: parse_rule(col, rule) for col, rule in plan.items()}
                    for table, plan in (raw.get('field_plans') or {}).items()
                },
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed ontology descriptor: {e}") from e
        ontology.validate()
        return ontology


def load_ontology(path: Optional[Path] = None) -> Ontology:
    path = Path(path) if path else DEFAULT_ONTOLOGY_PATH
    raw = read_yaml(path) or {}
    if raw.get('version') != ONTOLOGY_VERSION:
        raise ConfigurationError(
            f"unsupported ontology version {raw.get('version')} (expected {ONTOLOGY_VERSION})",
            {'path': str(path)}
        )
    return Ontology.from_descriptor(raw)


@lru_cache(maxsize=1)
def default_ontology() -> Ontology:
    return load_ontology(DEFAULT_ONTOLOGY_PATH)
