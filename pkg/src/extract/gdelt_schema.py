"""
GDELT 2.0 column maps, loaded from config/gdelt_schema.yaml.

Column positions live in data so codebook drift is a config change.
"""
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

from src.common.config import PROJECT_ROOT
from src.common.errors import ConfigurationError
from src.common.logging import setup_logger
from src.common.state_store import read_yaml

logger = setup_logger(__name__)

SCHEMA_VERSION = 1
DEFAULT_SCHEMA_PATH = PROJECT_ROOT / "config" / "gdelt_schema.yaml"

# Fields every table map must name; parsers read exactly these
REQUIRED_FIELDS = {
    'events': (
        'global_event_id', 'day', 'actor1_code', 'actor1_name', 'actor2_code',
        'actor2_name', 'event_code', 'goldstein_scale', 'num_mentions', 'avg_tone',
        'action_geo_fullname', 'action_geo_lat', 'action_geo_lon', 'source_url',
    ),
    'mentions': (
        'global_event_id', 'event_time', 'mention_time', 'mention_type',
        'mention_source_name', 'mention_identifier', 'confidence', 'mention_doc_tone',
    ),
    'gkg': (
        'gkg_record_id', 'date', 'source_common_name', 'document_identifier',
        'themes', 'v2_themes', 'locations', 'v2_locations', 'persons', 'v2_persons',
        'organizations', 'v2_organizations', 'tone', 'quotations',
    ),
}


@dataclass(frozen=True)
class TableSchema:
    name: str
    columns: int
    fields: Dict[str, int]

    def index(self, field: str) -> int:
        return self.fields[field]


@dataclass(frozen=True)
class GdeltSchema:
    version: int
    tables: Dict[str, TableSchema]

    def table(self, name: str) -> TableSchema:
        if name not in self.tables:
            raise ConfigurationError(f"schema has no table '{name}'")
        return self.tables[name]


def _build_table(name: str, raw: dict) -> TableSchema:
    if not isinstance(raw, dict) or 'columns' not in raw or 'fields' not in raw:
        raise ConfigurationError(f"table '{name}' needs 'columns' and 'fields'")

    columns = int(raw['columns'])
    fields = {str(k): int(v) for k, v in raw['fields'].items()}

    missing = [f for f in REQUIRED_FIELDS[name] if f not in fields]
    if missing:
        raise ConfigurationError(f"table '{name}' is missing fields: {', '.join(missing)}")

    out_of_range = {f: i for f, i in fields.items() if not 0 <= i < columns}
    if out_of_range:
        raise ConfigurationError(
            f"table '{name}' maps fields outside its {columns} columns",
            {'fields': out_of_range}
        )
    return TableSchema(name=name, columns=columns, fields=fields)


def load_schema(path: Optional[Path] = None) -> GdeltSchema:
    """
    Load and validate a column-map file.

    Args:
        path: YAML schema file (default: config/gdelt_schema.yaml)

    Returns:
        GdeltSchema with one TableSchema per GDELT table
    """
    path = Path(path) if path else DEFAULT_SCHEMA_PATH
    raw = read_yaml(path) or {}

    version = raw.get('version')
    if version != SCHEMA_VERSION:
        raise ConfigurationError(
            f"unsupported schema version {version} (expected {SCHEMA_VERSION})",
            {'path': str(path)}
        )

    tables_raw = raw.get('tables') or {}
    tables = {}
    for name in REQUIRED_FIELDS:
        if name not in tables_raw:
            raise ConfigurationError(f"schema file has no '{name}' table", {'path': str(path)})
        tables[name] = _build_table(name, tables_raw[name])

    logger.debug(f"Loaded GDELT schema v{version} from {path}")
    return GdeltSchema(version=version, tables=tables)


@lru_cache(maxsize=1)
def default_schema() -> GdeltSchema:
    return load_schema(DEFAULT_SCHEMA_PATH)
