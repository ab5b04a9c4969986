"""
Subset Store - persist a CaseStudySubset as three JSON-lines row files plus a
provenance manifest.
"""
import math
from pathlib import Path
from typing import Any, Dict, List

import pandas as pd

from src.common.errors import IngestError
from src.common.logging import setup_logger
from src.common.state_store import read_yaml, write_yaml_atomic
from src.extract.gdelt_tables import ArticleRecord, EventRecord, MentionRecord
from src.transform.subset_filter import CaseStudySubset, KeywordFilter, consistency_report

logger = setup_logger(__name__)

SUBSET_FORMAT = "gdelt-subset"
SUBSET_SCHEMA_VERSION = 1

TABLE_FILES = {
    'events': ('events.jsonl', EventRecord),
    'mentions': ('mentions.jsonl', MentionRecord),
    'articles': ('articles.jsonl', ArticleRecord),
}

# JSON readers hand back floats for integer columns that contain nulls
INT_FIELDS = {
    'events': ('global_event_id', 'num_mentions'),
    'mentions': ('global_event_id', 'mention_type', 'confidence'),
    'articles': (),
}


def _write_rows(path: Path, rows: List[Dict[str, Any]]) -> None:
    if not rows:
        path.write_text("", encoding='utf-8')
        return
    df = pd.DataFrame(rows)
    df.to_json(path, orient='records', lines=True, force_ascii=False, double_precision=15)


def _clean(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def _read_rows(path: Path, table: str) -> List[Dict[str, Any]]:
    if not path.exists():
        raise FileNotFoundError(f"Subset file not found: {path}")
    if path.stat().st_size == 0:
        return []

    df = pd.read_json(path, lines=True, dtype=False, convert_dates=False)
    rows = []
    for row in df.to_dict(orient='records'):
        row = {k: _clean(v) for k, v in row.items()}
        for name in INT_FIELDS[table]:
            if isinstance(row.get(name), float):
                row[name] = int(row[name])
        rows.append(row)
    return rows


def save_subset(subset: CaseStudySubset, out_dir: Path) -> Path:
    """
    Write the subset to a directory.

    Args:
        subset: Filtered case study
        out_dir: Target directory (created if needed)

    Returns:
        Path of the written manifest
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for table, (file_name, _) in TABLE_FILES.items():
        records = getattr(subset, table)
        _write_rows(out_dir / file_name, [r.to_dict() for r in records])
        logger.info(f"Wrote {len(records)} {table} to {out_dir / file_name}")

    manifest = {
        'format': SUBSET_FORMAT,
        'schema_version': SUBSET_SCHEMA_VERSION,
        'files': {table: file_name for table, (file_name, _) in TABLE_FILES.items()},
        'filter': subset.filter_spec.to_dict(),
        'provenance': subset.provenance,
        'report': consistency_report(subset),
        'unresolved': subset.unresolved,
    }
    manifest_path = out_dir / "manifest.yaml"
    write_yaml_atomic(manifest_path, manifest)
    return manifest_path


def load_subset(subset_dir: Path) -> CaseStudySubset:
    """Read a subset written by save_subset."""
    subset_dir = Path(subset_dir)
    manifest = read_yaml(subset_dir / "manifest.yaml") or {}

    if manifest.get('format') != SUBSET_FORMAT:
        raise IngestError("not a subset directory", {'path': str(subset_dir)})
    if manifest.get('schema_version') != SUBSET_SCHEMA_VERSION:
        raise IngestError(
            f"subset schema version {manifest.get('schema_version')} is not supported "
            f"(expected {SUBSET_SCHEMA_VERSION})",
            {'path': str(subset_dir)}
        )

    tables: Dict[str, list] = {}
    for table, (file_name, record_type) in TABLE_FILES.items():
        rows = _read_rows(subset_dir / file_name, table)
        tables[table] = [record_type.from_dict(row) for row in rows]

    logger.info(
        f"Loaded subset from {subset_dir}: {len(tables['events'])} events, "
        f"{len(tables['mentions'])} mentions, {len(tables['articles'])} articles"
    )
    return CaseStudySubset(
        events=tables['events'],
        mentions=tables['mentions'],
        articles=tables['articles'],
        filter_spec=KeywordFilter.from_dict(manifest.get('filter') or {}),
        provenance=manifest.get('provenance') or {},
        unresolved=manifest.get('unresolved') or [],
        duplicates=(manifest.get('report') or {}).get('duplicates') or [],
    )
