"""
GDELT 2.0 Table Parser
Parses the events (export), mentions and GKG tables from their tab-delimited
wire format into typed records. Bad rows become RowError entries, never
exceptions, so records + errors always equals rows read.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields as dataclass_fields
from datetime import date, datetime
from pathlib import Path
from typing import Any, BinaryIO, Callable, ClassVar, Dict, Hashable, List, Optional, Sequence, Tuple, Union

from src.common.errors import IngestError
from src.common.logging import setup_logger
from src.extract.gdelt_schema import GdeltSchema, TableSchema, default_schema

logger = setup_logger(__name__)

ByteSource = Union[bytes, bytearray, BinaryIO]


class _Record:
    """Conversion helpers shared by the three record types."""

    _date_fields: ClassVar[Tuple[str, ...]] = ()
    _datetime_fields: ClassVar[Tuple[str, ...]] = ()

    def to_dict(self) -> Dict[str, Any]:
        row = asdict(self)
        for name in self._date_fields + self._datetime_fields:
            if row[name] is not None:
                row[name] = row[name].isoformat()
        return row

    @classmethod
    def from_dict(cls, row: Dict[str, Any]):
        values = {f.name: row.get(f.name) for f in dataclass_fields(cls)}
        for name in cls._date_fields:
            if isinstance(values[name], str):
                values[name] = date.fromisoformat(values[name])
        for name in cls._datetime_fields:
            if isinstance(values[name], str):
                values[name] = datetime.fromisoformat(values[name])
        for f in dataclass_fields(cls):
            if f.default_factory is not list or values[f.name] is not None:
                continue
            values[f.name] = []
        return cls(**values)


@dataclass
class EventRecord(_Record):
    global_event_id: int
    day: date
    actor1_code: Optional[str] = None
    actor1_name: Optional[str] = None
    actor2_code: Optional[str] = None
    actor2_name: Optional[str] = None
    event_code: Optional[str] = None
    goldstein_scale: Optional[float] = None
    num_mentions: Optional[int] = None
    avg_tone: Optional[float] = None
    action_geo_fullname: Optional[str] = None
    action_geo_lat: Optional[float] = None
    action_geo_lon: Optional[float] = None
    source_url: str = ""
    flags: List[str] = field(default_factory=list)

    _date_fields: ClassVar[Tuple[str, ...]] = ('day',)

    @property
    def key(self) -> int:
        return self.global_event_id


@dataclass
class MentionRecord(_Record):
    global_event_id: int
    mention_time: datetime
    mention_identifier: str
    event_time: Optional[datetime] = None
    mention_type: Optional[int] = None
    mention_source_name: Optional[str] = None
    confidence: Optional[int] = None
    mention_doc_tone: Optional[float] = None
    raw_fields: List[str] = field(default_factory=list)

    _datetime_fields: ClassVar[Tuple[str, ...]] = ('mention_time', 'event_time')

    @property
    def key(self) -> Tuple[int, str]:
        return (self.global_event_id, self.mention_identifier)


@dataclass
class ArticleRecord(_Record):
    gkg_record_id: str
    date: datetime
    document_identifier: str
    source_common_name: Optional[str] = None
    themes: List[str] = field(default_factory=list)
    persons: List[str] = field(default_factory=list)
    organizations: List[str] = field(default_factory=list)
    locations: List[Dict[str, Any]] = field(default_factory=list)
    tone: Optional[float] = None
    quotations: List[str] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    _datetime_fields: ClassVar[Tuple[str, ...]] = ('date',)

    @property
    def key(self) -> str:
        return self.document_identifier


@dataclass
class RowError:
    """One rejected row: where, which column, why."""
    table: str
    row_number: int
    column: Optional[str]
    reason: str
    kind: str = "malformed"   # malformed | duplicate
    source: str = "<stream>"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class ParseResult:
    table: str
    records: List[Any]
    errors: List[RowError]
    rows_read: int
    row_numbers: List[int] = field(default_factory=list)
    source: str = "<stream>"

    @property
    def skipped(self) -> int:
        return len(self.errors)

    @property
    def duplicates(self) -> List[RowError]:
        return [e for e in self.errors if e.kind == "duplicate"]


@dataclass
class ParsedTables:
    events: ParseResult
    mentions: ParseResult
    articles: ParseResult


class _RowProblem(Exception):
    def __init__(self, column: Optional[str], reason: str):
        super().__init__(reason)
        self.column = column
        self.reason = reason


# ---------------------------------------------------------------------------
# Cell helpers
# ---------------------------------------------------------------------------

def _text(value: str) -> Optional[str]:
    value = value.strip()
    return value or None


def _required_int(value: str, column: str) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise _RowProblem(column, f"not an integer: {value!r}")


def _required_text(value: str, column: str) -> str:
    value = value.strip()
    if not value:
        raise _RowProblem(column, "empty required field")
    return value


def _required_date(value: str, column: str) -> date:
    try:
        return datetime.strptime(value.strip(), '%Y%m%d').date()
    except ValueError:
        raise _RowProblem(column, f"not a YYYYMMDD date: {value!r}")


def _required_timestamp(value: str, column: str) -> datetime:
    try:
        return datetime.strptime(value.strip(), '%Y%m%d%H%M%S')
    except ValueError:
        raise _RowProblem(column, f"not a YYYYMMDDHHMMSS timestamp: {value!r}")


def _optional_timestamp(value: str) -> Optional[datetime]:
    try:
        return datetime.strptime(value.strip(), '%Y%m%d%H%M%S')
    except ValueError:
        return None


def _optional_float(value: str) -> Optional[float]:
    try:
        number = float(value.strip())
    except ValueError:
        return None
    return number if number == number and abs(number) != float('inf') else None


def _optional_int(value: str) -> Optional[int]:
    try:
        return int(value.strip())
    except ValueError:
        number = _optional_float(value)
        return int(number) if number is not None and number.is_integer() else None


def _dedupe(items: List[Any]) -> List[Any]:
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def _strip_offset(entry: str) -> str:
    head, sep, tail = entry.rpartition(',')
    if sep and tail.strip().isdigit():
        return head.strip()
    return entry.strip()


def parse_code_list(v2_cell: str, v1_cell: str = "") -> List[str]:
    """
    Parse a GKG list field, preferring the V2 `CODE,offset` form.

    Args:
        v2_cell: Enhanced field text (entries `VALUE,offset` separated by ';')
        v1_cell: Plain field text used when the V2 cell is empty

    Returns:
        Values in first-seen order, offsets removed, duplicates dropped
    """
    values = [_strip_offset(e) for e in v2_cell.split(';') if e.strip()]
    if not values:
        values = [e.strip() for e in v1_cell.split(';') if e.strip()]
    return _dedupe([v for v in values if v])


def parse_locations(v2_cell: str, v1_cell: str = "") -> List[Dict[str, Any]]:
    """Parse `#`-separated location entries (9 subfields in V2, 7 in V1)."""
    def _parse(cell: str, name_at: int, lat_at: int, lon_at: int, width: int):
        parsed = []
        for entry in cell.split(';'):
            parts = entry.split('#')
            if len(parts) < width:
                continue
            name = parts[name_at].strip()
            if not name:
                continue
            parsed.append({
                'name': name,
                'lat': _optional_float(parts[lat_at]),
                'lon': _optional_float(parts[lon_at]),
            })
        return parsed

    locations = _parse(v2_cell, 1, 5, 6, 9)
    if not locations:
        locations = _parse(v1_cell, 1, 4, 5, 7)

    seen = set()
    unique = []
    for loc in locations:
        if loc['name'] not in seen:
            seen.add(loc['name'])
            unique.append(loc)
    return unique


def parse_quotations(cell: str) -> List[str]:
    """Quotation entries are `#`-separated; the quote is the last `|` subfield."""
    quotes = []
    for entry in cell.split('#'):
        if not entry.strip():
            continue
        quote = entry.split('|')[-1].strip()
        if quote:
            quotes.append(quote)
    return _dedupe(quotes)


def _out_of_range(lat: Optional[float], lon: Optional[float]) -> bool:
    return (lat is not None and not -90.0 <= lat <= 90.0) or (lon is not None and not -180.0 <= lon <= 180.0)


# ---------------------------------------------------------------------------
# Row builders
# ---------------------------------------------------------------------------

def _build_event(cols: Sequence[str], t: TableSchema) -> EventRecord:
    def cell(name: str) -> str:
        return cols[t.index(name)]

    record = EventRecord(
        global_event_id=_required_int(cell('global_event_id'), 'global_event_id'),
        day=_required_date(cell('day'), 'day'),
        actor1_code=_text(cell('actor1_code')),
        actor1_name=_text(cell('actor1_name')),
        actor2_code=_text(cell('actor2_code')),
        actor2_name=_text(cell('actor2_name')),
        event_code=_text(cell('event_code')),
        goldstein_scale=_optional_float(cell('goldstein_scale')),
        num_mentions=_optional_int(cell('num_mentions')),
        avg_tone=_optional_float(cell('avg_tone')),
        action_geo_fullname=_text(cell('action_geo_fullname')),
        action_geo_lat=_optional_float(cell('action_geo_lat')),
        action_geo_lon=_optional_float(cell('action_geo_lon')),
        source_url=cell('source_url').strip(),
    )
    if _out_of_range(record.action_geo_lat, record.action_geo_lon):
        record.flags.append('action_geo_out_of_range')
    if record.goldstein_scale is not None and not -10.0 <= record.goldstein_scale <= 10.0:
        record.flags.append('goldstein_out_of_range')
    if record.num_mentions is not None and record.num_mentions < 0:
        record.flags.append('negative_num_mentions')
    return record


def _build_mention(cols: Sequence[str], t: TableSchema) -> MentionRecord:
    def cell(name: str) -> str:
        return cols[t.index(name)]

    return MentionRecord(
        global_event_id=_required_int(cell('global_event_id'), 'global_event_id'),
        mention_time=_required_timestamp(cell('mention_time'), 'mention_time'),
        mention_identifier=_required_text(cell('mention_identifier'), 'mention_identifier'),
        event_time=_optional_timestamp(cell('event_time')),
        mention_type=_optional_int(cell('mention_type')),
        mention_source_name=_text(cell('mention_source_name')),
        confidence=_optional_int(cell('confidence')),
        mention_doc_tone=_optional_float(cell('mention_doc_tone')),
        raw_fields=list(cols),
    )


def _build_article(cols: Sequence[str], t: TableSchema) -> ArticleRecord:
    def cell(name: str) -> str:
        return cols[t.index(name)]

    tone_cell = cell('tone').split(',')[0]
    record = ArticleRecord(
        gkg_record_id=_required_text(cell('gkg_record_id'), 'gkg_record_id'),
        date=_required_timestamp(cell('date'), 'date'),
        document_identifier=_required_text(cell('document_identifier'), 'document_identifier'),
        source_common_name=_text(cell('source_common_name')),
        themes=parse_code_list(cell('v2_themes'), cell('themes')),
        persons=parse_code_list(cell('v2_persons'), cell('persons')),
        organizations=parse_code_list(cell('v2_organizations'), cell('organizations')),
        locations=parse_locations(cell('v2_locations'), cell('locations')),
        tone=_optional_float(tone_cell),
        quotations=parse_quotations(cell('quotations')),
    )
    for loc in record.locations:
        if _out_of_range(loc['lat'], loc['lon']):
            record.flags.append(f"location_out_of_range:{loc['name']}")
    return record


_BUILDERS: Dict[str, Callable[[Sequence[str], TableSchema], Any]] = {
    'events': _build_event,
    'mentions': _build_mention,
    'gkg': _build_article,
}


# ---------------------------------------------------------------------------
# Stream parsing
# ---------------------------------------------------------------------------

def _read_bytes(stream: ByteSource, source: str) -> bytes:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream)
    try:
        data = stream.read()
    except (OSError, ValueError, AttributeError) as e:
        raise IngestError(f"cannot read input stream: {e}", {'source': source}) from e
    if isinstance(data, str):
        return data.encode('utf-8')
    return data


def _decode(raw: bytes, source: str) -> str:
    try:
        return raw.decode('utf-8')
    except UnicodeDecodeError:
        text = raw.decode('utf-8', errors='replace')
        logger.warning(
            f"{source}: invalid UTF-8 replaced ({text.count(chr(0xFFFD))} replacement characters)"
        )
        return text


def parse_stream(
    stream: ByteSource,
    table: str,
    schema: Optional[GdeltSchema] = None,
    source: str = "<stream>"
) -> ParseResult:
    """
    Parse one tab-delimited GDELT stream.

    Blank lines are not rows. Each other line is either a record or a RowError;
    later rows repeating an earlier key are errors of kind "duplicate".

    Args:
        stream: Bytes or a binary file object
        table: 'events', 'mentions' or 'gkg'
        schema: Column maps (default: config/gdelt_schema.yaml)
        source: Name used in logs and error entries

    Returns:
        ParseResult with records, errors and rows_read
    """
    schema = schema or default_schema()
    table_schema = schema.table(table)
    build = _BUILDERS[table]
    text = _decode(_read_bytes(stream, source), source)

    result = ParseResult(table=table, records=[], errors=[], rows_read=0, source=source)
    first_seen: Dict[Hashable, int] = {}

    for row_number, line in enumerate(text.split('\n'), start=1):
        line = line.rstrip('\r')
        if not line.strip():
            continue
        result.rows_read += 1

        cols = line.split('\t')
        if len(cols) != table_schema.columns:
            result.errors.append(RowError(
                table, row_number, None,
                f"expected {table_schema.columns} columns, found {len(cols)}", source=source
            ))
            logger.debug(f"{source}:{row_number} wrong column count ({len(cols)})")
            continue

        try:
            record = build(cols, table_schema)
        except _RowProblem as problem:
            result.errors.append(RowError(table, row_number, problem.column, problem.reason, source=source))
            logger.debug(f"{source}:{row_number} {problem.column}: {problem.reason}")
            continue

        if record.key in first_seen:
            result.errors.append(RowError(
                table, row_number, None,
                f"duplicate key {record.key!r} (first seen at row {first_seen[record.key]})",
                kind="duplicate", source=source
            ))
            continue

        first_seen[record.key] = row_number
        result.records.append(record)
        result.row_numbers.append(row_number)

    duplicates = len(result.duplicates)
    malformed = len(result.errors) - duplicates
    if malformed or duplicates:
        logger.warning(f"{source} ({table}): skipped {malformed} malformed and {duplicates} duplicate rows")
    logger.info(f"Parsed {len(result.records)} {table} records from {result.rows_read} rows ({source})")
    return result


def parse_events(stream: ByteSource, schema: Optional[GdeltSchema] = None, source: str = "<stream>") -> ParseResult:
    return parse_stream(stream, 'events', schema, source)


def parse_mentions(stream: ByteSource, schema: Optional[GdeltSchema] = None, source: str = "<stream>") -> ParseResult:
    return parse_stream(stream, 'mentions', schema, source)


def parse_gkg(stream: ByteSource, schema: Optional[GdeltSchema] = None, source: str = "<stream>") -> ParseResult:
    return parse_stream(stream, 'gkg', schema, source)


def parse_file(path: Path, table: str, schema: Optional[GdeltSchema] = None) -> ParseResult:
    path = Path(path)
    try:
        with open(path, 'rb') as f:
            return parse_stream(f, table, schema, source=path.name)
    except OSError as e:
        raise IngestError(f"cannot open {table} file: {e}", {'path': str(path)}) from e


def merge_results(table: str, results: Sequence[ParseResult]) -> ParseResult:
    """Concatenate per-file results in order; keys repeated across files become duplicates."""
    merged = ParseResult(table=table, records=[], errors=[], rows_read=0,
                         source=",".join(r.source for r in results) or "<none>")
    seen: Dict[Hashable, str] = {}

    for result in results:
        merged.rows_read += result.rows_read
        merged.errors.extend(result.errors)
        for record, row_number in zip(result.records, result.row_numbers):
            if record.key in seen:
                merged.errors.append(RowError(
                    table, row_number, None,
                    f"duplicate key {record.key!r} (first seen in {seen[record.key]})",
                    kind="duplicate", source=result.source
                ))
                continue
            seen[record.key] = result.source
            merged.records.append(record)
            merged.row_numbers.append(row_number)

    return merged


def parse_tables(
    events_paths: Sequence[Path],
    mentions_paths: Sequence[Path],
    gkg_paths: Sequence[Path],
    schema: Optional[GdeltSchema] = None,
    max_workers: int = 4
) -> ParsedTables:
    """
    Parse several files per table concurrently.

    Output order follows argument order regardless of completion order.
    """
    schema = schema or default_schema()
    jobs = [('events', Path(p)) for p in events_paths]
    jobs += [('mentions', Path(p)) for p in mentions_paths]
    jobs += [('gkg', Path(p)) for p in gkg_paths]

    logger.info(f"Parsing {len(jobs)} GDELT files with {max_workers} workers")
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        futures = [pool.submit(parse_file, path, table, schema) for table, path in jobs]
        results = [f.result() for f in futures]

    by_table: Dict[str, List[ParseResult]] = {'events': [], 'mentions': [], 'gkg': []}
    for (table, _), result in zip(jobs, results):
        by_table[table].append(result)

    return ParsedTables(
        events=merge_results('events', by_table['events']),
        mentions=merge_results('mentions', by_table['mentions']),
        articles=merge_results('gkg', by_table['gkg']),
    )
