"""
Case-study subset selection.

Keeps the mention rows that contain any keyword (and fall inside the optional
time window), then collects exactly the events and articles those mentions
reference. References that cannot be resolved are listed, never dropped.
"""
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence, Tuple

from src.common.errors import FilterError
from src.common.logging import setup_logger
from src.extract.gdelt_tables import ArticleRecord, EventRecord, MentionRecord, RowError

logger = setup_logger(__name__)


@dataclass
class KeywordFilter:
    keywords: List[str]
    case_sensitive: bool = False
    time_window: Optional[Tuple[Optional[datetime], Optional[datetime]]] = None

    def validate(self) -> None:
        if not [k for k in self.keywords if k and k.strip()]:
            raise FilterError("filter requires keywords")

    def _needles(self) -> List[str]:
        needles = [k.strip() for k in self.keywords if k and k.strip()]
        return needles if self.case_sensitive else [k.casefold() for k in needles]

    def matches(self, text: str) -> bool:
        haystack = text if self.case_sensitive else text.casefold()
        return any(needle in haystack for needle in self._needles())

    def in_window(self, moment: Optional[datetime]) -> bool:
        if self.time_window is None:
            return True
        start, end = self.time_window
        if moment is None:
            return False
        return (start is None or moment >= start) and (end is None or moment <= end)

    def to_dict(self) -> Dict[str, Any]:
        window = None
        if self.time_window is not None:
            window = [t.isoformat() if t else None for t in self.time_window]
        return {'keywords': list(self.keywords), 'case_sensitive': self.case_sensitive, 'time_window': window}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KeywordFilter":
        window = data.get('time_window')
        if window is not None:
            window = tuple(datetime.fromisoformat(t) if t else None for t in window)
        return cls(
            keywords=list(data.get('keywords') or []),
            case_sensitive=bool(data.get('case_sensitive', False)),
            time_window=window,
        )


@dataclass
class CaseStudySubset:
    events: List[EventRecord]
    mentions: List[MentionRecord]
    articles: List[ArticleRecord]
    filter_spec: KeywordFilter
    provenance: Dict[str, Any] = field(default_factory=dict)
    unresolved: List[Dict[str, Any]] = field(default_factory=list)
    duplicates: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def unresolved_events(self) -> List[int]:
        return sorted({u['global_event_id'] for u in self.unresolved if u['missing'] == 'event'})

    @property
    def unresolved_articles(self) -> List[str]:
        return sorted({u['mention_identifier'] for u in self.unresolved if u['missing'] == 'article'})


def filter_subset(
    events: Sequence[EventRecord],
    mentions: Sequence[MentionRecord],
    articles: Sequence[ArticleRecord],
    keyword_filter: KeywordFilter,
    sources: Optional[Dict[str, Any]] = None,
    duplicates: Optional[Sequence[RowError]] = None
) -> CaseStudySubset:
    """
    Reduce the three tables to the keyword-selected case study.

    Args:
        events, mentions, articles: Parsed tables
        keyword_filter: Keywords, case mode and optional mention-time window
        sources: Input file names for the provenance record
        duplicates: Duplicate-row errors reported by the parsers

    Returns:
        CaseStudySubset; events and articles keep their input order
    """
    keyword_filter.validate()

    kept_mentions = [
        m for m in mentions
        if keyword_filter.in_window(m.mention_time) and keyword_filter.matches("\t".join(m.raw_fields))
    ]
    event_ids = {m.global_event_id for m in kept_mentions}
    urls = {m.mention_identifier for m in kept_mentions}

    kept_events = [e for e in events if e.global_event_id in event_ids]
    kept_articles = [a for a in articles if a.document_identifier in urls]

    known_events = {e.global_event_id for e in kept_events}
    known_urls = {a.document_identifier for a in kept_articles}
    unresolved = []
    for m in kept_mentions:
        if m.global_event_id not in known_events:
            unresolved.append({'global_event_id': m.global_event_id,
                               'mention_identifier': m.mention_identifier, 'missing': 'event'})
        if m.mention_identifier not in known_urls:
            unresolved.append({'global_event_id': m.global_event_id,
                               'mention_identifier': m.mention_identifier, 'missing': 'article'})

    input_rows = {'events': len(events), 'mentions': len(mentions), 'articles': len(articles)}
    retained_rows = {'events': len(kept_events), 'mentions': len(kept_mentions), 'articles': len(kept_articles)}
    total_in = sum(input_rows.values())
    fraction = sum(retained_rows.values()) / total_in if total_in else 0.0

    provenance = {
        'sources': dict(sources or {}),
        'input_rows': input_rows,
        'retained_rows': retained_rows,
        'retained_fraction': round(fraction, 6),
    }

    logger.info(
        f"Kept {len(kept_events)} events, {len(kept_mentions)} mentions, {len(kept_articles)} articles "
        f"({fraction:.2%} of input rows)"
    )
    if unresolved:
        logger.warning(f"{len(unresolved)} unresolved mention references")

    return CaseStudySubset(
        events=kept_events,
        mentions=kept_mentions,
        articles=kept_articles,
        filter_spec=keyword_filter,
        provenance=provenance,
        unresolved=unresolved,
        duplicates=[d.to_dict() if isinstance(d, RowError) else dict(d) for d in (duplicates or [])],
    )


def consistency_report(subset: CaseStudySubset) -> Dict[str, Any]:
    """Counts, unresolved references and duplicate rows for a subset."""
    return {
        'counts': {
            'events': len(subset.events),
            'mentions': len(subset.mentions),
            'articles': len(subset.articles),
        },
        'unresolved_events': subset.unresolved_events,
        'unresolved_articles': subset.unresolved_articles,
        'unresolved_count': len(subset.unresolved),
        'duplicates': list(subset.duplicates),
        'retained_fraction': subset.provenance.get('retained_fraction'),
        'filter': subset.filter_spec.to_dict(),
    }
