"""
Article Text Fetcher
Downloads the articles referenced by a subset and reduces each page to its
main text. Failures are recorded as statuses, never raised, so one bad URL
cannot abort a batch. Fixture files stand in for the network when offline.
"""
import re
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Dict, Iterable, List, Optional
from urllib.parse import urlparse

import requests
from bs4 import BeautifulSoup

from src.common.logging import setup_logger
from src.common.state_store import EPOCH, Clock, read_yaml

logger = setup_logger(__name__)

# Tags whose content is never article text
BOILERPLATE_TAGS = ['script', 'style', 'nav', 'header', 'footer', 'aside', 'form', 'noscript', 'iframe']

FIXTURE_INDEX = "index.yaml"


@dataclass
class ArticleText:
    document_identifier: str
    body: str
    fetch_status: str          # ok | http_error | timeout | parse_failed | fixture | offline
    fetched_at: str
    http_status: Optional[int] = None
    error: Optional[str] = None

    BODY_STATUSES: ClassVar[tuple] = ('ok', 'fixture')

    @property
    def status_label(self) -> str:
        if self.fetch_status == 'http_error' and self.http_status is not None:
            return f"http_error({self.http_status})"
        return self.fetch_status

    @property
    def has_body(self) -> bool:
        return self.fetch_status in self.BODY_STATUSES


@dataclass
class FetchPolicy:
    timeout: float = 10.0
    max_bytes: int = 2_000_000
    max_redirects: int = 5
    user_agent: str = "gdelt-kgqa/0.1"
    per_host_limit: int = 1
    max_workers: int = 4
    min_interval: float = 1.0
    fixtures_dir: Optional[Path] = None
    offline: bool = False

    @classmethod
    def from_settings(cls, settings, fixtures_dir: Optional[Path] = None, offline: bool = False) -> "FetchPolicy":
        """Build from config.FetchSettings."""
        return cls(
            timeout=settings.timeout,
            max_bytes=settings.max_bytes,
            max_redirects=settings.max_redirects,
            user_agent=settings.user_agent,
            per_host_limit=settings.per_host_limit,
            max_workers=settings.max_workers,
            min_interval=settings.min_interval,
            fixtures_dir=Path(fixtures_dir) if fixtures_dir else None,
            offline=offline,
        )


@dataclass
class CorpusFetchResult:
    texts: List[ArticleText]
    summary: Dict[str, int] = field(default_factory=dict)
    reused: int = 0


def normalize_whitespace(text: str) -> str:
    return re.sub(r'\s+', ' ', text).strip()


def extract_main_text(html: str) -> str:
    """
    Reduce an HTML page to its paragraph text.

    Boilerplate tags are removed, the <article> element is preferred when
    present, and paragraphs are joined by blank lines. Pages without <p>
    elements fall back to the container's full text.
    """
    soup = BeautifulSoup(html, 'html.parser')
    for tag in soup(BOILERPLATE_TAGS):
        tag.decompose()

    container = soup.find('article') or soup.body or soup
    paragraphs = [normalize_whitespace(p.get_text(' ')) for p in container.find_all('p')]
    paragraphs = [p for p in paragraphs if p]
    if paragraphs:
        return "\n\n".join(paragraphs)
    return normalize_whitespace(container.get_text(' '))


def load_fixture_index(fixtures_dir: Optional[Path]) -> Dict[str, Path]:
    """Map URL -> fixture file from <fixtures_dir>/index.yaml."""
    if fixtures_dir is None:
        return {}
    fixtures_dir = Path(fixtures_dir)
    index = read_yaml(fixtures_dir / FIXTURE_INDEX) or {}
    return {url: fixtures_dir / name for url, name in (index.get('fixtures') or {}).items()}


def _from_fixture(url: str, path: Path) -> ArticleText:
    stamp = EPOCH.strftime('%Y-%m-%dT%H:%M:%SZ')
    try:
        raw = path.read_text(encoding='utf-8', errors='replace')
    except OSError as e:
        return ArticleText(url, "", 'parse_failed', stamp, error=f"fixture unreadable: {e}")

    body = extract_main_text(raw) if path.suffix.lower() in ('.html', '.htm') else raw.strip()
    if not body:
        return ArticleText(url, "", 'parse_failed', stamp, error="fixture has no text")
    return ArticleText(url, body, 'fixture', stamp)


def _read_capped(response: requests.Response, max_bytes: int) -> bytes:
    chunks = []
    size = 0
    for chunk in response.iter_content(chunk_size=65536):
        chunks.append(chunk)
        size += len(chunk)
        if size >= max_bytes:
            logger.warning(f"Response truncated at {max_bytes} bytes: {response.url}")
            break
    return b"".join(chunks)[:max_bytes]


def fetch_article(
    url: str,
    policy: FetchPolicy,
    session: Optional[requests.Session] = None,
    fixtures: Optional[Dict[str, Path]] = None,
    clock: Optional[Clock] = None
) -> ArticleText:
    """
    Fetch one article and extract its main text.

    Args:
        url: http(s) URL
        policy: Timeouts, size cap, redirects, user agent, offline switch
        session: requests session (one is created when omitted)
        fixtures: URL -> local file map; a hit means no network call
        clock: Clock for fetched_at

    Returns:
        ArticleText; failures are reported through fetch_status
    """
    clock = clock or Clock()
    fixtures = fixtures if fixtures is not None else load_fixture_index(policy.fixtures_dir)

    if url in fixtures:
        return _from_fixture(url, fixtures[url])

    if policy.offline:
        return ArticleText(url, "", 'offline', clock.timestamp(), error="no fixture and network disabled")

    if urlparse(url).scheme not in ('http', 'https'):
        return ArticleText(url, "", 'parse_failed', clock.timestamp(), error="not an http(s) URL")

    own_session = session is None
    session = session or requests.Session()
    session.max_redirects = policy.max_redirects
    try:
        response = session.get(
            url,
            timeout=policy.timeout,
            headers={'User-Agent': policy.user_agent},
            stream=True,
            allow_redirects=True,
        )
        try:
            if response.status_code >= 400:
                return ArticleText(url, "", 'http_error', clock.timestamp(), http_status=response.status_code)
            payload = _read_capped(response, policy.max_bytes)
            content_type = response.headers.get('Content-Type', '')
        finally:
            response.close()
    except requests.Timeout as e:
        return ArticleText(url, "", 'timeout', clock.timestamp(), error=str(e))
    except requests.TooManyRedirects as e:
        return ArticleText(url, "", 'http_error', clock.timestamp(), error=f"too many redirects: {e}")
    except requests.RequestException as e:
        return ArticleText(url, "", 'timeout', clock.timestamp(), error=f"network failure: {e}")
    finally:
        if own_session:
            session.close()

    try:
        text = payload.decode(response.encoding or 'utf-8', errors='replace')
        body = extract_main_text(text) if 'html' in content_type or '<' in text[:512] else normalize_whitespace(text)
    except Exception as e:
        return ArticleText(url, "", 'parse_failed', clock.timestamp(), error=str(e))

    if not body:
        return ArticleText(url, "", 'parse_failed', clock.timestamp(), error="no text extracted")
    return ArticleText(url, body, 'ok', clock.timestamp(), http_status=response.status_code)


class _HostThrottle:
    """Per-host concurrency limit plus minimum spacing between requests."""

    def __init__(self, per_host_limit: int, min_interval: float):
        self.per_host_limit = max(1, per_host_limit)
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._semaphores: Dict[str, threading.BoundedSemaphore] = {}
        self._last: Dict[str, float] = {}

    def _semaphore(self, host: str) -> threading.BoundedSemaphore:
        with self._lock:
            if host not in self._semaphores:
                self._semaphores[host] = threading.BoundedSemaphore(self.per_host_limit)
            return self._semaphores[host]

    def run(self, host: str, func, *args, **kwargs):
        with self._semaphore(host):
            with self._lock:
                wait = self._last.get(host, 0.0) + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                return func(*args, **kwargs)
            finally:
                with self._lock:
                    self._last[host] = time.monotonic()


def fetch_corpus(
    urls: Iterable[str],
    policy: FetchPolicy,
    out_dir: Path,
    session: Optional[requests.Session] = None,
    clock: Optional[Clock] = None
) -> CorpusFetchResult:
    """
    Fetch every distinct URL once and persist the results.

    URLs already stored with a body are reused, not re-fetched. Fixture hits
    and offline misses never touch the network.

    Args:
        urls: Article URLs (typically subset.articles' document identifiers)
        policy: Fetch policy
        out_dir: Corpus directory
        session: Shared requests session (tests pass a fake)
        clock: Clock for fetched_at

    Returns:
        CorpusFetchResult with one ArticleText per distinct URL and status counts
    """
    from src.load.corpus_store import read_manifest, url_key, write_corpus

    clock = clock or Clock()
    out_dir = Path(out_dir)
    distinct = list(dict.fromkeys(urls))
    fixtures = load_fixture_index(policy.fixtures_dir)
    existing = read_manifest(out_dir)

    results: Dict[str, ArticleText] = {}
    pending = []
    for url in distinct:
        entry = existing.get(url)
        stored = out_dir / f"{url_key(url)}.txt"
        if entry and entry['status'] in ArticleText.BODY_STATUSES and stored.exists():
            results[url] = ArticleText(
                url, stored.read_text(encoding='utf-8'), entry['status'],
                entry.get('fetched_at') or "", entry.get('http_status'), entry.get('error'),
            )
        else:
            pending.append(url)

    reused = len(results)
    logger.info(f"Fetching {len(pending)} of {len(distinct)} articles ({reused} already stored)")

    throttle = _HostThrottle(policy.per_host_limit, policy.min_interval)

    def _task(url: str) -> ArticleText:
        if url in fixtures or policy.offline:
            return fetch_article(url, policy, session, fixtures, clock)
        host = urlparse(url).netloc.lower()
        return throttle.run(host, fetch_article, url, policy, session, fixtures, clock)

    with ThreadPoolExecutor(max_workers=max(1, policy.max_workers)) as pool:
        for url, text in zip(pending, pool.map(_task, pending)):
            results[url] = text
            if text.has_body:
                logger.debug(f"{text.status_label}: {url}")
            else:
                logger.warning(f"{text.status_label}: {url} ({text.error or 'no body'})")

    ordered = [results[url] for url in distinct]
    write_corpus(out_dir, [results[url] for url in pending])

    summary = dict(sorted(Counter(t.fetch_status for t in ordered).items()))
    logger.info(f"Corpus fetch complete: {summary}")
    return CorpusFetchResult(texts=ordered, summary=summary, reused=reused)
