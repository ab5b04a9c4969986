"""
Corpus Store - article bodies on disk, one text file per URL plus a manifest.

Layout:
    <corpus>/<sha256(url)[:16]>.txt
    <corpus>/manifest.yaml   (entries sorted by URL)
"""
import hashlib
from pathlib import Path
from typing import Dict, List, Sequence

from src.common.errors import IngestError
from src.common.logging import setup_logger
from src.common.state_store import read_yaml, write_yaml_atomic
from src.extract.article_fetch import ArticleText

logger = setup_logger(__name__)

CORPUS_FORMAT = "gdelt-corpus"
CORPUS_SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.yaml"


def url_key(url: str) -> str:
    """Stable file key for a URL."""
    return hashlib.sha256(url.encode('utf-8')).hexdigest()[:16]


def read_manifest(corpus_dir: Path) -> Dict[str, dict]:
    """Manifest entries keyed by URL; empty when the corpus does not exist yet."""
    path = Path(corpus_dir) / MANIFEST_NAME
    if not path.exists():
        return {}
    manifest = read_yaml(path) or {}
    if manifest.get('format') != CORPUS_FORMAT:
        raise IngestError("not a corpus directory", {'path': str(corpus_dir)})
    return {entry['url']: entry for entry in manifest.get('entries') or []}


def write_corpus(corpus_dir: Path, texts: Sequence[ArticleText]) -> Path:
    """
    Persist article texts and rewrite the manifest.

    Only entries with a body get a text file. Existing manifest entries for
    URLs not in ``texts`` are kept.
    """
    corpus_dir = Path(corpus_dir)
    corpus_dir.mkdir(parents=True, exist_ok=True)
    entries = read_manifest(corpus_dir)

    for text in texts:
        key = url_key(text.document_identifier)
        if text.body:
            (corpus_dir / f"{key}.txt").write_text(text.body, encoding='utf-8')
        entries[text.document_identifier] = {
            'url': text.document_identifier,
            'key': key,
            'status': text.fetch_status,
            'http_status': text.http_status,
            'fetched_at': text.fetched_at,
            'error': text.error,
        }

    manifest = {
        'format': CORPUS_FORMAT,
        'schema_version': CORPUS_SCHEMA_VERSION,
        'entries': [entries[url] for url in sorted(entries)],
    }
    path = corpus_dir / MANIFEST_NAME
    write_yaml_atomic(path, manifest)
    logger.info(f"Corpus manifest updated: {len(entries)} entries in {corpus_dir}")
    return path


def load_corpus(corpus_dir: Path, include_failed: bool = False) -> List[ArticleText]:
    """
    Read stored article texts, ordered by URL.

    Args:
        corpus_dir: Directory written by write_corpus
        include_failed: Also return entries without a body

    Returns:
        ArticleText list (ok + fixture entries unless include_failed)
    """
    corpus_dir = Path(corpus_dir)
    if not (corpus_dir / MANIFEST_NAME).exists():
        raise FileNotFoundError(f"Corpus manifest not found: {corpus_dir / MANIFEST_NAME}")

    texts = []
    for url, entry in sorted(read_manifest(corpus_dir).items()):
        body = ""
        if entry['status'] in ArticleText.BODY_STATUSES:
            path = corpus_dir / f"{entry['key']}.txt"
            if not path.exists():
                logger.warning(f"Missing corpus file for {url}: {path.name}")
                continue
            body = path.read_text(encoding='utf-8')
        elif not include_failed:
            continue
        texts.append(ArticleText(
            document_identifier=url,
            body=body,
            fetch_status=entry['status'],
            fetched_at=entry.get('fetched_at') or "",
            http_status=entry.get('http_status'),
            error=entry.get('error'),
        ))

    logger.info(f"Loaded {len(texts)} article texts from {corpus_dir}")
    return texts
