"""
GDELT 2.0 dump helper.
Lists the 15-minute export/mentions/GKG archives covering a time window and
downloads + unzips them. No polling or scheduling: callers name the window.
"""
import io
import zipfile
from datetime import datetime, timedelta
from pathlib import Path
from typing import List, Optional, Tuple

import requests

from src.common.errors import IngestError
from src.common.logging import setup_logger

logger = setup_logger(__name__)

BASE_URL = "http://data.gdeltproject.org/gdeltv2"
SLOT = timedelta(minutes=15)

# Archive suffix per table
DUMP_SUFFIXES = {
    'events': 'export.CSV.zip',
    'mentions': 'mentions.CSV.zip',
    'gkg': 'gkg.csv.zip',
}


def parse_timestamp(value: str) -> datetime:
    """Accept YYYYMMDDHHMMSS, YYYYMMDDHHMM or ISO-8601 text."""
    value = value.strip()
    for fmt in ('%Y%m%d%H%M%S', '%Y%m%d%H%M', '%Y%m%d'):
        try:
            return datetime.strptime(value, fmt)
        except ValueError:
            continue
    try:
        return datetime.fromisoformat(value)
    except ValueError:
        raise ValueError(f"Unrecognised timestamp: {value!r}")


def _floor_to_slot(moment: datetime) -> datetime:
    return moment.replace(minute=moment.minute - moment.minute % 15, second=0, microsecond=0)


def dump_urls(start: datetime, end: datetime, tables: Tuple[str, ...] = ('events', 'mentions', 'gkg')) -> List[Tuple[str, str]]:
    """
    List the dump archives for every 15-minute slot in [start, end].

    Args:
        start: Window start (UTC, as GDELT publishes)
        end: Window end, inclusive
        tables: Which tables to list

    Returns:
        (table, url) pairs ordered by slot, then by table
    """
    if end < start:
        raise ValueError(f"Window end {end} is before start {start}")

    unknown = [t for t in tables if t not in DUMP_SUFFIXES]
    if unknown:
        raise ValueError(f"Unknown GDELT tables: {unknown}")

    urls = []
    slot = _floor_to_slot(start)
    while slot <= end:
        stamp = slot.strftime('%Y%m%d%H%M%S')
        for table in tables:
            urls.append((table, f"{BASE_URL}/{stamp}.{DUMP_SUFFIXES[table]}"))
        slot += SLOT

    logger.info(f"Window {start} - {end} covers {len(urls)} dump archives")
    return urls


def download_dump(
    url: str,
    out_dir: Path,
    session: Optional[requests.Session] = None,
    timeout: float = 60.0
) -> Path:
    """
    Download one dump archive and extract its tab-delimited member.

    Args:
        url: Archive URL from dump_urls
        out_dir: Directory for the extracted file
        session: Optional requests session (tests pass a fake)
        timeout: Request timeout in seconds

    Returns:
        Path of the extracted file (skips the download if it already exists)
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    target = out_dir / url.rsplit('/', 1)[-1].removesuffix('.zip')
    if target.exists():
        logger.info(f"Already downloaded: {target.name}")
        return target

    session = session or requests.Session()
    logger.info(f"Downloading {url}")
    try:
        response = session.get(url, timeout=timeout)
        response.raise_for_status()
    except requests.RequestException as e:
        logger.error(f"Download failed for {url}: {e}")
        raise IngestError(f"download failed: {e}", {'url': url}) from e

    try:
        with zipfile.ZipFile(io.BytesIO(response.content)) as archive:
            members = [m for m in archive.namelist() if not m.endswith('/')]
            if not members:
                raise IngestError("archive is empty", {'url': url})
            target.write_bytes(archive.read(members[0]))
    except zipfile.BadZipFile as e:
        raise IngestError(f"not a zip archive: {e}", {'url': url}) from e

    logger.info(f"Extracted {target.name} ({target.stat().st_size} bytes)")
    return target
