"""
State management for tracking pipeline runs and their timestamps
"""
import hashlib
import json
import os
import tempfile
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


class Clock:
    """
    Wall clock that can be pinned.

    A frozen clock always reports the Unix epoch and zero elapsed time, which is
    what makes stub-mode runs byte-reproducible.
    """

    def __init__(self, frozen: bool = False):
        self.frozen = frozen

    def now(self) -> datetime:
        if self.frozen:
            return EPOCH
        return datetime.now(timezone.utc)

    def timestamp(self) -> str:
        return self.now().strftime('%Y-%m-%dT%H:%M:%SZ')

    def elapsed(self, started: datetime) -> float:
        if self.frozen:
            return 0.0
        return round((self.now() - started).total_seconds(), 3)


def generate_run_id(clock: Optional[Clock] = None, content: Optional[Any] = None) -> str:
    """
    Generate a unique run ID for tracking pipeline runs.

    With a frozen clock the id is derived from ``content`` (any JSON-serialisable
    description of the run) so identical runs get identical ids.
    """
    if clock is not None and clock.frozen:
        digest = hashlib.sha256(
            json.dumps(content, sort_keys=True, default=str).encode('utf-8')
        ).hexdigest()
        return f"run_{digest[:12]}"
    return f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}_{uuid.uuid4().hex[:8]}"


def create_run_metadata(
    run_id: str,
    stage: str,
    clock: Clock,
    status: str = "started",
    records: int = 0,
    error_message: Optional[str] = None,
    **extra: Any
) -> Dict[str, Any]:
    """
    Create metadata record for a pipeline run.

    Args:
        run_id: Identifier from generate_run_id
        stage: Pipeline stage name (ingest, fetch, bench, ...)
        clock: Clock used for the timestamp
        status: Run status (started, completed, failed)
        records: Number of records produced
        error_message: Error message if status is failed

    Returns:
        Dictionary with run metadata
    """
    metadata = {
        'run_id': run_id,
        'stage': stage,
        'run_timestamp': clock.timestamp(),
        'status': status,
        'records': records,
        'error_message': error_message,
    }
    metadata.update(extra)
    return metadata


def write_bytes_atomic(path: Path, data: bytes) -> None:
    """Write via a temp file + rename so readers never see half a file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp_name, path)
    except Exception:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def write_yaml_atomic(path: Path, payload: Any) -> None:
    text = yaml.safe_dump(payload, sort_keys=False, allow_unicode=True)
    write_bytes_atomic(path, text.encode('utf-8'))


def read_yaml(path: Path) -> Any:
    """Read a YAML document, raising FileNotFoundError with the path if it is missing."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f)
