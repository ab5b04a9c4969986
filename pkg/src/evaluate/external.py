"""
Import answers produced by external QA systems so they can be scored
alongside the built-in routes.

File schema (YAML):

    format: gdelt-kgqa-external-answers
    version: 1
    answers:
      - {question_id: ..., method: ..., answer: ...}

Each (question_id, method) pair may appear once. Imported results get the
method name ``imported:<method>``.
"""
from pathlib import Path
from typing import List

from src.common.errors import ExternalAnswerSchemaError
from src.common.logging import setup_logger
from src.common.state_store import read_yaml
from src.qa.pipeline import IMPORTED_PREFIX, QAResult

logger = setup_logger(__name__)

EXTERNAL_FORMAT = "gdelt-kgqa-external-answers"
EXTERNAL_VERSION = 1
REQUIRED_KEYS = ('question_id', 'method', 'answer')


def import_external_answers(path: Path) -> List[QAResult]:
    path = Path(path)
    raw = read_yaml(path)
    if raw is None:
        logger.info(f"{path} is empty; nothing imported")
        return []
    if not isinstance(raw, dict):
        raise ExternalAnswerSchemaError("document must be a mapping", {'path': str(path)})
    if raw.get('format') != EXTERNAL_FORMAT or raw.get('version') != EXTERNAL_VERSION:
        raise ExternalAnswerSchemaError(
            f"expected format {EXTERNAL_FORMAT} version {EXTERNAL_VERSION}",
            {'path': str(path), 'format': raw.get('format'), 'version': raw.get('version')}
        )

    records = raw.get('answers') or []
    if not isinstance(records, list):
        raise ExternalAnswerSchemaError("`answers` must be a list", {'path': str(path)})

    results: List[QAResult] = []
    seen = set()
    for i, record in enumerate(records):
        if not isinstance(record, dict):
            raise ExternalAnswerSchemaError(f"record #{i} is not a mapping", {'path': str(path), 'record': i})
        missing = [k for k in REQUIRED_KEYS if record.get(k) in (None, '')]
        if missing:
            raise ExternalAnswerSchemaError(
                f"record #{i} is missing {', '.join(missing)}", {'path': str(path), 'record': i}
            )
        key = (str(record['question_id']), str(record['method']))
        if key in seen:
            raise ExternalAnswerSchemaError(
                f"record #{i} duplicates ({key[0]}, {key[1]})", {'path': str(path), 'record': i}
            )
        seen.add(key)
        results.append(QAResult(
            question_id=key[0],
            method=f"{IMPORTED_PREFIX}{key[1]}",
            prompt="",
            answer=str(record['answer']).strip(),
            context_size=0,
            model=str(record.get('model') or key[1]),
        ))

    logger.info(f"Imported {len(results)} external answers from {path}")
    return results
