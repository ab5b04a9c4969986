"""
Question Set Reader
Loads benchmark questions (id, text, graph-route keywords) from YAML.
"""
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.common.errors import ConfigurationError
from src.common.logging import setup_logger
from src.common.state_store import read_yaml

logger = setup_logger(__name__)

QUESTIONS_VERSION = 1

# ids name the per-cell result files of a run
QUESTION_ID_PATTERN = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.-]*")


@dataclass(frozen=True)
class Question:
    id: str
    text: str
    keywords: List[str] = field(default_factory=list, hash=False)


def check_question_id(question_id: str, context: Optional[Dict[str, Any]] = None) -> str:
    """Reject ids that cannot be used as a file name inside a run directory."""
    if not QUESTION_ID_PATTERN.fullmatch(question_id) or '..' in question_id:
        raise ConfigurationError(
            f"question id '{question_id}' may only contain letters, digits, '_', '-' and single dots",
            context,
        )
    return question_id


def load_questions(path: Path) -> List[Question]:
    """
    Read a question set.

    Args:
        path: YAML file with `version` and a `questions` list

    Returns:
        Questions in file order
    """
    raw = read_yaml(path) or {}
    if raw.get('version', QUESTIONS_VERSION) != QUESTIONS_VERSION:
        raise ConfigurationError(f"unsupported question set version {raw.get('version')}", {'path': str(path)})

    questions: List[Question] = []
    seen = set()
    for i, entry in enumerate(raw.get('questions') or []):
        if not isinstance(entry, dict) or not entry.get('id') or not entry.get('text'):
            raise ConfigurationError(f"question #{i} needs an id and text", {'path': str(path)})
        question_id = str(entry['id'])
        check_question_id(question_id, {'path': str(path)})
        if question_id in seen:
            raise ConfigurationError(f"duplicate question id '{question_id}'", {'path': str(path)})
        seen.add(question_id)
        keywords = [str(k) for k in entry.get('keywords') or []]
        questions.append(Question(question_id, str(entry['text']).strip(), keywords))

    logger.info(f"Loaded {len(questions)} questions from {path}")
    return questions
