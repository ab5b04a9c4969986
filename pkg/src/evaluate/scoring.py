"""
Answer scoring: cosine similarity between embeddings of each predicted
answer and its ground truth.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.common.errors import (
    ConfigurationError,
    DimensionMismatchError,
    PipelineError,
    UndefinedSimilarityError,
)
from src.common.logging import setup_logger
from src.common.state_store import read_yaml
from src.llm.clients import EmbeddingClient, with_retries
from src.qa.pipeline import QAResult

logger = setup_logger(__name__)


@dataclass(frozen=True)
class GroundTruth:
    question_id: str
    answer: str


@dataclass
class EvalScore:
    question_id: str
    method: str
    cosine_similarity: float
    embedder_id: str
    refusal: bool = False


@dataclass
class MissingScore:
    question_id: str
    method: str
    reason: str     # error_result | no_ground_truth | embedding_failed | undefined_similarity
    detail: Optional[str] = None


@dataclass
class ScoreReport:
    embedder_id: str
    scores: List[EvalScore] = field(default_factory=list)
    missing: List[MissingScore] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'embedder_id': self.embedder_id,
            'scores': [asdict(s) for s in self.scores],
            'missing': [asdict(m) for m in self.missing],
        }


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """
    dot(a, b) / (|a| |b|), clipped to [-1, 1].

    Raises:
        DimensionMismatchError: vectors differ in length
        UndefinedSimilarityError: either vector is all zeros
    """
    va = np.asarray(a, dtype=float)
    vb = np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"cannot compare dim {va.size} with dim {vb.size}")
    norm_a = np.linalg.norm(va)
    norm_b = np.linalg.norm(vb)
    if norm_a == 0 or norm_b == 0:
        raise UndefinedSimilarityError("undefined similarity")
    return float(np.clip(np.dot(va, vb) / (norm_a * norm_b), -1.0, 1.0))


def load_ground_truth(path: Path) -> List[GroundTruth]:
    """Read `answers: {question_id: text}`."""
    raw = read_yaml(path) or {}
    answers = raw.get('answers')
    if not isinstance(answers, dict):
        raise ConfigurationError("ground truth file needs an `answers` mapping", {'path': str(path)})
    truths = [GroundTruth(str(qid), str(text).strip()) for qid, text in answers.items()]
    logger.info(f"Loaded {len(truths)} ground-truth answers from {path}")
    return truths


def is_refusal(answer: str, patterns: Sequence[str]) -> bool:
    text = answer.casefold().replace('’', "'")
    return any(p.casefold() in text for p in patterns if p)


def _embed_all(texts: List[str], embed_client: EmbeddingClient, batch_size: int,
               retries: int, max_workers: int, backoff: float) -> Dict[str, object]:
    """Embed distinct texts; failed batches map their texts to the error."""
    batches = [texts[i:i + batch_size] for i in range(0, len(texts), batch_size)]

    def _run(batch: List[str]):
        try:
            return batch, with_retries(lambda: embed_client.embed(batch), retries, "evaluation embedding", backoff)
        except PipelineError as e:
            logger.error(f"Evaluation embedding failed for {len(batch)} texts: {e.describe()}")
            return batch, e

    vectors: Dict[str, object] = {}
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        for batch, outcome in pool.map(_run, batches):
            for i, text in enumerate(batch):
                vectors[text] = outcome if isinstance(outcome, PipelineError) else outcome[i]
    return vectors


def score_run(
    results: Sequence[QAResult],
    truths: Sequence[GroundTruth],
    embed_client: EmbeddingClient,
    refusal_patterns: Sequence[str] = (),
    batch_size: int = 32,
    retries: int = 2,
    max_workers: int = 4,
    backoff: float = 1.0
) -> ScoreReport:
    """
    Score each result against its question's ground truth.

    Error results, results without a ground truth and pairs that cannot be
    embedded or compared become missing entries, never zero scores, so
    len(scores) + len(missing) == len(results).

    Args:
        results: Benchmark and/or imported results
        truths: Ground truth per question id
        embed_client: Evaluation embedder
        refusal_patterns: Case-insensitive phrases that mark a non-answer

    Returns:
        ScoreReport in result order
    """
    truth_by_id = {t.question_id: t.answer for t in truths}
    report = ScoreReport(embedder_id=embed_client.embedder_id)

    scorable = []
    for result in results:
        if not result.ok:
            report.missing.append(MissingScore(result.question_id, result.method, 'error_result', result.error))
        elif result.question_id not in truth_by_id:
            report.missing.append(MissingScore(result.question_id, result.method, 'no_ground_truth'))
        else:
            scorable.append(result)

    texts = list(dict.fromkeys(
        text for r in scorable for text in (r.answer, truth_by_id[r.question_id])
    ))
    vectors = _embed_all(texts, embed_client, max(1, batch_size), retries, max_workers, backoff) if texts else {}

    for result in scorable:
        predicted = vectors[result.answer]
        truth = vectors[truth_by_id[result.question_id]]
        failure = predicted if isinstance(predicted, PipelineError) else truth
        if isinstance(failure, PipelineError):
            report.missing.append(MissingScore(result.question_id, result.method, 'embedding_failed', failure.message))
            continue
        try:
            similarity = cosine_similarity(predicted, truth)
        except (UndefinedSimilarityError, DimensionMismatchError) as e:
            report.missing.append(MissingScore(result.question_id, result.method, 'undefined_similarity', e.message))
            continue
        report.scores.append(EvalScore(
            question_id=result.question_id,
            method=result.method,
            cosine_similarity=similarity,
            embedder_id=embed_client.embedder_id,
            refusal=is_refusal(result.answer, refusal_patterns),
        ))

    order = {(r.question_id, r.method): i for i, r in enumerate(results)}
    report.missing.sort(key=lambda m: order.get((m.question_id, m.method), len(order)))
    logger.info(f"Scored {len(report.scores)} of {len(results)} results ({len(report.missing)} missing)")
    return report
