"""
Per-method five-number summaries of similarity scores (box-plot statistics).

Quartiles follow Tukey's median-of-halves: the lower half is the values
below the overall median and the upper half those above it; for odd n the
median itself belongs to neither half.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.common.logging import setup_logger
from src.evaluate.scoring import EvalScore

logger = setup_logger(__name__)

QUARTILE_CONVENTION = "tukey-median-of-halves"
# Summary values are reported at this many decimals
PRECISION = 12


@dataclass
class MethodSummary:
    method: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    n: int

    def to_dict(self) -> Dict:
        return asdict(self)


def five_number_summary(values: Sequence[float]) -> tuple:
    """(min, q1, median, q3, max) of a non-empty sequence."""
    if not values:
        raise ValueError("five-number summary needs at least one value")
    x = np.sort(np.asarray(values, dtype=float))
    n = len(x)
    median = float(np.median(x))
    if n == 1:
        q1 = q3 = median
    else:
        q1 = float(np.median(x[:n // 2]))
        q3 = float(np.median(x[(n + 1) // 2:]))
    return tuple(round(v, PRECISION) for v in (float(x[0]), q1, median, q3, float(x[-1])))


def summarize(scores: Sequence[EvalScore], methods: Optional[Sequence[str]] = None) -> List[MethodSummary]:
    """
    Five-number summary per method.

    Args:
        scores: Scores from score_run
        methods: Methods to summarize, in output order (default: order of first appearance)

    Returns:
        MethodSummary list; methods without scores are omitted with a warning
    """
    grouped: Dict[str, List[float]] = {}
    for score in scores:
        grouped.setdefault(score.method, []).append(score.cosine_similarity)

    wanted = list(methods) if methods is not None else list(grouped)
    summaries = []
    for method in wanted:
        values = grouped.get(method)
        if not values:
            logger.warning(f"No scores for method '{method}'; omitted from summary")
            continue
        low, q1, median, q3, high = five_number_summary(values)
        summaries.append(MethodSummary(method, low, q1, median, q3, high, len(values)))
    return summaries
