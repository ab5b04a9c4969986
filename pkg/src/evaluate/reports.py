"""
Evaluation Report Writer
Renders method summaries and per-cell scores as a text table, CSV, JSON or
an SVG box plot. Output is byte-stable for identical inputs.
"""
import io
import json
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import matplotlib
import pandas as pd
from matplotlib.figure import Figure

from src.common.errors import ReportWriteError
from src.common.logging import setup_logger
from src.common.state_store import write_bytes_atomic
from src.evaluate.scoring import EvalScore
from src.evaluate.summary import QUARTILE_CONVENTION, MethodSummary

logger = setup_logger(__name__)

REPORT_FORMATS = ('table_text', 'csv', 'json', 'boxplot_svg')
FILE_NAMES = {
    'table_text': 'report.txt',
    'csv': 'scores.csv',
    'json': 'report.json',
    'boxplot_svg': 'boxplot.svg',
}
SCORE_COLUMNS = ['question_id', 'method', 'cosine_similarity', 'embedder_id', 'refusal']

# Pinned so repeated renders produce identical SVG bytes
SVG_RC = {
    'svg.hashsalt': 'gdelt-kgqa',
    'svg.fonttype': 'none',
    'figure.dpi': 100,
}


def _scores_frame(scores: Sequence[EvalScore]) -> pd.DataFrame:
    return pd.DataFrame(
        [{c: getattr(s, c) for c in SCORE_COLUMNS} for s in scores], columns=SCORE_COLUMNS
    )


def render_table_text(summaries: Sequence[MethodSummary], scores: Sequence[EvalScore]) -> bytes:
    summary_frame = pd.DataFrame([s.to_dict() for s in summaries])
    lines = [
        f"Cosine similarity by method (quartiles: {QUARTILE_CONVENTION})",
        summary_frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"),
        "",
    ]
    if scores:
        grid = _scores_frame(scores).pivot_table(
            index='question_id', columns='method', values='cosine_similarity', aggfunc='first', sort=False
        )
        lines += ["Scores per question", grid.to_string(float_format=lambda v: f"{v:.4f}", na_rep="-"), ""]
    return "\n".join(lines).encode('utf-8')


def render_csv(summaries: Sequence[MethodSummary], scores: Sequence[EvalScore]) -> bytes:
    frame = _scores_frame(scores)
    return frame.to_csv(index=False, lineterminator='\n', float_format='%.6f').encode('utf-8')


def render_json(summaries: Sequence[MethodSummary], scores: Sequence[EvalScore]) -> bytes:
    document = {
        'quartile_convention': QUARTILE_CONVENTION,
        'summaries': [s.to_dict() for s in summaries],
        'scores': [{c: getattr(s, c) for c in SCORE_COLUMNS} for s in scores],
    }
    return (json.dumps(document, sort_keys=True, indent=2) + "\n").encode('utf-8')


def render_boxplot_svg(summaries: Sequence[MethodSummary], scores: Sequence[EvalScore]) -> bytes:
    """One box per method drawn from its five-number summary (whiskers at min/max)."""
    stats = [
        {'label': s.method, 'whislo': s.min, 'q1': s.q1, 'med': s.median, 'q3': s.q3, 'whishi': s.max, 'fliers': []}
        for s in summaries
    ]
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(max(4.0, 1.6 * len(stats)), 4.0))
        ax = fig.subplots()
        ax.bxp(stats, showfliers=False)
        ax.set_xlabel("method")
        ax.set_ylabel("cosine similarity")
        ax.set_title("Answer similarity to ground truth")
        fig.tight_layout()
        buffer = io.BytesIO()
        fig.savefig(buffer, format='svg', metadata={'Date': None})
    return buffer.getvalue()


RENDERERS: Dict[str, Callable[[Sequence[MethodSummary], Sequence[EvalScore]], bytes]] = {
    'table_text': render_table_text,
    'csv': render_csv,
    'json': render_json,
    'boxplot_svg': render_boxplot_svg,
}


def emit_report(
    summaries: Sequence[MethodSummary],
    scores: Sequence[EvalScore],
    path: Path,
    fmt: str
) -> Path:
    """
    Write one report file.

    Args:
        summaries: Output of summarize (must be non-empty)
        scores: Per-cell scores
        path: Target file
        fmt: One of REPORT_FORMATS

    Returns:
        The written path
    """
    if fmt not in RENDERERS:
        raise ValueError(f"Unknown report format: {fmt} (choose from {', '.join(REPORT_FORMATS)})")
    if not summaries:
        raise ReportWriteError("no method summaries to report", {'format': fmt})

    payload = RENDERERS[fmt](summaries, scores)
    path = Path(path)
    try:
        write_bytes_atomic(path, payload)
    except OSError as e:
        logger.error(f"Failed to write {fmt} report to {path}: {e}")
        raise ReportWriteError(f"cannot write report: {e}", {'path': str(path)}) from e

    logger.info(f"Wrote {fmt} report to {path}")
    return path


def emit_reports(
    summaries: Sequence[MethodSummary],
    scores: Sequence[EvalScore],
    out_dir: Path,
    formats: Sequence[str]
) -> List[Path]:
    """Write each requested format under out_dir with its default file name."""
    return [emit_report(summaries, scores, Path(out_dir) / FILE_NAMES.get(fmt, f"report.{fmt}"), fmt) for fmt in formats]
