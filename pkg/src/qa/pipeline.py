"""
QA Pipeline
Answers questions through the graph-query, vector-RAG and direct routes and
runs the question x method benchmark grid, persisting one record per cell.
"""
import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from src.common.errors import ConfigurationError, PipelineError
from src.common.logging import setup_logger
from src.common.state_store import Clock, create_run_metadata, generate_run_id, read_yaml, write_yaml_atomic
from src.graph.knowledge_graph import KnowledgeGraph
from src.graph.query import Subgraph, keyword_edge_search
from src.graph.storage import graph_to_bytes
from src.llm.clients import ChatClient, EmbeddingClient, with_retries
from src.qa.prompts import (
    Prompt,
    build_direct_prompt,
    build_graph_prompt,
    build_rag_prompt,
    parse_chunk_ref,
)
from src.qa.questions import Question, check_question_id
from src.retrieval.vector_store import VectorStore, nearest_chunks, store_to_bytes

logger = setup_logger(__name__)

METHODS = ('graph_query', 'vector_rag', 'direct_llm')
DEFAULT_METHODS = ('graph_query', 'vector_rag')
IMPORTED_PREFIX = "imported:"
RUN_FORMAT = "gdelt-kgqa-run"
RESULTS_DIR = "results"


@dataclass
class QAResult:
    question_id: str
    method: str
    prompt: str
    answer: str
    context_size: int
    model: str
    status: str = "ok"              # ok | error
    error: Optional[str] = None
    truncated: bool = False
    empty_context: bool = False
    elapsed_seconds: float = 0.0
    context_refs: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QAResult":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        known['context_refs'] = list(known.get('context_refs') or [])
        return cls(**known)


@dataclass
class Resources:
    """What the routes need; each route checks for its own pieces."""
    chat: ChatClient
    kg: Optional[KnowledgeGraph] = None
    store: Optional[VectorStore] = None
    embedder: Optional[EmbeddingClient] = None
    k: int = 5
    max_sentences: int = 500
    max_chunks: int = 20
    retries: int = 2
    backoff: float = 1.0

    def fingerprint(self) -> Dict[str, Any]:
        """Content digests of the graph and store, for run manifests."""
        digests: Dict[str, Any] = {}
        if self.kg is not None:
            digests['kg_sha256'] = hashlib.sha256(graph_to_bytes(self.kg)).hexdigest()
        if self.store is not None:
            digests['store_sha256'] = hashlib.sha256(store_to_bytes(self.store)).hexdigest()
        return digests


@dataclass
class BenchmarkRun:
    run_id: str
    results: List[QAResult]
    run_dir: Optional[Path] = None


def _graph_prompt(question: Question, resources: Resources) -> Prompt:
    if resources.kg is None:
        raise ConfigurationError("graph_query needs a knowledge graph", {'question': question.id})
    subgraph = keyword_edge_search(resources.kg, question.keywords)
    return build_graph_prompt(question.text, subgraph, resources.max_sentences)


def _rag_prompt(question: Question, resources: Resources) -> Prompt:
    if resources.store is None or resources.embedder is None:
        raise ConfigurationError("vector_rag needs a vector store and embedder", {'question': question.id})
    if resources.k < 1:
        return build_rag_prompt(question.text, [])
    ranked = with_retries(
        lambda: nearest_chunks(resources.store, question.text, resources.k, resources.embedder),
        resources.retries, f"retrieval for {question.id}", resources.backoff
    )
    return build_rag_prompt(question.text, [chunk for chunk, _ in ranked], resources.max_chunks)


PROMPT_BUILDERS = {
    'graph_query': _graph_prompt,
    'vector_rag': _rag_prompt,
    'direct_llm': lambda question, resources: build_direct_prompt(question.text),
}


def answer(question: Question, method: str, resources: Resources, clock: Optional[Clock] = None) -> QAResult:
    """
    Answer one question with one method.

    Failures (missing resources, empty store, endpoint errors after retries,
    or anything else raised inside the cell) come back as an error QAResult
    carrying the cause; no answer is invented.
    """
    if method not in PROMPT_BUILDERS:
        raise ConfigurationError(f"unknown method '{method}'", {'choices': ', '.join(METHODS)})

    clock = clock or Clock()
    started = clock.now()
    prompt = None
    try:
        prompt = PROMPT_BUILDERS[method](question, resources)
        if prompt.truncated:
            logger.warning(f"{question.id}/{method}: context truncated to {prompt.context_size} items")
        text = with_retries(
            lambda: resources.chat.complete(prompt.text),
            resources.retries, f"chat completion for {question.id}/{method}", resources.backoff
        )
    except Exception as e:
        cause = e.describe() if isinstance(e, PipelineError) else f"{type(e).__name__}: {e}"
        logger.error(f"{question.id}/{method} failed: {cause}")
        return QAResult(
            question_id=question.id,
            method=method,
            prompt=prompt.text if prompt else "",
            answer="",
            context_size=prompt.context_size if prompt else 0,
            model=resources.chat.model,
            status="error",
            error=cause,
            truncated=prompt.truncated if prompt else False,
            empty_context=prompt.empty_context if prompt else False,
            elapsed_seconds=clock.elapsed(started),
            context_refs=list(prompt.context_refs) if prompt else [],
        )

    return QAResult(
        question_id=question.id,
        method=method,
        prompt=prompt.text,
        answer=text,
        context_size=prompt.context_size,
        model=resources.chat.model,
        truncated=prompt.truncated,
        empty_context=prompt.empty_context,
        elapsed_seconds=clock.elapsed(started),
        context_refs=list(prompt.context_refs),
    )


def rederive_prompt(result: QAResult, question: Question, resources: Resources) -> str:
    """Rebuild a result's prompt from its stored context references."""
    if result.method == 'graph_query':
        subgraph = Subgraph(resources.kg, tuple(int(ref) for ref in result.context_refs))
        return build_graph_prompt(question.text, subgraph, max_sentences=None).text
    if result.method == 'vector_rag':
        by_ref = {e.chunk.sort_key(): e.chunk for e in resources.store.entries}
        chunks = [by_ref[parse_chunk_ref(ref)] for ref in result.context_refs]
        return build_rag_prompt(question.text, chunks, max_chunks=None).text
    if result.method == 'direct_llm':
        return build_direct_prompt(question.text).text
    raise ConfigurationError(f"prompts of method '{result.method}' cannot be re-derived")


def cell_filename(question_id: str, method: str) -> str:
    check_question_id(question_id)
    safe_method = re.sub(r'[^A-Za-z0-9_.-]', '_', method)
    return f"{question_id}__{safe_method}.yaml"


def run_benchmark(
    questions: Sequence[Question],
    methods: Sequence[str],
    resources: Resources,
    out_dir: Optional[Path] = None,
    clock: Optional[Clock] = None,
    config_snapshot: Optional[Dict[str, Any]] = None,
    max_workers: int = 1
) -> BenchmarkRun:
    """
    Run every (question, method) cell.

    Args:
        questions: Question set
        methods: Methods to run (see METHODS)
        resources: Clients, graph, store and caps
        out_dir: Parent directory for the run directory; None keeps results in memory
        clock: Clock (frozen in stub mode for reproducible runs)
        config_snapshot: Configuration recorded in the manifest
        max_workers: Concurrent cells

    Returns:
        BenchmarkRun with results in question-then-method order
    """
    clock = clock or Clock()
    for method in methods:
        if method not in PROMPT_BUILDERS:
            raise ConfigurationError(f"unknown method '{method}'", {'choices': ', '.join(METHODS)})
    for question in questions:
        check_question_id(question.id)

    description = {
        'questions': [asdict(q) for q in questions],
        'methods': list(methods),
        'inputs': resources.fingerprint(),
        'config': config_snapshot or {},
    }
    run_id = generate_run_id(clock, description)
    run_dir = Path(out_dir) / run_id if out_dir is not None else None
    cells = [(q, m) for q in questions for m in methods]
    logger.info(f"Run {run_id}: {len(questions)} questions x {len(methods)} methods = {len(cells)} cells")

    def _cell(cell) -> QAResult:
        question, method = cell
        result = answer(question, method, resources, clock)
        if run_dir is not None:
            write_yaml_atomic(run_dir / RESULTS_DIR / cell_filename(question.id, method), result.to_dict())
        return result

    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
        results = list(pool.map(_cell, cells))

    errors = sum(1 for r in results if not r.ok)
    if run_dir is not None:
        manifest = create_run_metadata(
            run_id, 'bench', clock,
            status='completed' if not errors else 'completed_with_errors',
            records=len(results),
            format=RUN_FORMAT,
            models={'chat': resources.chat.model,
                    'retrieval_embedder': resources.embedder.embedder_id if resources.embedder else None},
            methods=list(methods),
            questions=[q.id for q in questions],
            inputs=description['inputs'],
            caps={'k': resources.k, 'max_sentences': resources.max_sentences, 'max_chunks': resources.max_chunks},
            config=description['config'],
            cells=[{'question_id': r.question_id, 'method': r.method, 'status': r.status,
                    'file': f"{RESULTS_DIR}/{cell_filename(r.question_id, r.method)}"} for r in results],
            errors=errors,
        )
        write_yaml_atomic(run_dir / "manifest.yaml", manifest)
        logger.info(f"Run written to {run_dir}")

    if errors:
        logger.warning(f"Run {run_id}: {errors} of {len(results)} cells failed")
    return BenchmarkRun(run_id=run_id, results=results, run_dir=run_dir)


def load_run(run_dir: Path) -> List[QAResult]:
    """Read a run's results in manifest order."""
    run_dir = Path(run_dir)
    manifest = read_yaml(run_dir / "manifest.yaml") or {}
    if manifest.get('format') != RUN_FORMAT:
        raise ConfigurationError("not a benchmark run directory", {'path': str(run_dir)})
    results = [QAResult.from_dict(read_yaml(run_dir / cell['file'])) for cell in manifest.get('cells') or []]
    logger.info(f"Loaded {len(results)} results from run {manifest.get('run_id')}")
    return results
