"""
Standalone script to run the whole GDELT KG-QA pipeline on the bundled sample.
Can be run outside of Airflow for testing or manual execution; uses the stub
model clients unless --live is given.
"""
import argparse
import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.common.config import load_config
from src.common.logging import setup_logger
from src.common.state_store import Clock
from src.evaluate.external import import_external_answers
from src.evaluate.reports import REPORT_FORMATS, emit_reports
from src.evaluate.scoring import load_ground_truth, score_run
from src.evaluate.summary import summarize
from src.extract.article_fetch import FetchPolicy, fetch_corpus
from src.extract.gdelt_tables import parse_tables
from src.graph.builder import build_dkg, graph_stats, load_facts
from src.graph.storage import save_graph
from src.llm.clients import make_clients
from src.load.corpus_store import load_corpus
from src.load.subset_store import save_subset
from src.qa.pipeline import METHODS, Resources, run_benchmark
from src.qa.questions import load_questions
from src.retrieval.vector_store import build_store, save_store
from src.transform.subset_filter import KeywordFilter, filter_subset

logger = setup_logger(__name__)

SAMPLE_DIR = project_root / "data" / "sample"


def banner(title):
    logger.info("=" * 60)
    logger.info(title)
    logger.info("=" * 60)


def main():
    parser = argparse.ArgumentParser(description="Run every pipeline stage on the bundled sample")
    parser.add_argument('--out', type=Path, default=project_root / "data" / "output")
    parser.add_argument('--live', action='store_true', help="use the configured endpoints instead of stubs")
    args = parser.parse_args()

    config = load_config(overrides={'stub': not args.live})
    clock = Clock(frozen=config.stub)
    out = args.out
    chat, embedder, eval_embedder = make_clients(config)

    banner("INGESTING GDELT SAMPLE")
    parsed = parse_tables(
        [SAMPLE_DIR / "events.export.CSV"],
        [SAMPLE_DIR / "events.mentions.CSV"],
        [SAMPLE_DIR / "20240326.gkg.csv"],
    )
    subset = filter_subset(
        parsed.events.records, parsed.mentions.records, parsed.articles.records,
        KeywordFilter(config.filter.keywords),
    )
    save_subset(subset, out / "subset")
    logger.info(f"✓ Subset: {len(subset.events)} events, {len(subset.mentions)} mentions, "
                f"{len(subset.articles)} articles")

    banner("FETCHING ARTICLE TEXT")
    policy = FetchPolicy.from_settings(config.fetch, fixtures_dir=SAMPLE_DIR / "html", offline=config.stub)
    fetched = fetch_corpus([a.document_identifier for a in subset.articles], policy, out / "corpus", clock=clock)
    logger.info(f"✓ Fetch statuses: {fetched.summary}")

    banner("BUILDING KNOWLEDGE GRAPH")
    kg = build_dkg(subset, facts=load_facts(SAMPLE_DIR / "facts.yaml"))
    save_graph(kg, out / "kg.json")
    stats = graph_stats(kg)
    logger.info(f"✓ DKG: {stats['nodes']} nodes, {stats['edges']} edges")

    banner("INDEXING ARTICLES")
    store = build_store(load_corpus(out / "corpus"), embedder, chunk_tokens=config.caps.chunk_tokens,
                        retries=config.retries, max_workers=config.max_workers)
    save_store(store, out / "store.json")
    logger.info(f"✓ Vector store: {len(store)} chunks (dim {store.dim})")

    banner("RUNNING BENCHMARK")
    resources = Resources(chat=chat, kg=kg, store=store, embedder=embedder, k=config.caps.k,
                          max_sentences=config.caps.max_sentences, max_chunks=config.caps.max_chunks,
                          retries=config.retries)
    run = run_benchmark(load_questions(config.paths.questions), list(METHODS), resources, out / "runs", clock,
                        config_snapshot=config.to_manifest())
    failed = [r for r in run.results if not r.ok]
    logger.info(f"✓ Run {run.run_id}: {len(run.results)} cells, {len(failed)} failed")

    banner("SCORING ANSWERS")
    results = run.results + import_external_answers(config.paths.external_answers)
    report = score_run(results, load_ground_truth(config.paths.ground_truth), eval_embedder,
                       config.refusal_patterns, retries=config.retries)
    summaries = summarize(report.scores, list(dict.fromkeys(r.method for r in results)))
    for summary in summaries:
        logger.info(f"  {summary.method:<30} median {summary.median:.3f}  (n={summary.n})")
    emit_reports(summaries, report.scores, out / "reports", REPORT_FORMATS)
    logger.info(f"✓ Reports written to {out / 'reports'}")

    if failed or report.missing:
        logger.warning(f"✗ {len(failed)} failed cells, {len(report.missing)} unscored answers")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
