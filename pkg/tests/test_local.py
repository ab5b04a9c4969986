"""
Test script for local development
Run this to verify all components work in stub mode before deploying to Airflow.
"""
import sys
import os
import tempfile
from pathlib import Path

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.common.config import PROJECT_ROOT, load_config
from src.common.logging import setup_logger
from src.common.state_store import Clock
from src.evaluate.scoring import load_ground_truth, score_run
from src.evaluate.summary import summarize
from src.extract.article_fetch import FetchPolicy, fetch_corpus
from src.extract.gdelt_tables import parse_tables
from src.graph.builder import build_dkg, graph_stats, load_facts
from src.llm.clients import make_clients
from src.load.corpus_store import load_corpus
from src.qa.pipeline import Resources, run_benchmark
from src.qa.questions import load_questions
from src.retrieval.vector_store import build_store
from src.transform.subset_filter import KeywordFilter, filter_subset

logger = setup_logger(__name__)

SAMPLE_DIR = PROJECT_ROOT / "data" / "sample"


def check_config():
    """Check the pipeline config loads in stub mode."""
    logger.info("\n=== Checking Configuration ===")
    try:
        config = load_config(env={}, overrides={'stub': True})
        logger.info(f"✓ Loaded config")
        logger.info(f"  Chat model: {config.chat.model}")
        logger.info(f"  Keywords: {', '.join(config.filter.keywords)}")
        return config
    except Exception as e:
        logger.error(f"✗ Failed to load config: {e}")
        return None


def check_ingest(config):
    """Check the sample GDELT tables parse and filter."""
    logger.info("\n=== Checking GDELT Ingest ===")
    try:
        parsed = parse_tables(
            [SAMPLE_DIR / "events.export.CSV"],
            [SAMPLE_DIR / "events.mentions.CSV"],
            [SAMPLE_DIR / "20240326.gkg.csv"],
        )
        subset = filter_subset(
            parsed.events.records, parsed.mentions.records, parsed.articles.records,
            KeywordFilter(config.filter.keywords),
        )
        logger.info(f"✓ Parsed {len(parsed.events.records)} events, {len(parsed.mentions.records)} mentions, "
                    f"{len(parsed.articles.records)} articles")
        logger.info(f"✓ Subset keeps {len(subset.events)} events and {len(subset.articles)} articles")
        return subset
    except Exception as e:
        logger.error(f"✗ Ingest failed: {e}")
        return None


def check_graph(subset):
    """Check the DKG builds from the subset."""
    logger.info("\n=== Checking Knowledge Graph ===")
    try:
        kg = build_dkg(subset, facts=load_facts(SAMPLE_DIR / "facts.yaml"))
        stats = graph_stats(kg)
        logger.info(f"✓ Built DKG with {stats['nodes']} nodes and {stats['edges']} edges")
        return kg
    except Exception as e:
        logger.error(f"✗ Graph build failed: {e}")
        return None


def check_full_pipeline(config, subset, kg):
    """Fetch, index, answer and score with the stub clients."""
    logger.info("\n=== Checking Full Pipeline (Fetch + Index + QA + Eval) ===")
    try:
        chat, embedder, eval_embedder = make_clients(config)
        with tempfile.TemporaryDirectory() as tmp:
            policy = FetchPolicy(fixtures_dir=SAMPLE_DIR / "html", offline=True, min_interval=0.0)
            fetch_corpus([a.document_identifier for a in subset.articles], policy, Path(tmp) / "corpus",
                         clock=Clock(frozen=True))
            store = build_store(load_corpus(Path(tmp) / "corpus"), embedder, chunk_tokens=config.caps.chunk_tokens)
            logger.info(f"✓ Indexed {len(store)} chunks")

            resources = Resources(chat=chat, kg=kg, store=store, embedder=embedder, retries=0, backoff=0.0)
            run = run_benchmark(load_questions(config.paths.questions), ['graph_query', 'vector_rag'],
                                resources, Path(tmp) / "runs", Clock(frozen=True))
            logger.info(f"✓ Answered {len(run.results)} cells in run {run.run_id}")

            report = score_run(run.results, load_ground_truth(config.paths.ground_truth), eval_embedder,
                               config.refusal_patterns, retries=0, backoff=0.0)
            for summary in summarize(report.scores):
                logger.info(f"✓ {summary.method}: median similarity {summary.median:.3f} over {summary.n} answers")
        return not report.missing
    except Exception as e:
        logger.error(f"✗ Pipeline check failed: {e}")
        import traceback
        traceback.print_exc()
        return False


def run_checks():
    config = check_config()
    subset = check_ingest(config) if config else None
    kg = check_graph(subset) if subset else None
    return {
        'Configuration': config is not None,
        'GDELT Ingest': subset is not None,
        'Knowledge Graph': kg is not None,
        'Full Pipeline': check_full_pipeline(config, subset, kg) if kg else False,
    }


def test_components():
    results = run_checks()
    assert all(results.values()), results


def main():
    """Run all checks."""
    logger.info("=" * 60)
    logger.info("GDELT KG-QA Pipeline - Component Tests")
    logger.info("=" * 60)

    results = run_checks()

    logger.info("\n" + "=" * 60)
    logger.info("Test Summary")
    logger.info("=" * 60)

    for test_name, passed in results.items():
        status = "✓ PASS" if passed else "✗ FAIL"
        logger.info(f"{status}: {test_name}")

    all_passed = all(results.values())
    logger.info("=" * 60)

    if all_passed:
        logger.info("🎉 All checks passed! Ready to deploy to Airflow.")
        return 0
    else:
        logger.error("❌ Some checks failed. Fix issues before deploying.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
