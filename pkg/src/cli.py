"""
Command-line entry point: one subcommand per pipeline stage.

    ingest -> fetch -> build-kg -> index -> query / ask / rag / bench -> eval

Global flags (--config, --stub, --verbose) may appear before or after the
subcommand. Exit codes: 0 success, 1 pipeline failure, 2 usage error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

from src.common.config import Config, load_config
from src.common.errors import ConfigurationError, PipelineError
from src.common.logging import set_log_level, setup_logger
from src.common.state_store import Clock, write_bytes_atomic, write_yaml_atomic
from src.evaluate.external import import_external_answers
from src.evaluate.reports import REPORT_FORMATS, emit_reports, render_table_text
from src.evaluate.scoring import load_ground_truth, score_run
from src.evaluate.summary import summarize
from src.extract.article_fetch import FetchPolicy, fetch_corpus
from src.extract.gdelt_download import download_dump, dump_urls, parse_timestamp
from src.extract.gdelt_schema import load_schema
from src.extract.gdelt_tables import parse_tables
from src.graph import query
from src.graph.builder import build_dkg, graph_stats, load_facts
from src.graph.ontology import load_ontology
from src.graph.storage import export_graph, graph_to_bytes, load_graph, save_graph
from src.llm.clients import make_clients
from src.load.corpus_store import load_corpus
from src.load.subset_store import load_subset, save_subset
from src.qa.pipeline import Resources, answer, load_run, run_benchmark
from src.qa.questions import Question, load_questions
from src.retrieval.vector_store import build_store, load_store, nearest_chunks, save_store
from src.transform.subset_filter import KeywordFilter, consistency_report, filter_subset

logger = setup_logger(__name__)

DEFAULT_REPORT_FORMATS = "table_text,csv,json,boxplot_svg"
SUBGRAPH_FORMATS = ('sentences', 'subgraph', 'edge_list_text', 'graphml')


def _split(value: Optional[str]) -> List[str]:
    return [part.strip() for part in (value or "").split(',') if part.strip()]


def _emit(payload: Any) -> None:
    """Structured stdout output."""
    sys.stdout.write(yaml.safe_dump(payload, sort_keys=False, allow_unicode=True))


def _write_or_print(data: bytes, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(data.decode('utf-8'))
        return
    write_bytes_atomic(Path(out), data)
    logger.info(f"Wrote {out}")


# -- stages ---------------------------------------------------------------------

def cmd_ingest(args: argparse.Namespace, config: Config) -> int:
    schema = load_schema(args.schema or config.paths.schema)
    parsed = parse_tables(args.events, args.mentions, args.gkg, schema, config.max_workers)

    window = None
    if args.start or args.end:
        window = (parse_timestamp(args.start) if args.start else None,
                  parse_timestamp(args.end) if args.end else None)
    keyword_filter = KeywordFilter(
        keywords=_split(args.keywords) or list(config.filter.keywords),
        case_sensitive=args.case_sensitive or config.filter.case_sensitive,
        time_window=window,
    )

    duplicates = parsed.events.duplicates + parsed.mentions.duplicates + parsed.articles.duplicates
    sources = {
        'events': [Path(p).name for p in args.events],
        'mentions': [Path(p).name for p in args.mentions],
        'gkg': [Path(p).name for p in args.gkg],
    }
    subset = filter_subset(
        parsed.events.records, parsed.mentions.records, parsed.articles.records,
        keyword_filter, sources=sources, duplicates=duplicates,
    )
    save_subset(subset, args.out)

    report = consistency_report(subset)
    report['parse'] = {
        name: {'rows_read': result.rows_read, 'records': len(result.records), 'errors': result.skipped}
        for name, result in (('events', parsed.events), ('mentions', parsed.mentions), ('gkg', parsed.articles))
    }
    _emit(report)
    return 0


def cmd_download(args: argparse.Namespace, config: Config) -> int:
    urls = dump_urls(parse_timestamp(args.start), parse_timestamp(args.end), tuple(_split(args.tables)))
    if args.list_only:
        _emit([{'table': table, 'url': url} for table, url in urls])
        return 0
    if args.out is None:
        raise ConfigurationError("download needs --out unless --list-only is given")
    paths = [str(download_dump(url, args.out, timeout=config.fetch.timeout)) for _, url in urls]
    _emit({'downloaded': paths})
    return 0


def cmd_fetch(args: argparse.Namespace, config: Config) -> int:
    subset = load_subset(args.subset)
    policy = FetchPolicy.from_settings(config.fetch, fixtures_dir=args.fixtures, offline=args.offline or config.stub)
    result = fetch_corpus(
        [a.document_identifier for a in subset.articles], policy, args.out, clock=Clock(frozen=config.stub)
    )
    _emit({'articles': len(result.texts), 'reused': result.reused, 'statuses': result.summary})
    return 0


def cmd_build_kg(args: argparse.Namespace, config: Config) -> int:
    ontology = load_ontology(args.ontology or config.paths.ontology)
    facts = load_facts(args.facts) if args.facts else None
    kg = build_dkg(load_subset(args.subset), ontology, skip_unresolved=args.skip_unresolved, facts=facts)
    save_graph(kg, args.out)
    _emit({'graph': str(args.out), **graph_stats(kg), 'build': kg.build_report.to_dict()})
    return 0


def cmd_index(args: argparse.Namespace, config: Config) -> int:
    _, embedder, _ = make_clients(config)
    store = build_store(
        load_corpus(args.corpus), embedder,
        chunk_tokens=config.caps.chunk_tokens,
        batch_size=config.retrieval_embedder.batch_size,
        retries=config.retries,
        max_workers=config.max_workers,
    )
    save_store(store, args.out)
    _emit({'store': str(args.out), 'entries': len(store), 'dim': store.dim,
           'embedder_id': store.embedder_id, 'failed': len(store.failed)})
    return 1 if store.failed else 0


def cmd_search(args: argparse.Namespace, config: Config) -> int:
    _, embedder, _ = make_clients(config)
    store = load_store(args.store, expected_embedder=embedder.embedder_id)
    ranked = nearest_chunks(store, args.query, config.caps.k, embedder)
    _emit([
        {'document_identifier': c.document_identifier, 'chunk_index': c.chunk_index,
         'distance': round(d, 6), 'text': c.text}
        for c, d in ranked
    ])
    return 0


def _emit_subgraph(subgraph: query.Subgraph, fmt: str, out: Optional[Path]) -> None:
    if fmt == 'sentences':
        data = "".join(f"{s.sentence}\n" for s in subgraph.sentences()).encode('utf-8')
    elif fmt == 'subgraph':
        data = graph_to_bytes(subgraph.to_graph())
    else:
        data = export_graph(subgraph.to_graph(), fmt)
    _write_or_print(data, out)


def cmd_query(args: argparse.Namespace, config: Config) -> int:
    kg = load_graph(args.kg)
    if args.keywords:
        _emit_subgraph(query.keyword_edge_search(kg, _split(args.keywords)), args.emit, args.out)
    elif args.top_themes is not None:
        _emit([{'theme': theme, 'count': count} for theme, count in query.top_themes(kg, args.top_themes)])
    elif args.count_articles_by_source:
        _emit({'source': args.count_articles_by_source,
               'articles': query.count_articles_by_source(kg, args.count_articles_by_source)})
    elif args.attribution:
        attribution = query.mention_attribution(kg, args.attribution)
        payload: Dict[str, Any] = {'entity': attribution.entity, 'count': attribution.count,
                                   'articles': attribution.articles}
        if args.corpus:
            check = query.verify_attribution(attribution, load_corpus(args.corpus))
            payload['verified'] = {'confirmed': check.confirmed, 'unconfirmed': check.unconfirmed,
                                   'missing_text': check.missing_text}
        _emit(payload)
    elif args.neighborhood:
        _emit_subgraph(query.neighborhood(kg, args.neighborhood, args.radius), args.emit, args.out)
    else:
        _emit(graph_stats(kg))
    return 0


def _resources(config: Config, kg_path: Optional[Path] = None, store_path: Optional[Path] = None) -> Resources:
    chat, embedder, _ = make_clients(config)
    return Resources(
        chat=chat,
        kg=load_graph(kg_path) if kg_path else None,
        store=load_store(store_path, expected_embedder=embedder.embedder_id) if store_path else None,
        embedder=embedder,
        k=config.caps.k,
        max_sentences=config.caps.max_sentences,
        max_chunks=config.caps.max_chunks,
        retries=config.retries,
    )


def _print_result(result, show_prompt: bool) -> int:
    if show_prompt:
        sys.stdout.write(f"--- prompt ---\n{result.prompt}\n--- answer ---\n")
    if not result.ok:
        sys.stderr.write(f"error: {result.error}\n")
        return 1
    sys.stdout.write(f"{result.answer}\n")
    if result.truncated:
        logger.warning(f"Context was truncated to {result.context_size} items")
    return 0


def cmd_ask(args: argparse.Namespace, config: Config) -> int:
    resources = _resources(config, kg_path=args.kg)
    question = Question("adhoc", args.question, _split(args.keywords))
    return _print_result(answer(question, 'graph_query', resources, Clock(frozen=config.stub)), args.show_prompt)


def cmd_rag(args: argparse.Namespace, config: Config) -> int:
    resources = _resources(config, store_path=args.store)
    question = Question("adhoc", args.question)
    return _print_result(answer(question, 'vector_rag', resources, Clock(frozen=config.stub)), args.show_prompt)


def cmd_bench(args: argparse.Namespace, config: Config) -> int:
    resources = _resources(config, kg_path=args.kg, store_path=args.store)
    run = run_benchmark(
        load_questions(args.questions or config.paths.questions),
        _split(args.methods),
        resources,
        out_dir=args.out,
        clock=Clock(frozen=config.stub),
        config_snapshot=config.to_manifest(),
        max_workers=args.workers or 1,
    )
    errors = sum(1 for r in run.results if not r.ok)
    _emit({'run_id': run.run_id, 'run_dir': str(run.run_dir), 'cells': len(run.results), 'errors': errors})
    return 0


def cmd_eval(args: argparse.Namespace, config: Config) -> int:
    formats = _split(args.format)
    unknown = [f for f in formats if f not in REPORT_FORMATS]
    if unknown:
        raise ConfigurationError(f"unknown report format(s): {', '.join(unknown)}",
                                 {'choices': ', '.join(REPORT_FORMATS)})

    results = []
    for run_dir in args.run or []:
        results.extend(load_run(run_dir))
    for path in args.external or []:
        results.extend(import_external_answers(path))
    if not results:
        raise ConfigurationError("nothing to score: pass --run and/or --external")

    _, _, eval_embedder = make_clients(config)
    report = score_run(
        results, load_ground_truth(args.truth or config.paths.ground_truth), eval_embedder,
        refusal_patterns=config.refusal_patterns, batch_size=config.eval_embedder.batch_size,
        retries=config.retries, max_workers=config.max_workers,
    )
    methods = list(dict.fromkeys(r.method for r in results))
    summaries = summarize(report.scores, methods)

    out_dir = Path(args.out)
    write_yaml_atomic(out_dir / "scores.yaml", report.to_dict())
    emit_reports(summaries, report.scores, out_dir, formats)
    sys.stdout.write(render_table_text(summaries, report.scores).decode('utf-8'))
    return 0


def cmd_export(args: argparse.Namespace, config: Config) -> int:
    _write_or_print(export_graph(load_graph(args.kg), args.format), args.out)
    return 0


# -- parser ---------------------------------------------------------------------

def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    default = argparse.SUPPRESS if suppress else None
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', type=Path, default=default, help="pipeline YAML (default: config/pipeline.yaml)")
    parent.add_argument('--stub', action='store_true', default=argparse.SUPPRESS if suppress else False,
                        help="use deterministic offline model clients and a frozen clock")
    parent.add_argument('--verbose', action='store_true', default=argparse.SUPPRESS if suppress else False,
                        help="debug logging")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gdelt-kgqa",
        description="GDELT knowledge-graph construction and question answering",
        parents=[_global_flags(suppress=False)],
    )
    common = [_global_flags(suppress=True)]
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    p = sub.add_parser('ingest', parents=common, help="parse GDELT tables and filter the case-study subset")
    p.add_argument('--events', type=Path, nargs='+', required=True, help="events (export) files")
    p.add_argument('--mentions', type=Path, nargs='+', required=True, help="mentions files")
    p.add_argument('--gkg', type=Path, nargs='+', required=True, help="GKG (articles) files")
    p.add_argument('--keywords', help="comma-separated keywords (default: config filter.keywords)")
    p.add_argument('--case-sensitive', action='store_true', help="match keywords case-sensitively")
    p.add_argument('--start', '--from', dest='start', help="mention-time window start (YYYYMMDDHHMMSS or ISO)")
    p.add_argument('--end', '--to', dest='end', help="mention-time window end, inclusive")
    p.add_argument('--schema', type=Path, help="column map (default: config paths.schema)")
    p.add_argument('--out', type=Path, required=True, help="subset directory")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser('download', parents=common, help="download GDELT 2.0 15-minute dumps for a window")
    p.add_argument('--start', required=True)
    p.add_argument('--end', required=True)
    p.add_argument('--tables', default="events,mentions,gkg")
    p.add_argument('--out', type=Path, help="directory for extracted files")
    p.add_argument('--list-only', action='store_true', help="print the dump URLs without downloading")
    p.set_defaults(handler=cmd_download)

    p = sub.add_parser('fetch', parents=common, help="fetch article texts for a subset")
    p.add_argument('--subset', type=Path, required=True)
    p.add_argument('--out', type=Path, required=True, help="corpus directory")
    p.add_argument('--fixtures', type=Path, help="directory with index.yaml mapping URLs to saved HTML")
    p.add_argument('--offline', action='store_true', help="never touch the network")
    p.add_argument('--timeout', type=float, metavar='S',
                   help="per-request timeout in seconds (default: config fetch.timeout)")
    p.set_defaults(handler=cmd_fetch)

    p = sub.add_parser('build-kg', parents=common, help="build the DKG from a subset")
    p.add_argument('--subset', type=Path, required=True)
    p.add_argument('--out', type=Path, required=True, help="graph file")
    p.add_argument('--ontology', type=Path, help="ontology (default: config paths.ontology)")
    p.add_argument('--facts', type=Path, help="curated facts YAML")
    p.add_argument('--skip-unresolved', action='store_true',
                   help="skip structural edges for unresolved mentions instead of failing")
    p.set_defaults(handler=cmd_build_kg)

    p = sub.add_parser('index', parents=common, help="chunk and embed a corpus into a vector store")
    p.add_argument('--corpus', type=Path, required=True)
    p.add_argument('--out', type=Path, required=True, help="vector store file")
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser('search', parents=common, help="nearest chunks for a query")
    p.add_argument('--store', type=Path, required=True)
    p.add_argument('--query', required=True)
    p.add_argument('-k', type=int, help="chunks to return (default: config caps.k)")
    p.set_defaults(handler=cmd_search)

    p = sub.add_parser('query', parents=common, help="graph queries over a DKG")
    p.add_argument('--kg', type=Path, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument('--keywords', help="comma-separated keywords for edge search")
    mode.add_argument('--top-themes', type=int, metavar='K')
    mode.add_argument('--count-articles-by-source', metavar='PATTERN')
    mode.add_argument('--attribution', metavar='ENTITY')
    mode.add_argument('--neighborhood', metavar='NODE_ID')
    p.add_argument('--emit', choices=SUBGRAPH_FORMATS, default='sentences',
                   help="output form for --keywords and --neighborhood (subgraph: the graph file format)")
    p.add_argument('--out', type=Path, help="write the --emit output to a file instead of stdout")
    p.add_argument('--radius', type=int, default=1, help="hops for --neighborhood")
    p.add_argument('--corpus', type=Path, help="corpus for checking --attribution against article text")
    p.set_defaults(handler=cmd_query)

    p = sub.add_parser('ask', parents=common, help="answer a question from a keyword subgraph")
    p.add_argument('--kg', type=Path, required=True)
    p.add_argument('--question', required=True)
    p.add_argument('--keywords', required=True, help="comma-separated keywords")
    p.add_argument('--show-prompt', action='store_true')
    p.set_defaults(handler=cmd_ask)

    p = sub.add_parser('rag', parents=common, help="answer a question from retrieved chunks")
    p.add_argument('--store', type=Path, required=True)
    p.add_argument('--question', required=True)
    p.add_argument('-k', type=int, help="chunks to retrieve (default: config caps.k)")
    p.add_argument('--show-prompt', action='store_true')
    p.set_defaults(handler=cmd_rag)

    p = sub.add_parser('bench', parents=common, help="run the question x method grid")
    p.add_argument('--kg', type=Path, required=True)
    p.add_argument('--store', type=Path, required=True)
    p.add_argument('--questions', type=Path, help="question set (default: config paths.questions)")
    p.add_argument('--methods', default="graph_query,vector_rag",
                   help="comma-separated: graph_query, vector_rag, direct_llm")
    p.add_argument('--out', type=Path, required=True, help="parent directory for run directories")
    p.add_argument('-k', type=int, help="chunks per RAG prompt (default: config caps.k)")
    p.add_argument('--workers', type=int, help="concurrent cells (default 1)")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser('eval', parents=common, help="score runs against ground truth and write reports")
    p.add_argument('--run', type=Path, action='append', help="run directory (repeatable)")
    p.add_argument('--external', type=Path, action='append', help="external answers YAML (repeatable)")
    p.add_argument('--truth', type=Path, help="ground truth (default: config paths.ground_truth)")
    p.add_argument('--out', type=Path, required=True, help="report directory")
    p.add_argument('--format', default=DEFAULT_REPORT_FORMATS,
                   help="comma-separated: table_text, csv, json, boxplot_svg")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('export', parents=common, help="export a DKG")
    p.add_argument('--kg', type=Path, required=True)
    p.add_argument('--format', choices=('edge_list_text', 'graphml'), required=True)
    p.add_argument('--out', type=Path, help="output file (default: stdout)")
    p.set_defaults(handler=cmd_export)

    return parser


def run(argv: Optional[Sequence[str]] = None, env: Optional[Dict[str, str]] = None) -> int:
    """
    Run one subcommand.

    Returns:
        0 on success, 1 when a stage fails, 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    set_log_level(logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = load_config(
            args.config, env=env,
            overrides={
                'stub': True if args.stub else None,
                'caps.k': getattr(args, 'k', None),
                'fetch.timeout': getattr(args, 'timeout', None),
            },
        )
        return args.handler(args, config)
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e.describe()}")
        sys.stderr.write(f"error: {e.describe()}\n")
        return 1
    except (FileNotFoundError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
