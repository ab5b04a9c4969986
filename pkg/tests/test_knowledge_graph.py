"""
Tests for the DKG: ontology checks, star construction, persistence and queries.
"""
import io
import json
import random
from datetime import date, datetime
from itertools import product

import networkx as nx
import pytest

from src.common.errors import (
    ConfigurationError,
    FilterError,
    GraphCorruptionError,
    GraphVersionError,
    NodeNotFoundError,
    UnresolvedReferenceError,
)
from src.extract.gdelt_tables import ArticleRecord, EventRecord, MentionRecord
from src.graph.builder import build_dkg, graph_stats, load_facts, row_to_star
from src.graph.knowledge_graph import KnowledgeGraph, normalize_label, value_node_id
from src.graph.ontology import NODE_TYPES, Ontology, default_ontology
from src.graph.query import (
    count_articles_by_source,
    keyword_edge_search,
    mention_attribution,
    neighborhood,
    top_themes,
    triples_to_sentences,
    verify_attribution,
)
from src.graph.storage import (
    edge_list_text,
    export_graph,
    graph_to_bytes,
    load_graph,
    save_graph,
    to_graphml,
)
from src.transform.subset_filter import CaseStudySubset, KeywordFilter, filter_subset
from tests.conftest import A1, A2, A3


def expected_star_edges(subset) -> int:
    events = sum(
        sum(v is not None for v in (e.day, e.actor1_name, e.actor2_name, e.event_code, e.action_geo_fullname))
        for e in subset.events
    )
    articles = sum(
        1 + (a.source_common_name is not None) + len(a.themes) + len(a.persons)
        + len(a.organizations) + len(a.locations) + len(a.quotations)
        for a in subset.articles
    )
    return events + articles


# -- construction ---------------------------------------------------------------------

def test_star_count_law(kg, subset):
    report = kg.build_report
    rows = len(subset.events) + len(subset.articles) + len(subset.mentions)
    assert report.row_nodes == rows
    assert report.star_edges == expected_star_edges(subset)
    assert report.structural_edges == 2 * len(subset.mentions)
    assert report.fact_edges == 1
    assert kg.edge_count == report.star_edges + report.structural_edges + report.fact_edges
    assert kg.node_count == report.row_nodes + report.value_nodes


def test_every_edge_respects_ontology(kg):
    ontology = kg.ontology
    for edge in kg.edges():
        assert ontology.signature(edge.label) == (kg.node_type(edge.source), kg.node_type(edge.target))
    assert {n.type for n in kg.nodes()} <= set(NODE_TYPES)


def test_value_nodes_are_shared(kg):
    theme = value_node_id('Theme', 'MARITIME_INCIDENT')
    incoming = [e for e in kg.incident_edges(theme) if e.label == 'has_theme']
    assert len(incoming) == 3
    assert kg.node_label(theme) == "MARITIME_INCIDENT"


def test_structural_chain(kg):
    mention = "Mention:1151715158|" + A3
    labels = {(e.label, e.source, e.target) for e in kg.incident_edges(mention)}
    assert ('mentioned_in', "Event:1151715158", mention) in labels
    assert ('appears_in', mention, "Article:" + A3) in labels


def test_location_edges_carry_coordinates(kg):
    edges = [e for e in kg.edges() if e.label == 'occurred_at' and e.source == "Event:1151715158"]
    assert len(edges) == 1
    assert edges[0].attributes == {'lat': 39.2153, 'lon': -76.5283}


def test_curated_fact_uses_extension_label(kg):
    facts = [e for e in kg.edges() if e.label == 'crosses']
    assert len(facts) == 1
    assert kg.node_label(facts[0].source) == "Francis Scott Key Bridge"
    assert kg.node_label(facts[0].target) == "Patapsco River"
    assert facts[0].attributes == {'curated': True}


def test_build_is_deterministic(subset, sample_paths):
    facts = load_facts(sample_paths['facts'])
    assert graph_to_bytes(build_dkg(subset, facts=facts)) == graph_to_bytes(build_dkg(subset, facts=facts))


def test_row_to_star_skips_empty_values(subset):
    police = subset.events[2]
    row = {name: getattr(police, name) for name in police.__dataclass_fields__}
    star = row_to_star(row, 'Event', default_ontology().plan('events'))
    assert star.node_id == "Event:1151715159"
    assert 'has_actor2' not in {e.label for e in star.edges}
    assert star.attributes['actor1_code'] == "USACOP"


def test_unresolved_subset(parsed):
    articles = [a for a in parsed.articles.records if a.document_identifier != A2]
    subset = filter_subset(parsed.events.records, parsed.mentions.records, articles, KeywordFilter(['ship']))
    with pytest.raises(UnresolvedReferenceError):
        build_dkg(subset)

    kg = build_dkg(subset, skip_unresolved=True)
    assert len(kg.build_report.skipped_structural) == 2
    assert kg.build_report.structural_edges == 0


def test_duplicate_rows_are_reported(subset):
    doubled = filter_subset(subset.events + subset.events[:1], subset.mentions, subset.articles,
                            KeywordFilter(['bridge', 'ship']))
    kg = build_dkg(doubled)
    assert kg.build_report.duplicate_rows == ["Event:1151715157"]


def test_fact_with_wrong_signature_is_rejected(subset):
    with pytest.raises(ConfigurationError):
        build_dkg(subset, facts=[('Person', 'Brandon Scott', 'crosses', 'Location', 'Baltimore')])


def test_facts_file_shapes(tmp_path):
    path = tmp_path / "facts.yaml"
    path.write_text(
        "facts:\n"
        "  - [Location, A, located_in, Location, B]\n"
        "  - {source_type: Location, source: C, edge: located_in, target_type: Location, target: B}\n",
        encoding='utf-8',
    )
    assert load_facts(path) == [('Location', 'A', 'located_in', 'Location', 'B'),
                                ('Location', 'C', 'located_in', 'Location', 'B')]

    path.write_text("facts:\n  - [Location, A, located_in]\n", encoding='utf-8')
    with pytest.raises(ConfigurationError):
        load_facts(path)


# -- graph model -------------------------------------------------------------------------

def test_graph_rejects_bad_edges():
    kg = KnowledgeGraph(default_ontology())
    kg.add_node("Article:x", 'Article', "x")
    kg.add_node("Theme:t", 'Theme', "T")
    with pytest.raises(ConfigurationError):
        kg.add_edge("Article:x", 'mentions_person', "Theme:t")
    with pytest.raises(NodeNotFoundError):
        kg.add_edge("Article:x", 'has_theme', "Theme:missing")
    with pytest.raises(ConfigurationError):
        kg.add_node("Theme:t", 'Person', "T")
    with pytest.raises(ConfigurationError):
        kg.add_node("Weather:x", 'Weather', "x")


def test_frozen_graph_is_read_only(kg):
    with pytest.raises(RuntimeError):
        kg.add_node("Theme:new", 'Theme', "NEW")


def test_normalize_label():
    assert normalize_label("  Patapsco   River ") == "patapsco river"
    assert value_node_id('Location', "Patapsco  RIVER") == "Location:patapsco river"


def test_plans_may_not_use_extension_labels():
    descriptor = default_ontology().to_descriptor()
    descriptor['field_plans']['articles']['locations']['edge'] = 'located_in'
    with pytest.raises(ConfigurationError):
        Ontology.from_descriptor(descriptor)


# -- persistence -----------------------------------------------------------------------

def test_save_load_round_trip(kg, tmp_path):
    path = save_graph(kg, tmp_path / "kg.json")
    loaded = load_graph(path)
    assert loaded == kg
    assert loaded.edge_ids() == kg.edge_ids()
    assert graph_to_bytes(loaded) == graph_to_bytes(kg)
    assert triples_to_sentences(loaded) == triples_to_sentences(kg)


def test_load_rejects_other_versions(kg, tmp_path):
    document = json.loads(graph_to_bytes(kg))
    document['schema_version'] = 99
    path = tmp_path / "future.json"
    path.write_text(json.dumps(document), encoding='utf-8')
    with pytest.raises(GraphVersionError):
        load_graph(path)


def test_load_rejects_truncated_file(kg, tmp_path):
    path = tmp_path / "cut.json"
    path.write_bytes(graph_to_bytes(kg)[:200])
    with pytest.raises(GraphCorruptionError):
        load_graph(path)


def test_load_rejects_dangling_edge(kg, tmp_path):
    document = json.loads(graph_to_bytes(kg))
    document['nodes'] = document['nodes'][1:]
    path = tmp_path / "dangling.json"
    path.write_text(json.dumps(document), encoding='utf-8')
    with pytest.raises(GraphCorruptionError):
        load_graph(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_graph(tmp_path / "nope.json")


def test_edge_list_export(kg):
    lines = edge_list_text(kg).decode().splitlines()
    assert len(lines) == kg.edge_count
    assert lines == sorted(lines)
    assert all(len(line.split('\t')) == 3 for line in lines)


def test_graphml_export_is_readable(kg):
    restored = nx.read_graphml(io.BytesIO(to_graphml(kg)))
    assert restored.number_of_nodes() == kg.node_count
    assert restored.number_of_edges() == kg.edge_count


def test_unknown_export_format(kg):
    with pytest.raises(ValueError):
        export_graph(kg, 'csv')


# -- queries ---------------------------------------------------------------------------

def test_top_themes(kg):
    assert top_themes(kg, 5) == [
        ("MARITIME_INCIDENT", 3),
        ("MANMADE_DISASTER", 2),
        ("MARITIME", 1),
        ("TAX_FNCACT", 1),
        ("WB_137_WATER", 1),
    ]
    assert top_themes(kg, 1) == [("MARITIME_INCIDENT", 3)]
    with pytest.raises(ValueError):
        top_themes(kg, 0)


def test_count_articles_by_source(kg):
    assert count_articles_by_source(kg, "cnn") == 2
    assert count_articles_by_source(kg, "CNN.com") == 2
    assert count_articles_by_source(kg, "wbaltv") == 1
    assert count_articles_by_source(kg, "bbc") == 0


def test_attribution_and_verification(kg, corpus):
    attribution = mention_attribution(kg, "niki  FENNOY")
    assert attribution.articles == [A1, A3]
    assert attribution.count == 2

    check = verify_attribution(attribution, corpus)
    assert check.confirmed == [A3]
    assert check.unconfirmed == [A1]
    assert check.missing_text == []

    assert verify_attribution(attribution, {A3: "Niki Fennoy spoke."}).missing_text == [A1]


def test_attribution_of_unknown_entity(kg):
    assert mention_attribution(kg, "Nobody Atall").articles == []
    with pytest.raises(ValueError):
        mention_attribution(kg, "  ")


@pytest.mark.parametrize("keywords", [["Bridge", "Collapse", "River"], ["Has_Theme"], ["Niki Fennoy"], ["CNN"]])
def test_keyword_search_matches_oracle(kg, keywords):
    subgraph = keyword_edge_search(kg, keywords)
    needles = [k.casefold().replace('_', ' ') for k in keywords]
    expected = [
        t.edge_id for t in triples_to_sentences(kg)
        if any(n in t.sentence.casefold().replace('_', ' ') for n in needles)
    ]
    assert list(subgraph.edge_ids) == expected

    endpoints = {e.source for e in subgraph.edges} | {e.target for e in subgraph.edges}
    assert set(subgraph.nodes) == endpoints


def test_has_theme_keyword_selects_theme_edges(kg):
    subgraph = keyword_edge_search(kg, ["Has_Theme"])
    assert len(subgraph) == 8
    assert {e.label for e in subgraph.edges} == {'has_theme'}


def test_keyword_search_needs_keywords(kg):
    with pytest.raises(FilterError):
        keyword_edge_search(kg, ["", "  "])


def test_subgraph_materializes_with_same_ids(kg):
    subgraph = keyword_edge_search(kg, ["crosses"])
    small = subgraph.to_graph()
    assert small.edge_ids() == list(subgraph.edge_ids)
    assert small.node_count == 2


def test_neighborhood(kg):
    theme = value_node_id('Theme', 'MARITIME_INCIDENT')
    assert len(neighborhood(kg, theme, 0)) == 0
    assert len(neighborhood(kg, theme, 1)) == 3
    assert len(neighborhood(kg, theme, 2)) > 3
    with pytest.raises(NodeNotFoundError):
        neighborhood(kg, "Theme:nope", 1)


def test_graph_stats(kg):
    stats = graph_stats(kg)
    assert stats['edges'] == kg.edge_count
    assert stats['node_types']['Article'] == 3
    assert stats['edge_labels']['has_theme'] == 8


# -- randomised subsets and graphs ------------------------------------------------------

NAMES = ["Baltimore", "Key Bridge", "Patapsco River", "Dali", "Brandon Scott", "Coast Guard", "Maryland"]
THEMES = ["MARITIME_INCIDENT", "MANMADE_DISASTER", "TRANSPORT", "WB_135_TRANSPORT", "CRISISLEX_T03_DEAD"]
SOURCES = ["cnn.com", "wbaltv.com", "apnews.com"]
CODES = ["190", "1823", "043"]
DAYS = [date(2024, 3, 25), date(2024, 3, 26), date(2024, 3, 27)]


def surface_form(rng, text):
    """Same normalized label, different spelling."""
    return rng.choice([text, text.upper(), text.lower(), f"  {text} ", text.replace(' ', '  ')])


def maybe(rng, pool):
    return surface_form(rng, rng.choice(pool)) if rng.random() < 0.7 else None


def random_subset(rng) -> CaseStudySubset:
    events = [
        EventRecord(
            global_event_id=1000 + i,
            day=rng.choice(DAYS),
            actor1_name=maybe(rng, NAMES),
            actor2_name=maybe(rng, NAMES),
            event_code=maybe(rng, CODES),
            action_geo_fullname=maybe(rng, NAMES),
            action_geo_lat=39.2,
            action_geo_lon=-76.5,
        )
        for i in range(rng.randint(0, 6))
    ]
    articles = []
    for i in range(rng.randint(0, 6)):
        day = rng.choice(DAYS)
        articles.append(ArticleRecord(
            gkg_record_id=f"20240326-{i}",
            date=datetime(day.year, day.month, day.day, rng.randint(0, 23)),
            document_identifier=f"https://news{i}.example.com/story",
            source_common_name=maybe(rng, SOURCES),
            themes=rng.sample(THEMES, rng.randint(0, 3)),
            persons=[surface_form(rng, n) for n in rng.sample(NAMES, rng.randint(0, 2))],
            organizations=[surface_form(rng, n) for n in rng.sample(NAMES, rng.randint(0, 2))],
            locations=[{'name': surface_form(rng, n), 'lat': 39.2, 'lon': -76.5}
                       for n in rng.sample(NAMES, rng.randint(0, 2))],
            quotations=[surface_form(rng, q) for q in rng.sample(["we are devastated", "the port is closed"],
                                                                  rng.randint(0, 1))],
        ))
    pairs = list(product([e.global_event_id for e in events], [a.document_identifier for a in articles]))
    mentions = [
        MentionRecord(global_event_id=event_id, mention_time=datetime(2024, 3, 26, rng.randint(0, 23)),
                      mention_identifier=url)
        for event_id, url in rng.sample(pairs, rng.randint(0, min(8, len(pairs))))
    ]
    return CaseStudySubset(events, mentions, articles, KeywordFilter(["bridge"]))


def expected_value_nodes(subset) -> set:
    """Distinct (node type, normalized label) pairs over every star."""
    values = set()

    def add(node_type, text):
        if text is not None:
            values.add((node_type, " ".join(str(text).split()).casefold()))

    for e in subset.events:
        add('DateValue', e.day.isoformat())
        add('Actor', e.actor1_name)
        add('Actor', e.actor2_name)
        add('EventCode', e.event_code)
        add('Location', e.action_geo_fullname)
    for a in subset.articles:
        add('DateValue', a.date.date().isoformat())
        add('Source', a.source_common_name)
        for node_type, items in (('Theme', a.themes), ('Person', a.persons),
                                 ('Organization', a.organizations), ('Quotation', a.quotations)):
            for item in items:
                add(node_type, item)
        for location in a.locations:
            add('Location', location['name'])
    return values


@pytest.mark.parametrize("seed", range(10))
def test_star_count_law_on_random_subsets(seed):
    rng = random.Random(seed)
    for _ in range(10):
        subset = random_subset(rng)
        kg = build_dkg(subset)
        stats = graph_stats(kg)

        rows = len(subset.events) + len(subset.mentions) + len(subset.articles)
        assert kg.node_count == rows + len(expected_value_nodes(subset))
        assert kg.edge_count == expected_star_edges(subset) + 2 * len(subset.mentions)
        assert stats['node_types'].get('Mention', 0) == len(subset.mentions)
        assert stats['edge_labels'].get('mentioned_in', 0) == len(subset.mentions)
        assert stats['edge_labels'].get('appears_in', 0) == len(subset.mentions)


WORDS = ["bridge", "Key", "river", "Patapsco", "collapse", "ship", "Dali", "CNN", "port", "Baltimore_City"]
SIGNATURES = [
    ('Article', 'has_theme', 'Theme'),
    ('Article', 'mentions_person', 'Person'),
    ('Article', 'published_by', 'Source'),
    ('Article', 'mentions_location', 'Location'),
    ('Event', 'has_actor1', 'Actor'),
    ('Event', 'has_event_code', 'EventCode'),
    ('Event', 'occurred_at', 'Location'),
]


def random_label(rng) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(rng.randint(1, 3)))


def random_attributes(rng) -> dict:
    candidates = {'weight': rng.random(), 'count': rng.randint(0, 9), 'curated': rng.random() < 0.5,
                  'note': random_label(rng)}
    return {k: v for k, v in candidates.items() if rng.random() < 0.4}


def random_graph(rng, max_edges=500) -> KnowledgeGraph:
    kg = KnowledgeGraph(default_ontology())
    pools = {}

    def pick(node_type):
        pool = pools.setdefault(node_type, [])
        if not pool or rng.random() < 0.3:
            node_id = f"{node_type}:{len(pool)}"
            kg.add_node(node_id, node_type, random_label(rng), random_attributes(rng))
            pool.append(node_id)
        return rng.choice(pool)

    for _ in range(rng.randint(0, max_edges)):
        source_type, label, target_type = rng.choice(SIGNATURES)
        kg.add_edge(pick(source_type), label, pick(target_type), random_attributes(rng))
    return kg.freeze()


def scramble_case(rng, text):
    return "".join(c.upper() if rng.random() < 0.5 else c.lower() for c in text)


def random_keyword(rng, kg) -> str:
    roll = rng.random()
    if roll < 0.4:
        word = rng.choice(WORDS)
    elif roll < 0.7 and kg.edge_count:
        edge = rng.choice(list(kg.edges()))
        sentence = f"{kg.node_label(edge.source)} {edge.label} {kg.node_label(edge.target)}"
        start = rng.randrange(len(sentence))
        word = sentence[start:start + rng.randint(1, 12)]
    elif roll < 0.85:
        word = rng.choice(SIGNATURES)[1]
    else:
        word = "no such keyword"
    return scramble_case(rng, word) if word.strip() else rng.choice(WORDS)


def brute_force_search(kg, keywords) -> list:
    needles = [k.strip().casefold().replace('_', ' ') for k in keywords if k.strip()]
    hits = []
    for edge in kg.edges():
        sentence = f"{kg.node_label(edge.source)} {edge.label} {kg.node_label(edge.target)}"
        if any(n in sentence.casefold().replace('_', ' ') for n in needles):
            hits.append(edge.id)
    return sorted(hits)


@pytest.mark.parametrize("seed", range(20))
def test_keyword_search_laws_on_random_graphs(seed):
    rng = random.Random(seed)
    for _ in range(10):
        kg = random_graph(rng)
        keywords = [random_keyword(rng, kg) for _ in range(rng.randint(1, 3))]
        extra = random_keyword(rng, kg)

        subgraph = keyword_edge_search(kg, keywords)
        assert list(subgraph.edge_ids) == brute_force_search(kg, keywords)
        assert set(subgraph.nodes) == {e.source for e in subgraph.edges} | {e.target for e in subgraph.edges}

        union = set(keyword_edge_search(kg, [keywords[0], extra]).edge_ids)
        assert union == set(keyword_edge_search(kg, [keywords[0]]).edge_ids) | set(
            keyword_edge_search(kg, [extra]).edge_ids)
        assert set(subgraph.edge_ids) <= set(keyword_edge_search(kg, [*keywords, extra]).edge_ids)


@pytest.mark.parametrize("seed", range(5))
def test_save_load_round_trip_on_random_graphs(seed, tmp_path):
    rng = random.Random(seed)
    for i in range(10):
        kg = random_graph(rng, max_edges=200)
        loaded = load_graph(save_graph(kg, tmp_path / f"kg_{i}.json"))
        assert list(loaded.nodes()) == list(kg.nodes())
        assert list(loaded.edges()) == list(kg.edges())
        assert graph_to_bytes(loaded) == graph_to_bytes(kg)
