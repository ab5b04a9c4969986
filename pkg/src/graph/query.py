"""
Graph queries over the DKG: triple sentences, keyword search returning
edge-induced subgraphs, and the aggregate queries (articles per source,
top themes, entity attribution, neighborhoods).
"""
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

from src.common.errors import FilterError, NodeNotFoundError
from src.common.logging import setup_logger
from src.extract.article_fetch import ArticleText
from src.graph.knowledge_graph import Edge, KnowledgeGraph, normalize_label

logger = setup_logger(__name__)

ATTRIBUTION_LABELS = ('mentions_person', 'mentions_organization')


@dataclass(frozen=True)
class TripleSentence:
    edge_id: int
    sentence: str


@dataclass
class Subgraph:
    """Edge-induced subgraph: the selected edges plus exactly their endpoints."""
    parent: KnowledgeGraph
    edge_ids: Tuple[int, ...]

    def __post_init__(self):
        self.edge_ids = tuple(sorted(set(self.edge_ids)))

    @property
    def edges(self) -> List[Edge]:
        return [self.parent.edge(i) for i in self.edge_ids]

    @property
    def nodes(self) -> List[str]:
        endpoints = set()
        for edge in self.edges:
            endpoints.add(edge.source)
            endpoints.add(edge.target)
        return sorted(endpoints)

    def sentences(self) -> List[TripleSentence]:
        return [TripleSentence(e.id, render_sentence(self.parent, e)) for e in self.edges]

    def to_graph(self) -> KnowledgeGraph:
        """Materialize as a standalone graph (same ontology, same ids)."""
        kg = KnowledgeGraph(self.parent.ontology)
        for node_id in self.nodes:
            node = self.parent.node(node_id)
            kg.add_node(node.id, node.type, node.label, node.attributes)
        for edge in self.edges:
            kg.add_edge(edge.source, edge.label, edge.target, edge.attributes, edge_id=edge.id)
        return kg.freeze()

    def __len__(self) -> int:
        return len(self.edge_ids)


def render_sentence(kg: KnowledgeGraph, edge: Edge) -> str:
    relation = edge.label.replace('_', ' ')
    return f"{kg.node_label(edge.source)} {relation} {kg.node_label(edge.target)}"


def triples_to_sentences(kg: KnowledgeGraph) -> List[TripleSentence]:
    """One sentence per edge, in edge-id order (cached on frozen graphs)."""
    cached = getattr(kg, '_sentence_cache', None)
    if cached is not None:
        return list(cached)
    sentences = [TripleSentence(e.id, render_sentence(kg, e)) for e in kg.edges()]
    if kg.frozen:
        kg._sentence_cache = tuple(sentences)
    return sentences


def _match_form(text: str) -> str:
    # "Has_Theme" must hit the rendered "has theme"
    return text.casefold().replace('_', ' ')


def keyword_edge_search(kg: KnowledgeGraph, keywords: Iterable[str]) -> Subgraph:
    """
    Edges whose sentence contains any keyword, as an edge-induced subgraph.

    Matching is case-insensitive substring, with '_' and ' ' treated as equal.
    Multi-word keywords match as one phrase.
    """
    needles = [_match_form(k.strip()) for k in keywords if k and k.strip()]
    if not needles:
        raise FilterError("search requires keywords")

    hits = [
        t.edge_id for t in triples_to_sentences(kg)
        if any(needle in _match_form(t.sentence) for needle in needles)
    ]
    logger.info(f"Keyword search {list(keywords)} matched {len(hits)} of {kg.edge_count} edges")
    return Subgraph(kg, tuple(hits))


def count_articles_by_source(kg: KnowledgeGraph, source_pattern: str) -> int:
    """Distinct articles whose publishing source label contains the pattern."""
    pattern = source_pattern.casefold()
    articles = {
        e.source for e in kg.edges()
        if e.label == 'published_by' and pattern in kg.node_label(e.target).casefold()
    }
    return len(articles)


def top_themes(kg: KnowledgeGraph, k: int) -> List[Tuple[str, int]]:
    """
    Themes ranked by has_theme edge count.

    Ties are broken by theme label so results are stable.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    counts = Counter(kg.node_label(e.target) for e in kg.edges() if e.label == 'has_theme')
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]


@dataclass
class Attribution:
    entity: str
    entity_nodes: List[str]
    articles: List[str]

    @property
    def count(self) -> int:
        return len(self.articles)


def mention_attribution(kg: KnowledgeGraph, entity_label: str) -> Attribution:
    """Articles linked to a Person/Organization node with this (normalized) label."""
    if not entity_label or not entity_label.strip():
        raise ValueError("entity_label must be non-empty")

    entity_nodes = kg.find_by_label(entity_label, 'Person') + kg.find_by_label(entity_label, 'Organization')
    articles: List[str] = []
    for node_id in entity_nodes:
        for edge in kg.incident_edges(node_id):
            if edge.label in ATTRIBUTION_LABELS and edge.target == node_id:
                url = kg.node_label(edge.source)
                if url not in articles:
                    articles.append(url)

    logger.info(f"'{entity_label}' attributed to {len(articles)} articles")
    return Attribution(entity=entity_label, entity_nodes=entity_nodes, articles=articles)


@dataclass
class AttributionCheck:
    entity: str
    confirmed: List[str] = field(default_factory=list)
    unconfirmed: List[str] = field(default_factory=list)
    missing_text: List[str] = field(default_factory=list)


def verify_attribution(
    attribution: Attribution,
    texts: Union[Mapping[str, str], Sequence[ArticleText]]
) -> AttributionCheck:
    """
    Check each attributed article's body for the entity name.

    Args:
        attribution: Result of mention_attribution
        texts: URL -> body map, or ArticleText list from the corpus

    Returns:
        Articles split into confirmed, unconfirmed and missing-text lists
    """
    if not isinstance(texts, Mapping):
        texts = {t.document_identifier: t.body for t in texts if t.has_body}

    needle = normalize_label(attribution.entity)
    check = AttributionCheck(entity=attribution.entity)
    for url in attribution.articles:
        body = texts.get(url)
        if not body:
            check.missing_text.append(url)
        elif needle in normalize_label(body):
            check.confirmed.append(url)
        else:
            check.unconfirmed.append(url)

    logger.info(
        f"Attribution check for '{attribution.entity}': {len(check.confirmed)} confirmed, "
        f"{len(check.unconfirmed)} unconfirmed, {len(check.missing_text)} without text"
    )
    return check


def neighborhood(kg: KnowledgeGraph, node_id: str, radius: int) -> Subgraph:
    """Edges on undirected paths of length <= radius from node_id."""
    if not kg.has_node(node_id):
        raise NodeNotFoundError(f"unknown node: {node_id}", {'node': node_id})
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")

    visited = {node_id}
    frontier = [node_id]
    edge_ids: Dict[int, None] = {}
    for _ in range(radius):
        next_frontier = []
        for current in frontier:
            for edge in kg.incident_edges(current):
                edge_ids[edge.id] = None
                other = edge.target if edge.source == current else edge.source
                if other not in visited:
                    visited.add(other)
                    next_frontier.append(other)
        frontier = next_frontier
        if not frontier:
            break

    return Subgraph(kg, tuple(edge_ids))
