"""
GDELT KG-QA Dashboard
Main entry point for the Streamlit app: evaluation results and a DKG explorer.
"""
import json
import streamlit as st
import pandas as pd
import plotly.graph_objects as go
import plotly.express as px
from pathlib import Path
import sys
import os

# Add parent directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.common.errors import PipelineError
from src.graph import query
from src.graph.builder import graph_stats
from src.graph.storage import load_graph

DEFAULT_OUTPUT = Path(__file__).resolve().parents[1] / "data" / "output"

# Page config
st.set_page_config(
    page_title="GDELT KG-QA Dashboard",
    page_icon="🕸️",
    layout="wide",
    initial_sidebar_state="expanded"
)


@st.cache_resource
def get_graph(path: str):
    """Load a saved DKG"""
    try:
        return load_graph(Path(path))
    except (PipelineError, FileNotFoundError) as e:
        st.error(f"Failed to load graph: {e}")
        return None


@st.cache_data(ttl=600)
def get_report(path: str) -> dict:
    """Read report.json written by `eval`"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, ValueError) as e:
        st.error(f"Failed to read report: {e}")
        return {}


# Sidebar
st.sidebar.title("🕸️ GDELT KG-QA")
st.sidebar.markdown("---")

output_dir = Path(st.sidebar.text_input("Output directory", str(DEFAULT_OUTPUT)))

page = st.sidebar.radio(
    "Navigate",
    ["🏠 Home", "📊 Evaluation", "🔎 Graph Explorer"]
)

if page == "🏠 Home":
    st.title("🕸️ GDELT Knowledge Graph QA")
    st.markdown("### Graph queries vs. vector retrieval on a GDELT case study")

    kg = get_graph(str(output_dir / "kg.json"))
    report = get_report(str(output_dir / "reports" / "report.json"))

    col1, col2, col3 = st.columns(3)
    if kg is not None:
        stats = graph_stats(kg)
        col1.metric("DKG Nodes", f"{stats['nodes']:,}")
        col2.metric("DKG Edges", f"{stats['edges']:,}")
    col3.metric("Scored Answers", len(report.get('scores', [])))

    st.markdown("---")
    st.markdown("#### 📊 Data Pipeline")
    st.markdown("""
    1. **Ingest**: GDELT events, mentions and GKG tables, filtered by keyword
    2. **Fetch**: Article text for every article in the subset
    3. **Build**: Direct knowledge graph (DKG) and a vector store of article chunks
    4. **Answer**: Each benchmark question through graph queries, vector RAG and the bare LLM
    5. **Evaluate**: Cosine similarity of every answer to its ground truth
    """)
    st.caption("Run `python scripts/run_pipeline.py` to populate the output directory.")

elif page == "📊 Evaluation":
    st.title("📊 Answer Similarity")

    report = get_report(str(output_dir / "reports" / "report.json"))
    summaries = pd.DataFrame(report.get('summaries', []))
    scores = pd.DataFrame(report.get('scores', []))

    if summaries.empty:
        st.warning("No evaluation report found")
    else:
        methods = st.multiselect("Methods", list(summaries['method']), default=list(summaries['method']))
        shown = summaries[summaries['method'].isin(methods)]

        # Boxes come straight from the five-number summaries
        fig = go.Figure()
        for _, row in shown.iterrows():
            fig.add_trace(go.Box(
                name=row['method'],
                q1=[row['q1']],
                median=[row['median']],
                q3=[row['q3']],
                lowerfence=[row['min']],
                upperfence=[row['max']],
            ))
        fig.update_layout(
            title=f"Cosine similarity by method ({report.get('quartile_convention')})",
            yaxis_title="cosine similarity",
            showlegend=False,
            height=500,
        )
        st.plotly_chart(fig, use_container_width=True)

        st.subheader("Summary")
        st.dataframe(shown, use_container_width=True)

        if not scores.empty:
            st.subheader("Scores per question")
            grid = scores[scores['method'].isin(methods)].pivot_table(
                index='question_id', columns='method', values='cosine_similarity', aggfunc='first'
            )
            st.dataframe(grid.style.format("{:.3f}"), use_container_width=True)

            refusals = scores[scores['refusal'] & scores['method'].isin(methods)]
            if not refusals.empty:
                st.caption(f"{len(refusals)} answers were refusals (scored, but flagged)")

elif page == "🔎 Graph Explorer":
    st.title("🔎 DKG Explorer")

    kg = get_graph(str(output_dir / "kg.json"))
    if kg is None:
        st.warning("No graph found")
    else:
        col1, col2 = st.columns([1, 2])

        with col1:
            st.subheader("Top themes")
            k = st.slider("How many", min_value=1, max_value=20, value=5)
            themes = pd.DataFrame(query.top_themes(kg, k), columns=['theme', 'articles'])
            fig = px.bar(themes, x='articles', y='theme', orientation='h')
            fig.update_layout(yaxis={'categoryorder': 'total ascending'}, height=400)
            st.plotly_chart(fig, use_container_width=True)

            source = st.text_input("Count articles by source", "cnn")
            if source:
                st.metric(f"Articles from '{source}'", query.count_articles_by_source(kg, source))

        with col2:
            st.subheader("Keyword subgraph")
            keywords = st.text_input("Keywords (comma-separated)", "Bridge, Collapse, River")
            words = [w.strip() for w in keywords.split(',') if w.strip()]
            if words:
                subgraph = query.keyword_edge_search(kg, words)
                st.markdown(f"**{len(subgraph)}** edges, **{len(subgraph.nodes)}** nodes")
                st.dataframe(
                    pd.DataFrame([{'edge': s.edge_id, 'sentence': s.sentence} for s in subgraph.sentences()]),
                    use_container_width=True, height=400
                )

            st.subheader("Who mentioned whom")
            entity = st.text_input("Person or organization", "Niki Fennoy")
            if entity:
                attribution = query.mention_attribution(kg, entity)
                st.write(f"{attribution.count} articles mention {attribution.entity}")
                for url in attribution.articles:
                    st.markdown(f"- {url}")
