"""
GDELT KG-QA Pipeline - Airflow DAG
Downloads a day of GDELT 2.0 dumps, filters the case-study subset, builds the
knowledge graph and vector store, runs the question benchmark and scores it.
"""
from datetime import datetime, timedelta
from pathlib import Path
from airflow import DAG
from airflow.exceptions import AirflowException
from airflow.operators.python import PythonOperator
from airflow.operators.empty import EmptyOperator
import sys
import os

# Add src to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.cli import run
from src.common.logging import setup_logger

logger = setup_logger(__name__)

# Default arguments
default_args = {
    'owner': 'kgqa_team',
    'depends_on_past': False,
    'email_on_failure': False,
    'email_on_retry': False,
    'retries': 2,
    'retry_delay': timedelta(minutes=5),
}

AIRFLOW_HOME = Path('/usr/local/airflow')
CONFIG_PATH = AIRFLOW_HOME / 'config' / 'pipeline.yaml'
DATA_ROOT = AIRFLOW_HOME / 'data' / 'runs'


def _workdir(context) -> Path:
    return DATA_ROOT / context['ds_nodash']


def _run_stage(argv):
    """Run one CLI stage; a non-zero exit fails the task."""
    argv = [*argv, '--config', str(CONFIG_PATH)]
    logger.info(f"Running stage: {' '.join(argv)}")
    code = run(argv)
    if code != 0:
        raise AirflowException(f"Stage {argv[0]} exited with code {code}")


def download_dumps(**context):
    day = context['ds_nodash']
    _run_stage(['download', '--start', f"{day}000000", '--end', f"{day}234500",
                '--out', str(_workdir(context) / 'raw')])


def ingest_subset(**context):
    raw = _workdir(context) / 'raw'
    _run_stage([
        'ingest',
        '--events', *sorted(str(p) for p in raw.glob('*.export.CSV')),
        '--mentions', *sorted(str(p) for p in raw.glob('*.mentions.CSV')),
        '--gkg', *sorted(str(p) for p in raw.glob('*.gkg.csv')),
        '--out', str(_workdir(context) / 'subset'),
    ])


def fetch_articles(**context):
    work = _workdir(context)
    _run_stage(['fetch', '--subset', str(work / 'subset'), '--out', str(work / 'corpus')])


def build_graph(**context):
    work = _workdir(context)
    _run_stage(['build-kg', '--subset', str(work / 'subset'), '--out', str(work / 'kg.json'),
                '--skip-unresolved'])


def index_corpus(**context):
    work = _workdir(context)
    _run_stage(['index', '--corpus', str(work / 'corpus'), '--out', str(work / 'store.json')])


def run_bench(**context):
    work = _workdir(context)
    _run_stage(['bench', '--kg', str(work / 'kg.json'), '--store', str(work / 'store.json'),
                '--out', str(work / 'bench')])


def evaluate_runs(**context):
    work = _workdir(context)
    runs = sorted((work / 'bench').iterdir())
    if not runs:
        raise AirflowException(f"No benchmark runs under {work / 'bench'}")
    argv = ['eval', '--out', str(work / 'reports')]
    for run_dir in runs:
        argv += ['--run', str(run_dir)]
    _run_stage(argv)


# Define DAG
with DAG(
    dag_id='gdelt_kgqa_pipeline_dag',
    default_args=default_args,
    description='Build a GDELT knowledge graph and benchmark graph vs. vector-RAG question answering',
    schedule='0 3 * * *',  # 3 AM daily, after GDELT's last dump of the day
    start_date=datetime(2024, 3, 26),
    catchup=False,
    tags=['gdelt', 'knowledge-graph', 'llm', 'rag'],
) as dag:

    start = EmptyOperator(task_id='start')

    download = PythonOperator(task_id='download_gdelt_dumps', python_callable=download_dumps)
    ingest = PythonOperator(task_id='ingest_subset', python_callable=ingest_subset)
    fetch = PythonOperator(task_id='fetch_articles', python_callable=fetch_articles)

    # Graph and vector store build independently
    build_kg = PythonOperator(task_id='build_kg', python_callable=build_graph)
    index = PythonOperator(task_id='index_corpus', python_callable=index_corpus)

    bench = PythonOperator(task_id='run_benchmark', python_callable=run_bench)
    evaluate = PythonOperator(task_id='evaluate_answers', python_callable=evaluate_runs)

    end = EmptyOperator(task_id='end')

    start >> download >> ingest
    ingest >> build_kg
    ingest >> fetch >> index
    [build_kg, index] >> bench >> evaluate >> end
