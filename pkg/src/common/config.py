"""
Pipeline configuration - single source of truth for endpoints, caps and paths.

Reads config/pipeline.yaml and layers environment variables and CLI flags on
top of it. Precedence: flags > environment > config file > defaults.
Secrets never live in the file: each endpoint names the environment variable
that holds its API key.
"""
import copy
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import yaml

from src.common.errors import ConfigurationError

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = PROJECT_ROOT / "config" / "pipeline.yaml"

DEFAULTS: Dict[str, Any] = {
    'stub': False,
    'retries': 2,
    'max_workers': 4,
    'chat': {
        'base_url': 'http://localhost:8000/v1',
        'model': 'Mistral-7B',
        'api_key_env': 'OPENAI_API_KEY',
        'timeout': 120.0,
        'temperature': 0.0,
        'max_output_tokens': 512,
    },
    'retrieval_embedder': {
        'base_url': 'http://localhost:8001/v1',
        'model': 'E5-large-v2',
        'api_key_env': 'OPENAI_API_KEY',
        'timeout': 60.0,
        'batch_size': 32,
    },
    'eval_embedder': {
        'base_url': 'http://localhost:8002/v1',
        'model': 'sentence-transformers/all-MiniLM-L6-v2',
        'api_key_env': 'OPENAI_API_KEY',
        'timeout': 60.0,
        'batch_size': 32,
    },
    'caps': {
        'k': 5,
        'max_sentences': 500,
        'max_chunks': 20,
        'chunk_tokens': 500,
    },
    'fetch': {
        'timeout': 10.0,
        'max_bytes': 2_000_000,
        'max_redirects': 5,
        'per_host_limit': 1,
        'max_workers': 4,
        'min_interval': 1.0,
        'user_agent': 'gdelt-kgqa/0.1 (+research; article text for retrieval experiments)',
    },
    'filter': {
        'keywords': ['Baltimore', 'bridge', 'collapse', 'ship'],
        'case_sensitive': False,
    },
    'paths': {
        'schema': 'config/gdelt_schema.yaml',
        'ontology': 'config/ontology.yaml',
        'questions': 'config/questions.yaml',
        'ground_truth': 'config/ground_truth.yaml',
        'external_answers': 'config/external_answers.yaml',
    },
    'refusal_patterns': [
        "i don't know",
        "i cannot directly answer",
        "not provided",
        "not mentioned",
        "not present in the given data",
        "don't have enough information",
    ],
}


def _parse_bool(value: str) -> bool:
    return str(value).strip().lower() in ('1', 'true', 'yes', 'on')


# Environment variable -> (dotted config key, parser)
ENV_KEYS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    'GDELT_KGQA_STUB': ('stub', _parse_bool),
    'GDELT_KGQA_CHAT_BASE_URL': ('chat.base_url', str),
    'GDELT_KGQA_CHAT_MODEL': ('chat.model', str),
    'GDELT_KGQA_EMBED_BASE_URL': ('retrieval_embedder.base_url', str),
    'GDELT_KGQA_EMBED_MODEL': ('retrieval_embedder.model', str),
    'GDELT_KGQA_EVAL_EMBED_BASE_URL': ('eval_embedder.base_url', str),
    'GDELT_KGQA_EVAL_EMBED_MODEL': ('eval_embedder.model', str),
    'GDELT_KGQA_K': ('caps.k', int),
    'GDELT_KGQA_MAX_SENTENCES': ('caps.max_sentences', int),
    'GDELT_KGQA_MAX_CHUNKS': ('caps.max_chunks', int),
}


@dataclass
class EndpointConfig:
    """One OpenAI-compatible endpoint (chat or embeddings)."""
    base_url: str
    model: str
    api_key_env: str = 'OPENAI_API_KEY'
    timeout: float = 60.0
    temperature: float = 0.0
    max_output_tokens: int = 512
    batch_size: int = 32

    def api_key(self, env: Optional[Mapping[str, str]] = None) -> Optional[str]:
        env = os.environ if env is None else env
        return env.get(self.api_key_env) if self.api_key_env else None


@dataclass
class Caps:
    k: int = 5
    max_sentences: int = 500
    max_chunks: int = 20
    chunk_tokens: int = 500


@dataclass
class FetchSettings:
    timeout: float = 10.0
    max_bytes: int = 2_000_000
    max_redirects: int = 5
    per_host_limit: int = 1
    max_workers: int = 4
    min_interval: float = 1.0
    user_agent: str = DEFAULTS['fetch']['user_agent']


@dataclass
class FilterDefaults:
    keywords: List[str] = field(default_factory=list)
    case_sensitive: bool = False


@dataclass
class Paths:
    schema: Path
    ontology: Path
    questions: Path
    ground_truth: Path
    external_answers: Path


@dataclass
class Config:
    chat: EndpointConfig
    retrieval_embedder: EndpointConfig
    eval_embedder: EndpointConfig
    caps: Caps
    fetch: FetchSettings
    filter: FilterDefaults
    paths: Paths
    stub: bool = False
    retries: int = 2
    max_workers: int = 4
    refusal_patterns: List[str] = field(default_factory=list)

    def validate(self) -> None:
        """Check cross-field invariants; raises ConfigurationError."""
        if not self.stub:
            for name in ('chat', 'retrieval_embedder', 'eval_embedder'):
                endpoint = getattr(self, name)
                if not endpoint.base_url:
                    raise ConfigurationError("live endpoint needs a base_url", {'endpoint': name})
                if not endpoint.api_key_env:
                    raise ConfigurationError(
                        "live endpoint needs a key source (api_key_env)", {'endpoint': name}
                    )
        for name, value in asdict(self.caps).items():
            if int(value) < 1:
                raise ConfigurationError(f"caps.{name} must be >= 1", {'value': value})
        if self.retries < 0:
            raise ConfigurationError("retries must be >= 0", {'value': self.retries})
        if self.fetch.timeout <= 0:
            raise ConfigurationError("fetch.timeout must be > 0", {'value': self.fetch.timeout})

    def to_manifest(self) -> Dict[str, Any]:
        """Configuration snapshot for run manifests (paths as text, no secrets)."""
        snapshot = asdict(self)
        snapshot['paths'] = {k: str(v) for k, v in snapshot['paths'].items()}
        return snapshot


def _deep_merge(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value
    return base


def _set_dotted(target: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split('.')
    node = target
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def _resolve_path(value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else PROJECT_ROOT / path


def read_config_file(config_path: Path) -> Dict[str, Any]:
    """
    Read the pipeline YAML document.

    Args:
        config_path: Path to pipeline.yaml

    Returns:
        Raw configuration mapping (may be partial)
    """
    config_path = Path(config_path)
    if not config_path.exists():
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        raw = yaml.safe_load(f) or {}

    if not isinstance(raw, dict):
        raise ConfigurationError("config file must be a mapping", {'path': str(config_path)})
    return raw


def load_config(
    config_path: Optional[Path] = None,
    env: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None
) -> Config:
    """
    Build the effective configuration.

    Args:
        config_path: YAML file; defaults to config/pipeline.yaml when it exists
        env: Environment mapping (default: os.environ)
        overrides: Dotted-key values from CLI flags; None values are ignored

    Returns:
        Validated Config
    """
    env = os.environ if env is None else env
    merged = copy.deepcopy(DEFAULTS)

    if config_path is not None:
        _deep_merge(merged, read_config_file(config_path))
    elif DEFAULT_CONFIG_PATH.exists():
        _deep_merge(merged, read_config_file(DEFAULT_CONFIG_PATH))

    for variable, (dotted, parse) in ENV_KEYS.items():
        if env.get(variable) not in (None, ''):
            try:
                _set_dotted(merged, dotted, parse(env[variable]))
            except ValueError as e:
                raise ConfigurationError(f"bad value in {variable}: {e}") from e

    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(merged, dotted, value)

    try:
        config = Config(
            chat=EndpointConfig(**merged['chat']),
            retrieval_embedder=EndpointConfig(**merged['retrieval_embedder']),
            eval_embedder=EndpointConfig(**merged['eval_embedder']),
            caps=Caps(**merged['caps']),
            fetch=FetchSettings(**merged['fetch']),
            filter=FilterDefaults(**merged['filter']),
            paths=Paths(**{k: _resolve_path(v) for k, v in merged['paths'].items()}),
            stub=bool(merged['stub']),
            retries=int(merged['retries']),
            max_workers=int(merged['max_workers']),
            refusal_patterns=list(merged['refusal_patterns']),
        )
    except TypeError as e:
        raise ConfigurationError(f"unknown or missing configuration key: {e}") from e

    config.validate()
    return config
