"""Pipeline and experiment configuration.

One structured JSON config file drives every run; CLI flags override
individual fields.  API keys never live here, only the name of the
environment variable that holds them, so configs and manifests stay
shareable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict, replace
from pathlib import Path

from .errors import DataError

VARIANTS = ("arag", "arag_no_nli", "arag_no_nli_no_csa", "vanilla_rag", "recency")
BASELINE_VARIANTS = ("vanilla_rag", "recency")
BACKEND_KINDS = ("remote", "mock", "replay", "record")


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for a single pipeline run or a full experiment."""

    k: int = 50
    theta: float = 0.5
    m_min: int = 3
    candidate_pool_size: int = 20
    max_history_items: int = 10
    variant: str = "arag"
    seed: int = 0
    concurrency_cap: int = 4
    embed_dim: int = 256
    max_reviews: int = 3
    session_gap: float = 3600.0
    metric_k: int = 5
    prompt_item_chars: int = 300
    temperature: float = 0.0
    model_tag: str = "gpt-3.5-turbo"
    failure_limit: float = 0.1
    template_dir: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DataError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if not (0.0 <= self.theta <= 1.0):
            raise DataError("theta must be in [0, 1]")
        if self.candidate_pool_size < 1:
            raise DataError("candidate_pool_size must be >= 1")
        if self.k < self.candidate_pool_size:
            raise DataError("k must be >= candidate_pool_size when pooling from recall")
        if self.m_min < 0:
            raise DataError("m_min must be >= 0")
        if self.concurrency_cap < 1:
            raise DataError("concurrency_cap must be >= 1")
        if self.metric_k < 1:
            raise DataError("metric_k must be >= 1")

    def with_variant(self, variant: str) -> "PipelineConfig":
        return replace(self, variant=variant)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {key: value for key, value in data.items() if key in known}
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise DataError(f"bad config: {exc}") from None


@dataclass
class ExperimentConfig:
    """Everything a full experiment run needs beyond the pipeline knobs."""

    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    catalog_path: str = ""
    interactions_path: str = ""
    out_dir: str = "runs/latest"
    variants: tuple[str, ...] = VARIANTS
    backend: str = "mock"
    base_url: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    cassette_path: str | None = None
    record_source: str = "remote"
    open_catalog: bool = False
    max_users: int | None = None

    def __post_init__(self):
        self.variants = tuple(self.variants)
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise DataError(f"unknown variants: {', '.join(unknown)}")
        if self.backend not in BACKEND_KINDS:
            raise DataError(f"unknown backend {self.backend!r}; expected one of {', '.join(BACKEND_KINDS)}")
        if self.record_source not in ("remote", "mock"):
            raise DataError("record_source must be 'remote' or 'mock'")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["variants"] = list(self.variants)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        pipeline = PipelineConfig.from_dict(data.pop("pipeline", {}))
        known = {f for f in cls.__dataclass_fields__ if f != "pipeline"}
        kwargs = {key: value for key, value in data.items() if key in known}
        try:
            return cls(pipeline=pipeline, **kwargs)
        except TypeError as exc:
            raise DataError(f"bad config: {exc}") from None


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed config JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_dict(data)


def derive_seed(master_seed: int, user_id: str) -> int:
    """Per-user seed, stable across runs and user subsets."""
    digest = hashlib.sha256(f"{master_seed}:{user_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
