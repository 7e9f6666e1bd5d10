"""Agentic retrieval-and-rank recommendation engine and benchmark harness.

A four-agent pipeline (user summary, per-item alignment judgement,
context summarization, final ranking) coordinates over an append-only
blackboard to rerank retrieved candidates, alongside recency and plain
retrieval-augmented baselines and a leave-last-out evaluation harness.
"""

from .agents import (
    AgentEnv,
    ContextSummary,
    NliJudgement,
    Ranking,
    UserSummary,
    filter_aligned,
    parse_ranking,
    run_csa,
    run_ira,
    run_nli,
    run_uua,
)
from .blackboard import Blackboard, Message, replay, serialize, validate_stages
from .config import (
    BASELINE_VARIANTS,
    VARIANTS,
    ExperimentConfig,
    PipelineConfig,
    derive_seed,
    load_experiment_config,
)
from .corpus import (
    Catalog,
    EvalInstance,
    Interaction,
    Item,
    UserContext,
    build_contexts,
    embedding_text,
    holdout_split,
    load_catalog,
    load_interactions,
    metadata_text,
)
from .embed import (
    HashEmbedder,
    VectorIndex,
    build_index,
    cosine,
    embed_user,
    load_index,
    retrieve_topk,
    save_index,
    tokenize,
)
from .errors import AgentRankError, BackendError, DataError, TraceError
from .evaluation import (
    CandidatePool,
    aggregate,
    build_candidate_pool,
    hit_at_k,
    improvement_over_best_baseline,
    ndcg_at_k,
    relative_improvement,
    run_experiment,
)
from .llm import (
    Backend,
    ChatRequest,
    ChatResponse,
    MockBackend,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    request_digest,
)
from .pipeline import (
    PipelineOutput,
    run_arag,
    run_recency,
    run_vanilla_rag,
    run_variant,
)
from .prompts import TemplateSet
from .synth import TokenOverlapBackend, build_separation_corpus, save_corpus

__version__ = "0.1.0"

__all__ = [
    "AgentEnv",
    "AgentRankError",
    "Backend",
    "BackendError",
    "BASELINE_VARIANTS",
    "Blackboard",
    "build_candidate_pool",
    "build_contexts",
    "build_index",
    "build_separation_corpus",
    "CandidatePool",
    "Catalog",
    "ChatRequest",
    "ChatResponse",
    "ContextSummary",
    "cosine",
    "DataError",
    "derive_seed",
    "embed_user",
    "embedding_text",
    "EvalInstance",
    "ExperimentConfig",
    "filter_aligned",
    "HashEmbedder",
    "hit_at_k",
    "holdout_split",
    "improvement_over_best_baseline",
    "Interaction",
    "Item",
    "load_catalog",
    "load_experiment_config",
    "load_index",
    "load_interactions",
    "Message",
    "metadata_text",
    "MockBackend",
    "ndcg_at_k",
    "NliJudgement",
    "parse_ranking",
    "PipelineConfig",
    "PipelineOutput",
    "Ranking",
    "RecordingBackend",
    "relative_improvement",
    "RemoteBackend",
    "replay",
    "ReplayBackend",
    "request_digest",
    "retrieve_topk",
    "run_arag",
    "run_csa",
    "run_experiment",
    "run_ira",
    "run_nli",
    "run_recency",
    "run_uua",
    "run_vanilla_rag",
    "run_variant",
    "save_corpus",
    "save_index",
    "serialize",
    "TemplateSet",
    "tokenize",
    "TokenOverlapBackend",
    "TraceError",
    "UserContext",
    "UserSummary",
    "validate_stages",
    "VectorIndex",
    "aggregate",
    "VARIANTS",
]
