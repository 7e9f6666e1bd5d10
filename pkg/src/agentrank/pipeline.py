"""Pipeline variants: the agentic ranker, its ablations, and two baselines.

Every variant consumes one user context plus a fixed candidate pool and
produces a guaranteed permutation of that pool.  The agentic variants run
the three-stage blackboard protocol (parallel user summary and alignment
scoring, then context summarization, then ranking); the baselines issue a
single ranking call with different history selection policies.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import prompts as P
from .agents import (
    AgentEnv,
    ContextSummary,
    NliJudgement,
    Ranking,
    TokenUsage,
    UserSummary,
    filter_aligned,
    parse_ranking,
    run_csa,
    run_ira,
    run_nli,
    run_uua,
)
from .blackboard import Blackboard, Message, now_ms
from .config import PipelineConfig
from .corpus import Catalog, Item, UserContext, embedding_text
from .embed import HashEmbedder
from .errors import DataError
from .llm import Backend, ChatRequest, complete
from .prompts import TemplateSet


@dataclass
class PipelineOutput:
    """Result of ranking one candidate pool for one user."""

    variant: str
    ranking: Ranking
    board: Blackboard
    usage: dict[str, int]
    wall_time_s: float


def _resolve_items(catalog: Catalog, candidate_ids: list[str]) -> list[Item]:
    return [catalog.get(cid) for cid in candidate_ids]


def _check_pool(candidates: list[Item]) -> None:
    if not candidates:
        raise DataError("candidate pool is empty")
    ids = [item.id for item in candidates]
    if len(set(ids)) != len(ids):
        raise DataError("candidate pool contains duplicate item ids")


def _run_agentic(
    backend: Backend,
    catalog: Catalog,
    templates: TemplateSet,
    cfg: PipelineConfig,
    context: UserContext,
    candidates: list[Item],
    retrieval_order: list[str] | None,
    use_nli: bool,
    use_csa: bool,
) -> PipelineOutput:
    _check_pool(candidates)
    start = time.perf_counter()
    board = Blackboard()
    env = AgentEnv(backend=backend, board=board, catalog=catalog, templates=templates, cfg=cfg)

    # Stage 1: the user summary and all alignment judgements are
    # independent, so they fan out across a bounded worker pool.
    judgements: list[NliJudgement] = []
    with ThreadPoolExecutor(max_workers=max(cfg.concurrency_cap, 1)) as pool:
        summary_future = pool.submit(run_uua, env, context)
        nli_futures = []
        if use_nli:
            nli_futures = [pool.submit(run_nli, env, item, context) for item in candidates]
        user_summary = summary_future.result()
        judgements = [f.result() for f in nli_futures]

    # Stage 2: summarize the accepted evidence.
    context_summary: ContextSummary | None = None
    if use_csa:
        if use_nli:
            accepted_ids = filter_aligned(judgements, cfg.theta, cfg.m_min)
            accepted = _resolve_items(catalog, accepted_ids)
            context_summary = run_csa(env, accepted, user_summary, judgements)
        else:
            context_summary = run_csa(env, list(candidates), user_summary, None)

    # Stage 3: rank the full pool.
    ranking = run_ira(env, user_summary, context_summary, candidates, retrieval_order)
    elapsed = time.perf_counter() - start
    variant = "arag" if use_nli else ("arag_no_nli" if use_csa else "arag_no_nli_no_csa")
    return PipelineOutput(
        variant=variant,
        ranking=ranking,
        board=board,
        usage=env.usage.as_dict(),
        wall_time_s=elapsed,
    )


def run_arag(
    backend: Backend,
    catalog: Catalog,
    templates: TemplateSet,
    cfg: PipelineConfig,
    context: UserContext,
    candidates: list[Item],
    retrieval_order: list[str] | None = None,
) -> PipelineOutput:
    """Full four-agent pipeline: summary, alignment filter, context, ranking."""
    return _run_agentic(
        backend, catalog, templates, cfg, context, candidates, retrieval_order,
        use_nli=True, use_csa=True,
    )


def _history_block_recency(
    catalog: Catalog, cfg: PipelineConfig, context: UserContext
) -> str:
    recent = context.newest_first()[: cfg.max_history_items]
    return P.interaction_lines(recent, catalog, cfg.max_reviews, cfg.prompt_item_chars)


def _history_block_similarity(
    catalog: Catalog, cfg: PipelineConfig, context: UserContext, candidates: list[Item]
) -> str:
    """History selected by cosine similarity to the candidate pool centroid."""
    embedder = HashEmbedder(dim=cfg.embed_dim)
    vectors = [embedder.embed_text(embedding_text(item, cfg.max_reviews)) for item in candidates]
    centroid = np.mean(np.stack(vectors), axis=0)
    norm = float(np.linalg.norm(centroid))
    scored = []
    for interaction in context.interactions:
        vec = embedder.embed_text(embedding_text(catalog.get(interaction.item_id), cfg.max_reviews))
        sim = 0.0 if norm == 0.0 else float(vec @ centroid) / norm
        scored.append((-sim, -interaction.timestamp, interaction.item_id, interaction))
    scored.sort(key=lambda entry: entry[:3])
    chosen = [entry[3] for entry in scored[: cfg.max_history_items]]
    return P.interaction_lines(chosen, catalog, cfg.max_reviews, cfg.prompt_item_chars)


def _run_baseline(
    backend: Backend,
    catalog: Catalog,
    templates: TemplateSet,
    cfg: PipelineConfig,
    candidates: list[Item],
    retrieval_order: list[str] | None,
    history_block: str,
    variant: str,
) -> PipelineOutput:
    _check_pool(candidates)
    start = time.perf_counter()
    board = Blackboard()
    usage = TokenUsage()
    candidate_ids = [item.id for item in candidates]
    if retrieval_order is None:
        retrieval_order = list(candidate_ids)
    prompt = templates.render(
        "baseline_rank",
        history_block=history_block,
        candidates_block=P.items_block(candidates, cfg.max_reviews, cfg.prompt_item_chars),
    )
    request = ChatRequest(
        messages=(("user", prompt),),
        temperature=cfg.temperature,
        max_tokens=512,
        model_tag=cfg.model_tag,
    )
    response = complete(backend, request, agent_role="item_ranker")
    usage.add(response)
    ordered = parse_ranking(response.text, candidate_ids, retrieval_order)
    ranking = Ranking(item_ids=tuple(ordered), explanation=response.text.strip())
    board.post(
        Message(
            id="s3-item_ranker",
            role="item_ranker",
            content=json.dumps(
                {
                    "ranking": list(ranking.item_ids),
                    "explanation": ranking.explanation,
                    "raw_response": response.text,
                    "candidates": candidate_ids,
                    "retrieval_order": retrieval_order,
                },
                ensure_ascii=False,
            ),
            timestamp=now_ms(),
            stage=3,
        )
    )
    elapsed = time.perf_counter() - start
    return PipelineOutput(
        variant=variant,
        ranking=ranking,
        board=board,
        usage=usage.as_dict(),
        wall_time_s=elapsed,
    )


def run_vanilla_rag(
    backend: Backend,
    catalog: Catalog,
    templates: TemplateSet,
    cfg: PipelineConfig,
    context: UserContext,
    candidates: list[Item],
    retrieval_order: list[str] | None = None,
) -> PipelineOutput:
    """Single-call baseline whose history is chosen by embedding similarity
    to the candidate pool centroid."""
    block = _history_block_similarity(catalog, cfg, context, candidates)
    return _run_baseline(
        backend, catalog, templates, cfg, candidates, retrieval_order, block, "vanilla_rag"
    )


def run_recency(
    backend: Backend,
    catalog: Catalog,
    templates: TemplateSet,
    cfg: PipelineConfig,
    context: UserContext,
    candidates: list[Item],
    retrieval_order: list[str] | None = None,
) -> PipelineOutput:
    """Single-call baseline whose history is simply the newest interactions."""
    block = _history_block_recency(catalog, cfg, context)
    return _run_baseline(
        backend, catalog, templates, cfg, candidates, retrieval_order, block, "recency"
    )


def run_variant(
    backend: Backend,
    catalog: Catalog,
    templates: TemplateSet,
    cfg: PipelineConfig,
    context: UserContext,
    candidates: list[Item],
    retrieval_order: list[str] | None = None,
) -> PipelineOutput:
    """Dispatch on ``cfg.variant``; every branch returns a permutation of
    the same pool, so results are directly comparable."""
    variant = cfg.variant
    if variant == "arag":
        return run_arag(backend, catalog, templates, cfg, context, candidates, retrieval_order)
    if variant == "arag_no_nli":
        return _run_agentic(
            backend, catalog, templates, cfg, context, candidates, retrieval_order,
            use_nli=False, use_csa=True,
        )
    if variant == "arag_no_nli_no_csa":
        return _run_agentic(
            backend, catalog, templates, cfg, context, candidates, retrieval_order,
            use_nli=False, use_csa=False,
        )
    if variant == "vanilla_rag":
        return run_vanilla_rag(
            backend, catalog, templates, cfg, context, candidates, retrieval_order
        )
    if variant == "recency":
        return run_recency(backend, catalog, templates, cfg, context, candidates, retrieval_order)
    raise DataError(f"unknown variant: {variant!r}")
