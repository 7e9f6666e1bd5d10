"""Run one synthetic user through the full agentic pipeline.

The deterministic mock backend stands in for a chat model, so the run is
reproducible and free.  Prints every blackboard message in canonical
order, then compares the agentic ranking against the recency baseline.
"""

import json

from agentrank import (
    HashEmbedder,
    PipelineConfig,
    TemplateSet,
    TokenOverlapBackend,
    build_candidate_pool,
    build_contexts,
    build_index,
    build_separation_corpus,
    holdout_split,
    run_variant,
)

catalog, log = build_separation_corpus(num_users=3)
cfg = PipelineConfig(max_history_items=16, candidate_pool_size=10, k=50)

contexts = build_contexts(log, catalog, session_gap=cfg.session_gap)
instance = holdout_split(next(c for c in contexts if c.user_id == "u000"))
print(f"user u000: {len(instance.context.interactions)} past interactions,")
print(f"held-out ground truth: {instance.ground_truth}")

embedder = HashEmbedder(dim=cfg.embed_dim)
index = build_index(catalog, embedder)
pool = build_candidate_pool(instance, catalog, index, embedder, cfg)
candidates = [catalog.get(i) for i in pool.item_ids]
print(f"candidate pool of {len(candidates)}, retrieval prior leads with {pool.prior[0]}")

templates = TemplateSet.load()
backend = TokenOverlapBackend()


def show(variant: str):
    out = run_variant(
        backend, catalog, templates, cfg.with_variant(variant),
        instance.context, candidates, retrieval_order=pool.prior,
    )
    print(f"\n--- {variant} ---")
    for m in out.board.read():
        score = "" if m.score is None else f" score={m.score:.4f}"
        body = m.content if len(m.content) <= 72 else m.content[:69] + "..."
        print(f"  stage {m.stage} {m.role:<18} {m.id}{score}")
        print(f"      {body}")
    ranking = out.ranking.item_ids
    print("  ranking: " + json.dumps(ranking[:5]))
    print(f"  ground truth at rank {ranking.index(pool.ground_truth) + 1}")
    return out


agentic = show("arag")
baseline = show("recency")

print("\nthe NLI gate is what keeps look-alike history items from outranking")
print("the session's actual continuation:")
for m in agentic.board.read(role="nli"):
    payload = json.loads(m.content)
    print(f"  {m.score:.4f}  {payload['item_id']}")
