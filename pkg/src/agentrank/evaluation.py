"""Leave-last-out evaluation: metrics, candidate pools, experiment runner.

The protocol holds out each user's newest session interaction as ground
truth, builds a fixed-size candidate pool around it (retrieval negatives
plus seeded padding, then a seeded shuffle so position carries no hint),
runs every requested variant on the identical pool, and aggregates
NDCG@k / Hit@k per variant.  Aggregation is a pure function of the files
on disk, so a finished run can be re-aggregated byte-identically.
"""

from __future__ import annotations

import json
import math
import random
import warnings
from dataclasses import dataclass
from pathlib import Path

from .blackboard import serialize
from .config import (
    BASELINE_VARIANTS,
    ExperimentConfig,
    PipelineConfig,
    derive_seed,
)
from .corpus import (
    Catalog,
    EvalInstance,
    Interaction,
    build_contexts,
    holdout_split,
)
from .embed import HashEmbedder, VectorIndex, build_index, cosine, embed_user, retrieve_topk
from .errors import AgentRankError, DataError
from .llm import Backend
from .pipeline import run_variant
from .prompts import TemplateSet

SUMMARY_SCHEMA = "agentrank-summary-v1"


class MissingTruthWarning(UserWarning):
    """The ground-truth item was absent from a ranking being scored."""


class ReportMismatchWarning(UserWarning):
    """A recomputed improvement disagrees with a previously reported one."""


def ndcg_at_k(ranking: list[str], ground_truth: str, k: int = 5) -> float:
    """Binary-relevance NDCG@k with a single relevant item.

    The ideal DCG is 1, so the score reduces to 1/log2(rank+1) when the
    ground truth lands within the top k and 0 otherwise.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if ground_truth not in ranking:
        warnings.warn(
            f"ground truth {ground_truth!r} missing from ranking", MissingTruthWarning
        )
        return 0.0
    rank = ranking.index(ground_truth) + 1
    return 1.0 / math.log2(rank + 1) if rank <= k else 0.0


def hit_at_k(ranking: list[str], ground_truth: str, k: int = 5) -> float:
    """1.0 when the ground truth appears in the top k, else 0.0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if ground_truth not in ranking:
        warnings.warn(
            f"ground truth {ground_truth!r} missing from ranking", MissingTruthWarning
        )
        return 0.0
    return 1.0 if ranking.index(ground_truth) < k else 0.0


def relative_improvement(treatment: float, baseline: float) -> float:
    """Percentage improvement of treatment over baseline, 2 decimals."""
    if baseline <= 0.0:
        raise ValueError("baseline must be positive")
    return round(100.0 * (treatment - baseline) / baseline, 2)


def improvement_over_best_baseline(
    metrics: dict[str, float], treatment: str = "arag"
) -> float | None:
    """Treatment's gain over the strongest baseline present, or None when
    either side is missing."""
    if treatment not in metrics:
        return None
    baselines = [metrics[v] for v in BASELINE_VARIANTS if v in metrics]
    if not baselines:
        return None
    return relative_improvement(metrics[treatment], max(baselines))


def check_improvement_cell(computed: float, reported: float, atol: float = 0.005) -> bool:
    """Compare a recomputed improvement against a reported value.

    Returns True when they agree within ``atol`` percentage points;
    otherwise emits a ReportMismatchWarning carrying both numbers.
    """
    if abs(computed - reported) <= atol:
        return True
    warnings.warn(
        f"recomputed improvement {computed:.2f}% does not match reported {reported:.2f}%",
        ReportMismatchWarning,
    )
    return False


@dataclass
class CandidatePool:
    """Fixed candidate set for one evaluation instance.

    ``item_ids`` is the display order shown to rankers (seeded shuffle);
    ``prior`` is the same ids ordered by retrieval score, the fallback
    order used when a ranking response must be repaired.
    """

    ground_truth: str
    item_ids: list[str]
    prior: list[str]

    def __post_init__(self):
        if self.ground_truth not in self.item_ids:
            raise DataError("candidate pool must contain the ground truth")
        if sorted(self.item_ids) != sorted(self.prior):
            raise DataError("pool prior must order exactly the pool members")


def build_candidate_pool(
    instance: EvalInstance,
    catalog: Catalog,
    index: VectorIndex,
    embedder: HashEmbedder,
    cfg: PipelineConfig,
    master_seed: int | None = None,
    open_pool: bool = False,
) -> CandidatePool:
    """Assemble ground truth plus retrieval negatives into a shuffled pool.

    Negatives are the top retrieved items that are neither the ground truth
    nor already in the user's history (unless ``open_pool`` allows history
    repeats).  When retrieval cannot fill the pool, the remainder is drawn
    uniformly from the rest of the catalog with the per-user seed.
    """
    seed = cfg.seed if master_seed is None else master_seed
    pool_size = cfg.candidate_pool_size
    gt = instance.ground_truth
    history = set() if open_pool else {i.item_id for i in instance.context.interactions}
    excluded = history | {gt}

    query = embed_user(
        embedder,
        instance.context,
        catalog,
        max_items=cfg.max_history_items,
        max_reviews=cfg.max_reviews,
    )
    negatives: list[str] = []
    for item_id, _score in retrieve_topk(index, query, k=cfg.k):
        if item_id in excluded:
            continue
        negatives.append(item_id)
        if len(negatives) >= pool_size - 1:
            break

    rng = random.Random(derive_seed(seed, instance.context.user_id))
    if len(negatives) < pool_size - 1:
        taken = excluded | set(negatives)
        remainder = [item_id for item_id in catalog.ids() if item_id not in taken]
        needed = pool_size - 1 - len(negatives)
        if len(remainder) < needed:
            raise DataError(
                f"catalog has only {len(catalog)} items; cannot build a pool of "
                f"{pool_size} for user {instance.context.user_id!r}"
            )
        negatives.extend(rng.sample(remainder, needed))

    members = [gt] + negatives
    scores = {item_id: cosine(index.vector(item_id), query) for item_id in members}
    prior = sorted(members, key=lambda item_id: (-scores[item_id], item_id))
    display = list(members)
    rng.shuffle(display)
    return CandidatePool(ground_truth=gt, item_ids=display, prior=prior)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _variant_stats(records: list[dict], metric_k: int) -> dict:
    ndcgs = [ndcg_at_k(r["ranking"], r["ground_truth"], metric_k) for r in records]
    hits = [hit_at_k(r["ranking"], r["ground_truth"], metric_k) for r in records]
    return {"ndcg": _mean(ndcgs), "hit": _mean(hits), "n": len(records)}


def _load_ranking_records(out_dir: Path) -> dict[str, dict[str, dict]]:
    """variant -> user_id -> stored ranking record."""
    records: dict[str, dict[str, dict]] = {}
    rankings_dir = out_dir / "rankings"
    if not rankings_dir.is_dir():
        raise DataError(f"no rankings directory under {out_dir}")
    for variant_dir in sorted(p for p in rankings_dir.iterdir() if p.is_dir()):
        per_user = {}
        for path in sorted(variant_dir.glob("*.json")):
            record = json.loads(path.read_text(encoding="utf-8"))
            per_user[record["user_id"]] = record
        records[variant_dir.name] = per_user
    if not records:
        raise DataError(f"no ranking records found under {rankings_dir}")
    return records


def aggregate(out_dir: Path, metric_k: int = 5) -> dict:
    """Recompute the run summary from the ranking records on disk.

    Users are scored only if every variant produced a ranking for them, so
    all per-variant means are over the identical user set and a failure in
    one variant excludes the user everywhere.
    """
    out_dir = Path(out_dir)
    records = _load_ranking_records(out_dir)
    run_log = {"failures": [], "skipped_users": [], "users_total": None}
    log_path = out_dir / "failures.json"
    if log_path.exists():
        run_log.update(json.loads(log_path.read_text(encoding="utf-8")))

    common_users = None
    for per_user in records.values():
        users = set(per_user)
        common_users = users if common_users is None else common_users & users
    common_users = sorted(common_users or ())

    variants = {}
    for variant in sorted(records):
        kept = [records[variant][u] for u in common_users]
        variants[variant] = _variant_stats(kept, metric_k)

    ndcg_by_variant = {v: s["ndcg"] for v, s in variants.items()}
    hit_by_variant = {v: s["hit"] for v, s in variants.items()}
    failures = run_log["failures"]
    users_total = run_log["users_total"]
    if users_total is None:
        users_total = len(set().union(*(set(p) for p in records.values())))
    variants_attempted = set(records) | {f["variant"] for f in failures}
    attempted = users_total * len(variants_attempted)
    summary = {
        "schema": SUMMARY_SCHEMA,
        "metric_k": metric_k,
        "variants": variants,
        "improvement": {
            "ndcg_pct": improvement_over_best_baseline(ndcg_by_variant),
            "hit_pct": improvement_over_best_baseline(hit_by_variant),
        },
        "users_total": users_total,
        "users_evaluated": len(common_users),
        "skipped_users": sorted(run_log["skipped_users"]),
        "failures": sorted(failures, key=lambda f: (f["user_id"], f["variant"])),
        "failure_fraction": (len(failures) / attempted) if attempted else 0.0,
    }
    return summary


def render_report(summary: dict) -> str:
    """Human-readable companion to summary.json."""
    k = summary["metric_k"]
    lines = [
        "# Benchmark report",
        "",
        f"Users evaluated: {summary['users_evaluated']} of {summary['users_total']}",
        "",
        f"| Variant | NDCG@{k} | Hit@{k} |",
        "| --- | --- | --- |",
    ]
    for variant, stats in summary["variants"].items():
        lines.append(f"| {variant} | {stats['ndcg']:.4f} | {stats['hit']:.4f} |")
    improvement = summary["improvement"]
    if improvement["ndcg_pct"] is not None:
        lines += [
            "",
            (
                f"Agentic pipeline vs strongest baseline: "
                f"NDCG@{k} {improvement['ndcg_pct']:+.2f}%, "
                f"Hit@{k} {improvement['hit_pct']:+.2f}%."
            ),
        ]
    if summary["failures"]:
        lines += ["", f"Failures: {len(summary['failures'])} (see summary.json)."]
    lines.append("")
    return "\n".join(lines)


def write_summary(out_dir: Path, summary: dict) -> None:
    out_dir = Path(out_dir)
    payload = json.dumps(summary, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    (out_dir / "summary.json").write_text(payload, encoding="utf-8")
    (out_dir / "report.md").write_text(render_report(summary), encoding="utf-8")


def run_experiment(
    catalog: Catalog,
    log: list[Interaction],
    exp: ExperimentConfig,
    backend: Backend,
    templates: TemplateSet | None = None,
) -> dict:
    """Run every configured variant over every eligible user and write the
    experiment directory: traces, rankings, failure log, summary, report.

    Returns the summary dict.  Raises only on setup problems; per-user
    pipeline errors are recorded and excluded instead.
    """
    cfg = exp.pipeline
    templates = templates or TemplateSet.load(cfg.template_dir)
    out_dir = Path(exp.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    contexts = build_contexts(log, catalog, session_gap=cfg.session_gap)
    if exp.max_users is not None:
        contexts = contexts[: exp.max_users]
    if not contexts:
        raise DataError("no user contexts could be built from the interaction log")

    instances: list[EvalInstance] = []
    skipped: list[str] = []
    for context in contexts:
        try:
            instances.append(holdout_split(context))
        except DataError:
            skipped.append(context.user_id)

    if not instances:
        raise DataError("no users were eligible for leave-last-out evaluation")

    embedder = HashEmbedder(dim=cfg.embed_dim)
    index = build_index(catalog, embedder, max_reviews=cfg.max_reviews)

    failures: list[dict] = []
    for instance in instances:
        user_id = instance.context.user_id
        pool = build_candidate_pool(
            instance, catalog, index, embedder, cfg, open_pool=exp.open_catalog
        )
        candidates = [catalog.get(item_id) for item_id in pool.item_ids]
        for variant in exp.variants:
            variant_cfg = cfg.with_variant(variant)
            try:
                output = run_variant(
                    backend, catalog, templates, variant_cfg,
                    instance.context, candidates, retrieval_order=pool.prior,
                )
            except AgentRankError as exc:
                failures.append({"user_id": user_id, "variant": variant, "error": str(exc)})
                continue
            trace_dir = out_dir / "traces" / variant
            trace_dir.mkdir(parents=True, exist_ok=True)
            (trace_dir / f"{user_id}.jsonl").write_text(
                serialize(output.board), encoding="utf-8"
            )
            ranking = list(output.ranking.item_ids)
            record = {
                "user_id": user_id,
                "variant": variant,
                "ground_truth": pool.ground_truth,
                "pool": pool.item_ids,
                "ranking": ranking,
                "ndcg": ndcg_at_k(ranking, pool.ground_truth, cfg.metric_k),
                "hit": hit_at_k(ranking, pool.ground_truth, cfg.metric_k),
                "usage": output.usage,
            }
            ranking_dir = out_dir / "rankings" / variant
            ranking_dir.mkdir(parents=True, exist_ok=True)
            (ranking_dir / f"{user_id}.json").write_text(
                json.dumps(record, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                encoding="utf-8",
            )

    run_log = {
        "failures": sorted(failures, key=lambda f: (f["user_id"], f["variant"])),
        "skipped_users": sorted(skipped),
        "users_total": len(instances),
    }
    (out_dir / "failures.json").write_text(
        json.dumps(run_log, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )

    summary = aggregate(out_dir, metric_k=cfg.metric_k)
    write_summary(out_dir, summary)
    return summary
