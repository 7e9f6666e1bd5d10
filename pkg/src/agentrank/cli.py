"""Command-line entry points: ingest, run, eval, replay.

``ingest`` validates a corpus and precomputes its vector index, ``run``
ranks one user's candidate pool and prints the ranking plus its trace
path, ``eval`` runs the configured variants over every eligible user and
writes summary.json / report.md, and ``replay`` re-prints the final
ranking stored in a trace after validating it.

Exit codes are part of the interface: 0 success, 1 usage error, 2 data
error, 3 backend error, 4 too many per-user failures.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from .blackboard import replay as replay_trace
from .blackboard import serialize, validate_stages
from .config import BACKEND_KINDS, VARIANTS, ExperimentConfig, load_experiment_config
from .corpus import build_contexts, holdout_split, load_catalog, load_interactions
from .embed import HashEmbedder, build_index, save_index
from .errors import BackendError, DataError, TraceError
from .evaluation import aggregate, build_candidate_pool, run_experiment, write_summary
from .llm import Backend, RecordingBackend, RemoteBackend, ReplayBackend
from .pipeline import run_variant
from .prompts import TemplateSet
from .synth import TokenOverlapBackend

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3
EXIT_FAILURES = 4


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("agentrank")
    except Exception:
        return "0.0.0"


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this interface promises 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_backend(exp: ExperimentConfig) -> Backend:
    kind = exp.backend
    if kind == "mock":
        return TokenOverlapBackend()
    if kind == "remote":
        return RemoteBackend(exp.base_url, api_key_env=exp.api_key_env)
    if kind == "replay":
        if not exp.cassette_path:
            raise DataError("replay backend needs cassette_path")
        return ReplayBackend(exp.cassette_path)
    if kind == "record":
        if not exp.cassette_path:
            raise DataError("record backend needs cassette_path")
        if exp.record_source == "remote":
            source: Backend = RemoteBackend(exp.base_url, api_key_env=exp.api_key_env)
        else:
            source = TokenOverlapBackend()
        return RecordingBackend(source, exp.cassette_path)
    raise DataError(f"unknown backend {kind!r}; expected one of {', '.join(BACKEND_KINDS)}")


def _print_summary(summary: dict) -> None:
    k = summary["metric_k"]
    print(f"users evaluated: {summary['users_evaluated']} of {summary['users_total']}")
    for variant, stats in summary["variants"].items():
        print(f"  {variant:<20} NDCG@{k} {stats['ndcg']:.4f}  Hit@{k} {stats['hit']:.4f}")
    improvement = summary["improvement"]
    if improvement["ndcg_pct"] is not None:
        print(
            f"  improvement over best baseline: NDCG@{k} {improvement['ndcg_pct']:+.2f}%, "
            f"Hit@{k} {improvement['hit_pct']:+.2f}%"
        )
    if summary["failures"]:
        print(f"  failures: {len(summary['failures'])}")


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    exp = load_experiment_config(args.config)
    base = Path(args.config).parent
    for attr in ("catalog_path", "interactions_path"):
        value = getattr(exp, attr)
        if value and not Path(value).is_absolute():
            setattr(exp, attr, str(base / value))

    pipeline = exp.pipeline
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "pool_size", None) is not None:
        updates["candidate_pool_size"] = args.pool_size
    if getattr(args, "k", None) is not None:
        updates["k"] = args.k
    if getattr(args, "theta", None) is not None:
        updates["theta"] = args.theta
    if updates:
        pipeline = replace(pipeline, **updates)
    exp.pipeline = pipeline
    if getattr(args, "backend", None) is not None:
        exp.backend = args.backend
    if getattr(args, "out", None) is not None:
        exp.out_dir = args.out
    if getattr(args, "cassette", None) is not None:
        exp.cassette_path = args.cassette
    if getattr(args, "max_users", None) is not None:
        exp.max_users = args.max_users
    if getattr(args, "variant", None) is not None:
        exp.variants = (args.variant,)
    exp = ExperimentConfig.from_dict(exp.to_dict())
    if not exp.catalog_path or not exp.interactions_path:
        raise DataError("config must set catalog_path and interactions_path")
    return exp


def cmd_ingest(args: argparse.Namespace) -> int:
    catalog = load_catalog(args.catalog)
    log = load_interactions(args.interactions)
    contexts = build_contexts(log, catalog, session_gap=args.session_gap)
    eligible = 0
    for context in contexts:
        try:
            holdout_split(context)
            eligible += 1
        except DataError:
            continue
    embedder = HashEmbedder(dim=args.embed_dim)
    index = build_index(catalog, embedder, max_reviews=args.max_reviews)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_index(index, out_dir / "index.jsonl")
    stats = {
        "items": len(catalog),
        "interactions": len(log),
        "users": len(contexts),
        "eligible_users": eligible,
        "embed_dim": args.embed_dim,
        "catalog_sha256": _sha256_file(Path(args.catalog)),
        "interactions_sha256": _sha256_file(Path(args.interactions)),
    }
    (out_dir / "ingest.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"ingested {stats['items']} items, {stats['interactions']} interactions, "
        f"{stats['users']} users ({eligible} eligible); index at {out_dir / 'index.jsonl'}"
    )
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    exp = _load_config(args)
    catalog = load_catalog(exp.catalog_path)
    log = load_interactions(exp.interactions_path)
    cfg = exp.pipeline
    if args.variant is not None:
        cfg = cfg.with_variant(args.variant)

    contexts = build_contexts(log, catalog, session_gap=cfg.session_gap)
    by_user = {context.user_id: context for context in contexts}
    if args.user not in by_user:
        raise DataError(f"unknown user {args.user!r}; log has {len(by_user)} users")
    instance = holdout_split(by_user[args.user])

    embedder = HashEmbedder(dim=cfg.embed_dim)
    index = build_index(catalog, embedder, max_reviews=cfg.max_reviews)
    pool = build_candidate_pool(
        instance, catalog, index, embedder, cfg, open_pool=exp.open_catalog
    )
    candidates = [catalog.get(item_id) for item_id in pool.item_ids]
    backend = build_backend(exp)
    templates = TemplateSet.load(cfg.template_dir)
    output = run_variant(
        backend, catalog, templates, cfg, instance.context, candidates,
        retrieval_order=pool.prior,
    )

    out_dir = Path(exp.out_dir)
    trace_dir = out_dir / "traces" / cfg.variant
    trace_dir.mkdir(parents=True, exist_ok=True)
    trace_path = trace_dir / f"{args.user}.jsonl"
    trace_path.write_text(serialize(output.board), encoding="utf-8")

    print(f"user: {args.user}  variant: {cfg.variant}  ground truth: {pool.ground_truth}")
    print("ranking (best first):")
    for rank, item_id in enumerate(output.ranking.item_ids, start=1):
        marker = "  <- ground truth" if item_id == pool.ground_truth else ""
        print(f"  {rank:>2}. {item_id}{marker}")
    print(f"trace: {trace_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    exp = _load_config(args)
    out_dir = Path(exp.out_dir)
    if args.from_records:
        summary = aggregate(out_dir, metric_k=exp.pipeline.metric_k)
        write_summary(out_dir, summary)
        _print_summary(summary)
        return EXIT_OK

    catalog = load_catalog(exp.catalog_path)
    log = load_interactions(exp.interactions_path)
    backend = build_backend(exp)

    started = _utc_now()
    summary = run_experiment(catalog, log, exp, backend)
    manifest = {
        "started_at": started,
        "finished_at": _utc_now(),
        "package_version": _package_version(),
        "backend": exp.backend,
        "config": exp.to_dict(),
        "catalog_sha256": _sha256_file(Path(exp.catalog_path)),
        "interactions_sha256": _sha256_file(Path(exp.interactions_path)),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"eval complete; outputs in {out_dir}")
    _print_summary(summary)
    if summary["failure_fraction"] > exp.pipeline.failure_limit:
        print(
            f"error: failure fraction {summary['failure_fraction']:.3f} exceeds "
            f"limit {exp.pipeline.failure_limit:.3f}",
            file=sys.stderr,
        )
        return EXIT_FAILURES
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    path = Path(args.trace)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"trace file not found: {path}") from None
    if not text.strip():
        raise TraceError("trace file is empty", byte_offset=0)
    board = replay_trace(text)
    validate_stages(board)
    final = board.read(role="item_ranker")
    if not final:
        raise TraceError("trace has no item_ranker message")
    try:
        payload = json.loads(final[-1].content)
        ranking = payload["ranking"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TraceError(f"item_ranker message carries no ranking: {exc}") from None
    if args.verbose:
        for message in board.read():
            score = "" if message.score is None else f" score={message.score:.4f}"
            print(f"stage {message.stage} {message.role:<18} {message.id}{score}")
    print(json.dumps(ranking))
    print(f"trace ok: {len(board)} messages")
    return EXIT_OK


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="experiment config JSON")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--backend", choices=BACKEND_KINDS, default=None)
    sub.add_argument("--variant", choices=VARIANTS, default=None)
    sub.add_argument("--pool-size", type=int, default=None)
    sub.add_argument("--k", type=int, default=None)
    sub.add_argument("--theta", type=float, default=None)
    sub.add_argument("--out", default=None, help="override output directory")
    sub.add_argument("--cassette", default=None, help="cassette path for record/replay backends")


def build_parser() -> _Parser:
    parser = _Parser(prog="agentrank", description="Agentic retrieval-and-rank benchmark harness.")
    parser.add_argument("--version", action="version", version=f"agentrank {_package_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", help="validate a corpus and build its vector index")
    ingest.add_argument("--catalog", required=True, help="item catalog JSONL")
    ingest.add_argument("--interactions", required=True, help="interaction log JSONL")
    ingest.add_argument("--out", required=True, help="output directory")
    ingest.add_argument("--embed-dim", type=int, default=256)
    ingest.add_argument("--max-reviews", type=int, default=3)
    ingest.add_argument("--session-gap", type=float, default=3600.0)
    ingest.set_defaults(func=cmd_ingest)

    run = sub.add_parser("run", help="rank one user's pool and print the result")
    _add_common_flags(run)
    run.add_argument("--user", required=True, help="user id to run")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="run configured variants over every eligible user")
    _add_common_flags(ev)
    ev.add_argument("--max-users", type=int, default=None)
    ev.add_argument(
        "--from-records",
        action="store_true",
        help="re-aggregate an existing run directory instead of calling backends",
    )
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("replay", help="validate a stored trace and print its ranking")
    rep.add_argument("--trace", required=True, help="trace JSONL path")
    rep.add_argument("--verbose", action="store_true", help="also list every message")
    rep.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DataError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
