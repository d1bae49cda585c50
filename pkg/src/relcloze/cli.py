"""Command-line entry point.

One subcommand per pipeline stage plus ``serve`` for the expert-review
service.  Global flags override the corresponding config keys, so baseline
and biased runs can share one config file and differ only in ``--models``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import RelclozeError
from .pipeline import STAGE_ORDER, RunManifest, execute_stage, load_config

STAGES_WITH_MANIFEST = list(STAGE_ORDER)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relcloze",
        description=(
            "Open relation extraction on historical Spanish text: compose a corpus, "
            "bias an encoder, fill cloze prompts, embed, cluster, and evaluate."
        ),
    )
    parser.add_argument("--config", required=True, help="path to the run config (YAML)")
    parser.add_argument("--run-id", default="run", help="run identifier (default: run)")
    parser.add_argument(
        "--run-root", default=None, help="directory holding run folders (default: runs)"
    )
    parser.add_argument("--seed", type=int, default=None, help="override biasing/clustering seeds")
    parser.add_argument(
        "--models", default=None, help="comma-separated model ids (overrides prompting.models)"
    )
    parser.add_argument(
        "--templates",
        default=None,
        help="comma-separated template ids (overrides prompting.templates)",
    )
    parser.add_argument("--k", type=int, default=None, help="override clustering.k")

    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES_WITH_MANIFEST:
        sub.add_parser(name, help=f"run the {name} stage")
    serve = sub.add_parser("serve", help="start the expert-review HTTP service")
    serve.add_argument("--host", default=None)
    serve.add_argument("--port", type=int, default=None)
    return parser


def apply_overrides(config: dict, args: argparse.Namespace) -> dict:
    if args.models:
        config.setdefault("prompting", {})["models"] = [
            m.strip() for m in args.models.split(",") if m.strip()
        ]
    if args.templates:
        config.setdefault("prompting", {})["templates"] = [
            t.strip() for t in args.templates.split(",") if t.strip()
        ]
    if args.k is not None:
        config.setdefault("clustering", {})["k"] = args.k
    if args.seed is not None:
        config.setdefault("biasing", {})["seed"] = args.seed
        config.setdefault("clustering", {})["seed"] = args.seed
    if args.run_root:
        config["run_root"] = args.run_root
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), args)
        run_root = Path(config.get("run_root", "runs"))
        run_dir = run_root / args.run_id
        if args.stage == "serve":
            return _serve(config, run_dir, args)
        manifest = RunManifest.load_or_create(run_dir, args.run_id)
        execute_stage(args.stage, manifest, config)
        print(f"{args.stage}: done ({run_dir})")
        return 0
    except RelclozeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _serve(config: dict, run_dir: Path, args: argparse.Namespace) -> int:
    import uvicorn

    from .review import ReviewStore, create_app

    serve_cfg = config.get("serve") or {}
    store = ReviewStore.from_run(
        run_dir,
        label_set=serve_cfg.get("label_set") or [],
        shown_k=int(serve_cfg.get("shown_k", 10)),
        journal_path=run_dir / serve_cfg.get("journal", "journal.jsonl"),
        registry_root=config.get("registry"),
    )
    app = create_app(store)
    host = args.host or serve_cfg.get("host", "127.0.0.1")
    port = args.port or int(serve_cfg.get("port", 8732))
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
