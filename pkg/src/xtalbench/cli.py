"""Command-line interface: generate, run, score, report.

Exit codes: 0 success, 1 configuration error, 2 run completed with partial
failures, 3 hard failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .annotation import XYZFormatError
from .corpus import CorpusError, generate_corpus, load_corpus
from .gateway import BUILTIN_MOCKS, GatewayError, load_endpoints
from .protocols import ProtocolError, write_instance_manifest
from .rendering import RenderConfig
from .report import build_report
from .runner import RunError, build_instances, execute_run, score_run, write_scores

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2
EXIT_HARD = 3


def _parse_materials(value: str | None) -> list[str] | None:
    return value.split(",") if value else None


def _parse_radii(value: str | None) -> list[float] | None:
    return [float(v) for v in value.split(",")] if value else None


def cmd_generate(args) -> int:
    cfg = RenderConfig(width=args.size, height=args.size)
    index = generate_corpus(
        args.out,
        materials=_parse_materials(args.materials),
        radii=_parse_radii(args.radii),
        render_config=cfg,
        poses=args.poses,
        force=args.force,
    )
    print(f"corpus ready at {index.root} ({len(index.entries)} pose entries)")
    for flag in index.flags:
        print(f"  flag: {flag}")
    return EXIT_OK


def _endpoint(args):
    endpoints = dict(BUILTIN_MOCKS)
    if args.endpoints_config:
        endpoints = load_endpoints(args.endpoints_config)
    if args.endpoint not in endpoints:
        raise GatewayError(
            f"unknown endpoint {args.endpoint!r}; known: {sorted(endpoints)}"
        )
    endpoint = endpoints[args.endpoint]
    if args.seed is not None:
        parts = endpoint.transport.split(":")
        if parts[0] == "mock" and parts[1] in ("garbage", "noisy"):
            endpoint = dataclasses.replace(
                endpoint, transport=f"mock:{parts[1]}:{args.seed}"
            )
    return endpoint


def cmd_run(args) -> int:
    corpus = load_corpus(args.corpus)
    endpoint = _endpoint(args)
    protocols = ["SE", "CE"] if args.protocol == "both" else [args.protocol.upper()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    any_failed = False
    for protocol in protocols:
        instances = build_instances(corpus, protocol)
        write_instance_manifest(
            instances, out / f"instances_{protocol.lower()}.jsonl"
        )
        log_path = out / f"{endpoint.name}_{protocol.lower()}.jsonl"
        stats = execute_run(
            corpus, protocol, endpoint, log_path, resume=args.resume
        )
        print(
            f"{protocol}: {stats.n_queried} queried, {stats.n_skipped} resumed, "
            f"{stats.n_failed} without response -> {log_path}"
        )
        any_failed = any_failed or stats.n_failed > 0
    return EXIT_PARTIAL if any_failed else EXIT_OK


def cmd_score(args) -> int:
    corpus = load_corpus(args.corpus)
    scored, agg = score_run(corpus, args.log)
    write_scores(scored, args.out)
    print(
        f"{agg.protocol}: mean loss {agg.error:.4f}%, "
        f"failure rate {agg.failure_rate:.2%} -> {args.out}"
    )
    return EXIT_PARTIAL if agg.n_failed else EXIT_OK


def cmd_report(args) -> int:
    corpus = load_corpus(args.corpus)
    se = score_run(corpus, args.se) if args.se else None
    ce = score_run(corpus, args.ce) if args.ce else None
    endpoint = args.endpoint
    if endpoint is None:
        scores = (se or ce)[0]
        endpoint = scores[0].endpoint
    paths = build_report(args.out, endpoint, se=se, ce=ce)
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xtalbench",
        description="Crystal supercell corpus generation and model benchmarking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate the dataset tree")
    p.add_argument("--out", required=True, help="corpus root directory")
    p.add_argument("--materials", help="comma-separated material filter")
    p.add_argument("--radii", help="comma-separated radii in nm")
    p.add_argument("--poses", type=int, default=10, help="poses per supercell")
    p.add_argument("--size", type=int, default=64, help="image side in pixels")
    p.add_argument("--force", action="store_true", help="regenerate even if fresh")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("run", help="dispatch benchmark instances to an endpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--protocol", choices=["se", "ce", "both"], default="both")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--endpoints-config", help="YAML endpoint roster")
    p.add_argument("--out", required=True, help="run log directory")
    p.add_argument("--resume", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, help="reseed the stochastic mocks")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="score one run log")
    p.add_argument("--corpus", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True, help="scores JSONL path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="emit report tables from run logs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--se", help="SE run log")
    p.add_argument("--ce", help="CE run log")
    p.add_argument("--endpoint", help="endpoint name (default: from the logs)")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        CorpusError,
        GatewayError,
        ProtocolError,
        RunError,
        XYZFormatError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("unhandled failure")
        print(f"fatal: {exc}", file=sys.stderr)
        return EXIT_HARD


if __name__ == "__main__":
    sys.exit(main())
