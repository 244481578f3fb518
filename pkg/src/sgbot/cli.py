"""Batch command-line interface for the rearrangement pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AppConfig, load_config
from .errors import SchemaError, SgbotError
from .goalsynth import load_goal, save_goal, synthesize_goal
from .graphbuild import build_commonsense_graph
from .ingest import ingest_capture, load_graph, load_scene, save_graph, save_scene
from .planner import execute_plan, save_plan
from .simeval import load_manifest, run_benchmark


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgbot", description="Tabletop rearrangement pipeline"
    )
    parser.add_argument("--config", help="TOML or JSON config file", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="depth capture -> Scene JSON")
    p_ingest.add_argument("--depth", required=True, help="raw float32 depth raster (meters)")
    p_ingest.add_argument("--mask", required=True, help="raw int32 instance-id raster")
    p_ingest.add_argument("--intrinsics", required=True, help="sidecar JSON (intrinsics + pose)")
    p_ingest.add_argument("--out", required=True)

    p_graph = sub.add_parser("graph", help="scene -> goal scene graph")
    p_graph.add_argument("--scene", required=True)
    p_graph.add_argument("--mode", choices=["commonsense", "file"], default="commonsense")
    p_graph.add_argument("--graph", help="graph JSON to pass through (mode=file)")
    p_graph.add_argument("--out", required=True)

    p_synth = sub.add_parser("synth", help="graph + scene shapes -> goal scene")
    p_synth.add_argument("--scene", required=True)
    p_synth.add_argument("--graph", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)

    p_plan = sub.add_parser("plan", help="scene + goal -> action sequence")
    p_plan.add_argument("--scene", required=True)
    p_plan.add_argument("--goal", required=True)
    p_plan.add_argument("--sigma", type=float, default=None)
    p_plan.add_argument("--out", required=True)

    p_bench = sub.add_parser("bench", help="run a benchmark manifest")
    p_bench.add_argument("--manifest", required=True)

    p_serve = sub.add_parser("serve", help="start the JSON-over-HTTP service")
    p_serve.add_argument("--addr", default=None, help="host:port (default from config)")
    return parser


def _run(args, cfg: AppConfig) -> None:
    if args.command == "ingest":
        scene = ingest_capture(args.depth, args.mask, args.intrinsics)
        Path(args.out).write_bytes(save_scene(scene))
    elif args.command == "graph":
        scene = load_scene(args.scene)
        if args.mode == "commonsense":
            graph = build_commonsense_graph(scene.objects)
        else:
            if not args.graph:
                raise SchemaError("--graph is required with --mode file")
            graph = load_graph(args.graph)
        Path(args.out).write_bytes(save_graph(graph))
    elif args.command == "synth":
        scene = load_scene(args.scene)
        graph = load_graph(args.graph)
        goal = synthesize_goal(scene, graph, args.seed, params=cfg.grounding)
        Path(args.out).write_bytes(save_goal(goal))
    elif args.command == "plan":
        scene = load_scene(args.scene)
        goal = load_goal(args.goal)
        _, plan = execute_plan(scene, goal, args.sigma, cfg.planner)
        Path(args.out).write_bytes(save_plan(plan))
    elif args.command == "bench":
        manifest = load_manifest(args.manifest)
        run_benchmark(manifest)
    elif args.command == "serve":
        import uvicorn

        from .service import create_app

        addr = args.addr if args.addr else cfg.server_addr
        host, _, port = addr.rpartition(":")
        uvicorn.run(create_app(cfg), host=host or "127.0.0.1", port=int(port))


def _fail(code: str, detail: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "detail": detail}) + "\n")
    return 1


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        _run(args, cfg)
    except FileNotFoundError as e:
        _fail("file_not_found", str(e))
        return 2
    except SgbotError as e:
        return _fail(e.code, str(e))
    return 0


if __name__ == "__main__":
    sys.exit(main())
