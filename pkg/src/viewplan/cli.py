"""Command-line entry point: ``viewplan <command> [options]``.

Exit codes: 0 ok, 1 usage or config error, 2 infeasible (no free seed,
empty or disconnected graph, budget cannot be met), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .graph import GraphError, ViewpointGraph
from .planner import PlannerError, Trajectory
from .pointcloud import write_ply

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_IO = 0, 1, 2, 3

logger = logging.getLogger("viewplan")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON pipeline config (defaults apply to missing keys)")
    common.add_argument("--seed", type=int, metavar="N", help="override rng_seed")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads for ray casting")
    common.add_argument("--budget", type=float, metavar="METERS", help="travel budget L_max")
    common.add_argument("--method", metavar="NAME", help=f"one of {', '.join(pipeline.METHODS)}")
    common.add_argument("--out", metavar="DIR", help="output directory (or set VIEWPLAN_OUT)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="viewplan", description="Budgeted viewpoint planning for aerial 3D scanning.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("init-scan", parents=[common], help="fly the initial pattern and build the occupancy map")
    sub.add_parser("plan", parents=[common], help="build the viewpoint graph and plan a trajectory")
    sub.add_parser("evaluate", parents=[common], help="simulate capture and score the reconstruction")
    cmp_ = sub.add_parser("compare", parents=[common], help="run several methods from one shared initial scan")
    cmp_.add_argument("--methods", metavar="A,B,...", help="comma separated method list")
    it = sub.add_parser("iterate", parents=[common], help="alternate planning, capture and map updates")
    it.add_argument("--rounds", type=int, metavar="N")
    ex = sub.add_parser("export", parents=[common], help="dump run artifacts as PLY / JSON")
    ex.add_argument("what", choices=["map", "graph", "trajectory", "ground-truth"])
    ex.add_argument("--dest", metavar="PATH", help="output file (default: inside the run directory)")
    return p


def load_config(args) -> pipeline.PipelineConfig:
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
        # relative mesh/config paths are resolved against the config file
        scene = doc.get("scene", {})
        base = Path(args.config).resolve().parent
        for k in ("mesh", "config"):
            if isinstance(scene.get(k), str) and not Path(scene[k]).is_absolute():
                scene[k] = str(base / scene[k])
    overrides = {"rng_seed": args.seed, "threads": args.threads, "budget": args.budget,
                 "method": args.method, "output_dir": args.out}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "methods", None):
        doc["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if os.environ.get("VIEWPLAN_THREADS") and args.threads is None:
        doc["threads"] = int(os.environ["VIEWPLAN_THREADS"])
    return pipeline.PipelineConfig.from_dict(doc)


def _export(cfg: pipeline.PipelineConfig, what: str, dest: str | None) -> Path:
    out = pipeline._out(cfg)
    if what == "map":
        occ = pipeline._load_map(out)
        path = Path(dest or out / "map.ply")
        occ.export_ply(path, pipeline.resolve_scene(cfg).roi)
    elif what == "graph":
        graph = ViewpointGraph.load(out / pipeline.GRAPH_FILE)
        path = Path(dest or out / "graph.ply")
        write_ply(path, graph.positions())
    elif what == "trajectory":
        traj = Trajectory.load(out / pipeline.TRAJ_FILE)
        path = Path(dest or out / "trajectory.ply")
        pts = [np.asarray(e.motion.waypoints) for e in traj.entries if e.motion is not None]
        pts.append(np.array([traj.entries[-1].viewpoint.position]))
        write_ply(path, np.concatenate(pts))
    else:
        path = Path(dest or out / "ground_truth.ply")
        write_ply(path, pipeline.ground_truth(pipeline.resolve_scene(cfg), cfg))
    return path


def run(args) -> dict | list:
    cfg = load_config(args)
    cmd = args.command
    if cmd == "init-scan":
        return pipeline.cmd_init_scan(cfg)
    if cmd == "plan":
        traj = pipeline.cmd_plan(cfg)
        return {"method": traj.method, "score": traj.score, "budget_cost": traj.budget_cost,
                "entries": len(traj.entries)}
    if cmd == "evaluate":
        return pipeline.cmd_evaluate(cfg).to_dict()
    if cmd == "compare":
        return [r.to_dict() for r in pipeline.cmd_compare(cfg)]
    if cmd == "iterate":
        return pipeline.cmd_iterate(cfg, args.rounds)
    if cmd == "export":
        return {"written": str(_export(cfg, args.what, args.dest))}
    raise UsageError(f"unknown command {cmd!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        result = run(args)
    except (pipeline.ConfigError, UsageError, json.JSONDecodeError) as exc:
        print(f"viewplan: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.InfeasibleError, PlannerError, GraphError) as exc:
        print(f"viewplan: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"viewplan: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, indent=1, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
