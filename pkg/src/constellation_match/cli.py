"""Command-line entry point: ``constellation-match <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 search budget exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .affinity import AffinityConfig, NodeMetric
from .bench import DEFAULT_AFFINITIES, DEFAULT_SOLVERS, run_bench
from .errors import SearchBudgetExhausted, ValidationError
from .graph import SCHEMA, load_map, save_map
from .mapping import AssociationGates, build_local_map, finalize, read_observations, write_observations
from .render import render_svg, to_dot
from .scenario import (
    ScenarioSpec,
    generate_observation_stream,
    generate_scene,
    load_truth,
    node_accuracy,
    truth_to_dict,
    vehicle_scale_spec,
)
from .solvers import Solver, SolverParams, match

EXIT_OK, EXIT_INVALID, EXIT_TIMEOUT = 0, 2, 3
CONFIG_SECTIONS = ("gates", "affinity", "solver", "scenario")


def load_config(path: str | None) -> dict:
    if path is None:
        return {k: {} for k in CONFIG_SECTIONS}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    unknown = set(data) - set(CONFIG_SECTIONS) - {"schema"}
    if unknown:
        raise ValidationError(f"{path}: unknown config sections {sorted(unknown)}")
    return {k: dict(data.get(k, {})) for k in CONFIG_SECTIONS}


def _override(section: dict, **flags) -> dict:
    out = dict(section)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _write_json(path: str, obj: dict) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _scenario(args, cfg: dict) -> ScenarioSpec:
    base = cfg["scenario"]
    if getattr(args, "preset", None) == "vehicle":
        base = {**vehicle_scale_spec().to_dict(), **base}
    sizes = [int(s) for s in _csv(args.subgraph_sizes)] if args.subgraph_sizes else None
    return ScenarioSpec.from_dict(_override(
        base, n_objects=args.n_objects, n_classes=args.n_classes, embedding_dim=args.embedding_dim,
        position_noise_std_m=args.position_noise, embedding_noise_std=args.embedding_noise,
        subgraph_sizes=sizes, trials=args.trials, seed=args.seed,
    ))


def _affinity(args, cfg: dict) -> AffinityConfig:
    base = cfg["affinity"]
    if getattr(args, "preset", None) == "vehicle" and "edge_sigma" not in base:
        base = {**base, "edge_sigma": 100.0}
    return AffinityConfig.from_dict(_override(base, node_metric=getattr(args, "affinity", None),
                                              edge_sigma=args.edge_sigma))


def _params(args, cfg: dict) -> SolverParams:
    section = {k: v for k, v in cfg["solver"].items() if k != "solver"}
    return SolverParams.from_dict(_override(
        section, timeout_s=args.timeout, max_iters=args.max_iters, astar_beam=args.beam,
    ))


# -- commands --------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    spec = _scenario(args, cfg)
    out = Path(args.out_dir)
    scene = generate_scene(spec, args.trial)
    save_map(scene.parent, out / "map.json")
    files = []
    for s in scene.subgraphs:
        name = f"subgraph_{s.size}.json"
        save_map(s.graph, out / name)
        files.append(name)
    truth = truth_to_dict(scene, files)
    truth["scenario"] = spec.to_dict()
    truth["trial"] = args.trial
    _write_json(str(out / "truth.json"), truth)
    if args.stream_objects:
        stream = generate_observation_stream(args.stream_objects, args.stream_sightings,
                                             seed=spec.seed, dim=spec.embedding_dim)
        write_observations(out / "observations.jsonl", stream.observations, spec.embedding_dim)
        _write_json(str(out / "stream_truth.json"), {
            "schema": SCHEMA,
            "n_objects": args.stream_objects,
            "object_of": stream.object_of,
            "positions": stream.object_positions.tolist(),
        })
    print(f"wrote {len(scene.subgraphs)} subgraph(s) and map.json to {out}")
    return EXIT_OK


def cmd_build_map(args) -> int:
    cfg = load_config(args.config)
    gates = AssociationGates.from_dict(_override(
        cfg["gates"], cos_min=args.cos_min, maha_max=args.maha_max,
        temporal_window_s=args.temporal_window, allow_global_closure=args.allow_global_closure,
    ))
    local_map = build_local_map(read_observations(args.observations), gates)
    g = finalize(local_map, args.edge_threshold, frame_id=args.frame_id)
    save_map(g, args.out)
    print(f"{len(g)} landmark(s), {len(g.edges)} edge(s) -> {args.out}")
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = load_config(args.config)
    g1, g2 = load_map(args.map1), load_map(args.map2)
    res = match(g1, g2, _affinity(args, cfg), args.solver or cfg["solver"].get("solver", "rrwm"),
                _params(args, cfg))
    out = res.to_dict(include_timings=not args.omit_timings)
    if args.truth:
        truth = load_truth(args.truth)
        if g1.frame_id not in truth:
            raise ValidationError(f"no ground truth for frame {g1.frame_id!r} in {args.truth}")
        out["accuracy"] = node_accuracy(res.assignment, truth[g1.frame_id])
    if args.out:
        _write_json(args.out, out)
    else:
        print(json.dumps(out, indent=2))
    if args.dot:
        Path(args.dot).write_text(to_dot(g1, g2, res.assignment), encoding="utf-8")
    if args.svg:
        Path(args.svg).write_text(render_svg(g1, g2, res.assignment), encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    spec = _scenario(args, cfg)
    report = run_bench(
        spec,
        solvers=_csv(args.solvers),
        affinities=_csv(args.affinities),
        params=_params(args, cfg),
        cfg=_affinity(args, cfg),
        jobs=args.jobs,
    )
    timings = not args.omit_timings
    table = report.table(include_timings=timings)
    if args.table:
        Path(args.table).write_text(table, encoding="utf-8")
    if args.out:
        _write_json(args.out, report.to_dict(include_timings=timings))
    sys.stdout.write(table)
    return EXIT_OK


def cmd_export_dot(args) -> int:
    g1 = load_map(args.map)
    g2 = load_map(args.map2) if args.map2 else None
    pairs = []
    if args.result:
        if g2 is None:
            raise ValidationError("--result needs --map2")
        try:
            pairs = [tuple(p) for p in json.loads(Path(args.result).read_text(encoding="utf-8"))["assignment"]]
        except (FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
            raise ValidationError(f"cannot read match result {args.result}: {exc}") from None
    dot = to_dot(g1, g2, pairs)
    if args.out:
        Path(args.out).write_text(dot, encoding="utf-8")
    else:
        sys.stdout.write(dot)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=["underwater", "vehicle"], default=None,
                   help="scenario defaults (vehicle: 600 objects over 1 km^2)")
    p.add_argument("--n-objects", type=int)
    p.add_argument("--n-classes", type=int)
    p.add_argument("--embedding-dim", type=int)
    p.add_argument("--position-noise", type=float, help="per-axis position noise std, m")
    p.add_argument("--embedding-noise", type=float, help="per-coordinate embedding noise std")
    p.add_argument("--subgraph-sizes", help="comma-separated, e.g. 2,3,4,5")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--edge-sigma", type=float)
    p.add_argument("--timeout", type=float, help="search budget in seconds")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--beam", type=int, help="A* beam width (0 = exact)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="constellation-match", allow_abbrev=False,
                                     description="Object-constellation graph matching for loop closure.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scene, subgraphs and ground truth", allow_abbrev=False)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--stream-objects", type=int, default=0,
                   help="also write an observation stream of this many objects")
    p.add_argument("--stream-sightings", type=int, default=3, help="sightings per streamed object")
    _add_scenario_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("build-map", help="build a local map from an observation stream", allow_abbrev=False)
    p.add_argument("--observations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--edge-threshold", type=float, default=2.0)
    p.add_argument("--frame-id", default="map")
    p.add_argument("--cos-min", type=float)
    p.add_argument("--maha-max", type=float)
    p.add_argument("--temporal-window", type=float)
    p.add_argument("--allow-global-closure", action="store_true", default=None)
    p.set_defaults(func=cmd_build_map)

    p = sub.add_parser("match", help="match map1 into map2", allow_abbrev=False)
    p.add_argument("--map1", required=True)
    p.add_argument("--map2", required=True)
    p.add_argument("--config")
    p.add_argument("--solver", choices=[s.value for s in Solver])
    p.add_argument("--affinity", choices=[m.value for m in NodeMetric])
    p.add_argument("--preset", choices=["underwater", "vehicle"], default=None)
    p.add_argument("--truth", help="ground-truth file from `gen`; adds node accuracy")
    p.add_argument("--out")
    p.add_argument("--dot")
    p.add_argument("--svg")
    p.add_argument("--omit-timings", action="store_true")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("bench", help="solver x affinity x subgraph-size benchmark", allow_abbrev=False)
    p.add_argument("--config")
    p.add_argument("--solvers", default=",".join(DEFAULT_SOLVERS))
    p.add_argument("--affinities", default=",".join(DEFAULT_AFFINITIES))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--table", help="text table path")
    p.add_argument("--omit-timings", action="store_true", help="byte-reproducible output")
    _add_scenario_flags(p)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-dot", help="write a map (and optional match) as Graphviz DOT",
                       allow_abbrev=False)
    p.add_argument("--map", required=True)
    p.add_argument("--map2")
    p.add_argument("--result", help="match JSON whose assignment is drawn between the maps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_dot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SearchBudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
