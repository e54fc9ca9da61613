"""Command-line drivers: simulate, run, merge, eval, roc.

Exit codes: 0 success, 1 usage/config error, 2 pipeline failure,
3 evaluation-threshold failure (for CI gating).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import sim
from .config import (ConfigError, PipelineConfig, apply_overrides,
                     config_from_text, config_to_text)
from .degeneracy import DegenerateLabels, roc_curve
from .geometry import Pose3
from .graph import EdgeKind, load_graph, save_graph
from .loopclose import loop_log_lines
from .metrics import TooShort, ape, rpe
from .multirobot import build_images, export_global_map, merge
from .pipeline import MODES, run_slam, write_run_outputs
from .sim import SCENARIO_NAMES, UnknownScenario, load_dataset, save_dataset

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 2
EXIT_THRESHOLD = 3


def _fmt_pose(p: Pose3) -> str:
    q, t = p.q, p.t
    return " ".join(repr(float(v)) for v in (t[0], t[1], t[2], q[1], q[2], q[3], q[0]))


def _parse_pose_line(line: str) -> Pose3:
    tx, ty, tz, qx, qy, qz, qw = (float(v) for v in line.split())
    return Pose3(np.array([qw, qx, qy, qz]), np.array([tx, ty, tz]))


def _load_trajectory(path) -> list[Pose3]:
    return [_parse_pose_line(l) for l in Path(path).read_text().splitlines() if l.strip()]


def _load_config(path: str | None, overrides: dict[str, str]) -> PipelineConfig:
    config = PipelineConfig()
    if path:
        config = config_from_text(Path(path).read_text())
    if overrides:
        config = apply_overrides(config, overrides)
    return config


def _collect_overrides(unknown: list[str]) -> dict[str, str]:
    """Flags mirror config keys: --section.key value."""
    overrides = {}
    i = 0
    while i < len(unknown):
        tok = unknown[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(f"unrecognized argument {tok!r} (expected --section.key value)")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(unknown):
                raise ConfigError(f"missing value for {tok!r}")
            key, value = tok[2:], unknown[i + 1]
            i += 2
        overrides[key] = value
    return overrides


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args, overrides) -> int:
    try:
        scn = sim.scenario(args.scenario)
    except UnknownScenario as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out)
    results = sim.run_robots(scn.world, list(scn.specs), seed=args.seed)
    meta = {"scenario": scn.name, "seed": args.seed,
            "scan_rate": scn.specs[0].scan_rate, "channels": sim.LidarModel().channels,
            "azimuth_steps": sim.LidarModel().azimuth_steps}
    if len(results) == 1:
        save_dataset(out, results[0], meta)
        n = len(results[0].scans)
        path_len = sum(np.linalg.norm(b.t - a.t) for a, b in
                       zip(results[0].ground_truth[:-1], results[0].ground_truth[1:]))
        print(f"wrote {n} scans, path length {path_len:.1f} m -> {out}")
    else:
        for r, res in enumerate(results):
            save_dataset(out / f"robot_{r}", res, dict(meta, robot=r))
            print(f"robot_{r}: {len(res.scans)} scans")
    return EXIT_OK


def cmd_run(args, overrides) -> int:
    try:
        config = _load_config(args.config, overrides)
        if config.frontend.odometry_source not in ("registration", "dataset"):
            raise ConfigError(
                f"frontend.odometry_source must be registration|dataset, "
                f"got {config.frontend.odometry_source!r}")
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        dataset = load_dataset(args.dataset)
    except OSError as err:
        print(f"dataset error: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = run_slam(dataset, config, mode=args.mode, robot=args.robot)
        write_run_outputs(args.out, result, config)
    except Exception as err:
        print(f"pipeline failure: {err}", file=sys.stderr)
        return EXIT_PIPELINE
    s = result.summary
    print(f"mode={s.mode} scans={s.n_scans} keynodes={s.n_keynodes} "
          f"degenerate={s.n_degenerate} attempted_icp={s.attempted_icp} "
          f"accepted={s.accepted}")
    return EXIT_OK


def _load_anchors(path) -> dict[int, Pose3]:
    anchors = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        tok = line.split()
        anchors[int(tok[0])] = _parse_pose_line(" ".join(tok[1:]))
    return anchors


def cmd_merge(args, overrides) -> int:
    try:
        config = _load_config(args.config, overrides).with_loop_params()
        anchors = _load_anchors(args.anchors)
    except (ConfigError, OSError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if len(args.graphs) != len(args.datasets):
        print("error: need one dataset directory per graph file", file=sys.stderr)
        return EXIT_USAGE
    try:
        graphs = []
        for gpath, dpath in zip(args.graphs, args.datasets):
            graph = load_graph(gpath)
            dataset = load_dataset(dpath)
            key_file = Path(gpath).parent / "keynodes.txt"
            if not key_file.exists():
                print(f"error: {key_file} not found (written by `run`)", file=sys.stderr)
                return EXIT_USAGE
            from dataclasses import replace as _replace
            for line in key_file.read_text().splitlines():
                if not line.strip():
                    continue
                r, i, scan_idx = (int(v) for v in line.split())
                node = graph.nodes[(r, i)]
                graph.nodes[(r, i)] = _replace(node, scan=dataset.scans[scan_idx])
            deg_file = Path(gpath).parent / "degeneracy.txt"
            if deg_file.exists():
                for line in deg_file.read_text().splitlines():
                    if not line.strip():
                        continue
                    nid, log_kappa, degen = line.split()
                    r, i = (int(v) for v in nid.split(":"))
                    node = graph.nodes[(r, i)]
                    graph.nodes[(r, i)] = _replace(node, log_kappa=float(log_kappa),
                                                   degenerate=bool(int(degen)))
            graphs.append(graph)
        result = merge(graphs, anchors, config.loop, config.pcm,
                       loop_information=config.backend.loop_information(),
                       optimize_params=config.backend.optimize_params())
    except Exception as err:
        print(f"pipeline failure: {err}", file=sys.stderr)
        return EXIT_PIPELINE
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_graph(out / "merged.g2o", result.graph)
    cloud = export_global_map(result.graph, voxel=0.1)
    (out / "map.xyz").write_text(
        "\n".join(" ".join(repr(float(v)) for v in row) for row in cloud.points)
        + ("\n" if len(cloud) else ""))
    (out / "loops.txt").write_text(
        "\n".join(loop_log_lines(result.candidates)) + ("\n" if result.candidates else ""))
    (out / "effective_config").write_text(config_to_text(config))
    print(f"merged {len(args.graphs)} graphs: {result.inter_edges} inter-robot loop edges, "
          f"final cost {result.final_cost:.6g}")
    return EXIT_OK


def cmd_eval(args, overrides) -> int:
    try:
        est = _load_trajectory(args.estimate)
        truth = _load_trajectory(args.truth)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else None
    try:
        errors = ape(est, truth)
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    ape_csv = "index,ape_m\n" + "\n".join(f"{i},{e!r}" for i, e in enumerate(errors))
    print(f"APE: mean {errors.mean():.4f} m, max {errors.max():.4f} m")
    rpe_csv = None
    if args.rpe_segment:
        try:
            samples = rpe(est, truth, args.rpe_segment)
            rpe_csv = ("start_index,segment_m,rpe_trans_m,rpe_rot_rad\n"
                       + "\n".join(f"{s.start_index},{s.segment_length!r},"
                                   f"{s.translation_error!r},{s.rotation_error!r}"
                                   for s in samples))
            med = float(np.median([s.translation_error for s in samples]))
            print(f"RPE@{args.rpe_segment:g} m: median translation {med:.4f} m "
                  f"({len(samples)} segments)")
        except TooShort as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_USAGE
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "ape.csv").write_text(ape_csv + "\n")
        if rpe_csv:
            (out / "rpe.csv").write_text(rpe_csv + "\n")
    if args.max_ape is not None and errors.max() > args.max_ape:
        print(f"threshold failure: max APE {errors.max():.4f} > {args.max_ape}",
              file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_roc(args, overrides) -> int:
    try:
        lines = [l.split() for l in Path(args.scores).read_text().splitlines() if l.strip()]
        scores = np.array([float(t[1]) for t in lines])
        labels = np.array([int(t[2]) for t in lines])
    except (OSError, ValueError, IndexError) as err:
        print(f"error: bad scores file: {err}", file=sys.stderr)
        return EXIT_USAGE
    try:
        points, auc = roc_curve(scores, labels)
    except DegenerateLabels as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    print(f"stage={args.stage} n={len(scores)} auc={auc:.4f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv = "fpr,tpr\n" + "\n".join(f"{p[0]!r},{p[1]!r}" for p in points)
        (out / f"roc_{args.stage}.csv").write_text(csv + "\n")
    if args.min_auc is not None and auc < args.min_auc:
        print(f"threshold failure: AUC {auc:.4f} < {args.min_auc}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tunnelslam",
        description="Degeneracy-aware lidar SLAM with saliency-based loop closing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("scenario", choices=SCENARIO_NAMES)
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the SLAM pipeline over a dataset")
    p.add_argument("dataset")
    p.add_argument("out")
    p.add_argument("--mode", choices=MODES, default="sglc")
    p.add_argument("--config", default=None)
    p.add_argument("--robot", type=int, default=0)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("merge", help="merge per-robot graphs on the base station")
    p.add_argument("--graphs", nargs="+", required=True)
    p.add_argument("--datasets", nargs="+", required=True)
    p.add_argument("--anchors", required=True,
                   help="file of lines: robot tx ty tz qx qy qz qw")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", help="trajectory APE/RPE against ground truth")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.add_argument("--rpe-segment", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--max-ape", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("roc", help="ROC curve and AUC from a scores file")
    p.add_argument("scores", help="file of lines: id score label{0,1}")
    p.add_argument("--stage", choices=("degeneracy", "prematch"), default="degeneracy")
    p.add_argument("--out", default=None)
    p.add_argument("--min-auc", type=float, default=None)
    p.set_defaults(func=cmd_roc)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, unknown = parser.parse_known_args(argv)
    try:
        overrides = _collect_overrides(unknown)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    return args.func(args, overrides)


if __name__ == "__main__":
    sys.exit(main())
