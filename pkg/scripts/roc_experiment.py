#!/usr/bin/env python3
"""ROC experiments for the two screening stages.

Stage `degeneracy`: log10(kappa) scores on labeled corridor/junction scan
pairs. Stage `prematch`: similarity-confidence (Psi) scores on a map-image
corpus with known revisits. Writes `<stage>_scores.txt` files consumable by
`tunnelslam roc`.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import tunnelslam as ts
from tunnelslam import sim
from tunnelslam.degeneracy import roc_curve
from tunnelslam.occupancy import binarize, build_grid
from tunnelslam.prematch import detect_features, pair_seed, prematch
from conftest import assess_scene_pair


def degeneracy_scores(n_pairs: int):
    corridor = sim.scenario("straight_corridor").world
    junction = sim.scenario("t_junction").world
    rng = np.random.default_rng(0)
    rows = []
    for k in range(n_pairs // 2):
        x = rng.uniform(18.0, 42.0)
        pa = ts.Pose3.from_yaw(0.0, (x, rng.uniform(-0.3, 0.3), 1.0))
        pb = ts.Pose3.from_yaw(0.0, (x + 0.4, pa.t[1], 1.0))
        rep, _ = assess_scene_pair(corridor, pa, pb, 2000 + k)
        rows.append((f"corridor_{k}", rep.log_kappa, 1))
    for k in range(n_pairs // 2):
        x = rng.uniform(18.8, 20.8)
        pa = ts.Pose3.from_yaw(0.0, (x, rng.uniform(-0.2, 0.2), 1.0))
        pb = ts.Pose3.from_yaw(0.0, (x + 0.4, pa.t[1], 1.0))
        rep, _ = assess_scene_pair(junction, pa, pb, 3000 + k)
        rows.append((f"junction_{k}", rep.log_kappa, 0))
    return rows


def prematch_scores(n_revisits: int):
    world = sim.scenario("loop_block").world
    model = sim.LidarModel()
    rng = np.random.default_rng(1)
    images = []
    for k in range(n_revisits):
        x = 3.0 + 18.0 * (k / max(n_revisits - 1, 1))
        pose = ts.Pose3.from_yaw(0.0, (x, 0.0, 1.0))
        near = ts.Pose3.from_yaw(rng.uniform(-0.15, 0.15),
                                 (x + rng.uniform(-0.5, 0.5), rng.uniform(-0.25, 0.25), 1.0))
        for i, p in enumerate((pose, near)):
            scan = sim.scan(world, p, model, np.random.default_rng(100 * k + i))
            images.append(binarize(build_grid(scan)))
    features = [detect_features(img) for img in images]
    rows = []
    for k in range(n_revisits):
        i, j = 2 * k, 2 * k + 1
        rep = prematch(images[i], images[j], features_a=features[i],
                       features_b=features[j], seed=pair_seed(i, j))
        rows.append((f"revisit_{k}", rep.psi, 1))
    made = 0
    while made < 4 * n_revisits:
        i, j = rng.integers(0, len(images), size=2)
        if i == j or i // 2 == j // 2:
            continue
        rep = prematch(images[i], images[j], features_a=features[i],
                       features_b=features[j], seed=pair_seed(int(i), int(j)))
        rows.append((f"neg_{made}", rep.psi, 0))
        made += 1
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--stage", choices=("degeneracy", "prematch"), default="degeneracy")
    parser.add_argument("--pairs", type=int, default=60)
    parser.add_argument("--out", default=".")
    args = parser.parse_args()

    rows = (degeneracy_scores(args.pairs) if args.stage == "degeneracy"
            else prematch_scores(args.pairs // 3))
    out = Path(args.out) / f"{args.stage}_scores.txt"
    out.write_text("\n".join(f"{rid} {score!r} {label}" for rid, score, label in rows) + "\n")
    _, auc = roc_curve(np.array([r[1] for r in rows]), np.array([r[2] for r in rows]))
    print(f"{args.stage}: {len(rows)} scored pairs, AUC {auc:.3f} -> {out}")


if __name__ == "__main__":
    main()
