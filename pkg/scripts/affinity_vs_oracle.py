"""Cosine agreement between built affinity weights and a Monte-Carlo imputation oracle."""

import argparse

import numpy as np

from asyncfusion.ahp import build_affinity_matrix
from asyncfusion.embedding import EmbeddingConfig
from asyncfusion.synthetic import FAST_IDS, SLOW_ID, linear_scene, monte_carlo_affinity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--payload", choices=["vector", "points"], default="vector")
    args = ap.parse_args()

    print("seed  " + "  ".join(f"{f:>18}" for f in FAST_IDS) + "  cosine")
    cosines = []
    for seed in range(args.seeds):
        ds = linear_scene(seed=seed, payload=args.payload)
        am = build_affinity_matrix(ds, EmbeddingConfig(seed=seed))
        oracle = monte_carlo_affinity(ds, SLOW_ID, seed=seed)
        a = np.array([am.weights[SLOW_ID][f] for f in FAST_IDS])
        b = np.array([oracle[f] for f in FAST_IDS])
        cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        cosines.append(cos)
        cells = "  ".join(f"{x:.3f} (oracle {y:.3f})" for x, y in zip(a, b))
        print(f"{seed:4d}  {cells}  {cos:.3f}")
    print(f"mean cosine {np.mean(cosines):.3f}")


if __name__ == "__main__":
    main()
