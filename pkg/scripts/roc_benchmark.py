"""Edge-recovery benchmark on simulated scale-free graphs.

Usage: python3 scripts/roc_benchmark.py [configs/roc_scalefree.json] [--seeds N]

Prints the per-seed AUC and the mean AUC over seeds.
"""

import argparse
import json
import time

import numpy as np

from pandagm import PandaConfig, parse_noise, run_panda_ns, standardize
from pandagm.ngd import with_lambda
from pandagm.simgen import AdjacencySpec, gen_adjacency, gen_precision, roc_curve, sample_ggm


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config", nargs="?", default="configs/roc_scalefree.json")
    ap.add_argument("--seeds", type=int)
    args = ap.parse_args()
    cfg = json.loads(open(args.config).read())
    g = cfg["graph"]
    panda = cfg["panda"]
    n_e = panda["n_e"]
    spec = parse_noise(cfg["noise"])
    grid = cfg["lambda_ne_grid"]
    aucs = []
    t0 = time.time()
    for seed in range(args.seeds or cfg["seeds"]):
        A = gen_adjacency(AdjacencySpec(g["kind"], g["p"], g["param"], seed))
        x = standardize(sample_ggm(gen_precision(A, seed=seed), cfg["n"], seed))
        fits = [run_panda_ns(x, spec=with_lambda(spec, lam / n_e), cfg=PandaConfig(**{**panda, "seed": seed}))
                for lam in grid]
        roc = roc_curve(fits, A, grid)
        aucs.append(roc.auc)
        print(f"seed {seed:3d}  AUC {roc.auc:.3f}")
    print(f"mean AUC {np.mean(aucs):.3f} over {len(aucs)} seeds ({time.time() - t0:.0f} s)")


if __name__ == "__main__":
    main()
