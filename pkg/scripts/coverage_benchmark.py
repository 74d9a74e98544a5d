"""Coverage of PANDA confidence intervals for one or more scenario configs.

Usage: python3 scripts/coverage_benchmark.py configs/coverage_gaussian.json [more.json ...] [--replicates N]
"""

import argparse
import json
import time

from pandagm import NodeFamily, PandaConfig, parse_noise
from pandagm.simgen import GlmScenario, coverage_experiment, spread_beta


def run(path, replicates=None):
    cfg = json.loads(open(path).read())
    sc = cfg["scenario"]
    beta = spread_beta(sc["q"], sc["n_zero"], sc["low"], sc["high"])
    gen = GlmScenario(NodeFamily.parse(cfg["family"]), sc["n"], beta, tuple(sc["covariates"]))
    panda = PandaConfig(**cfg["panda"])
    t0 = time.time()
    res = coverage_experiment(gen, replicates or cfg["replicates"], cfg["level"], panda, parse_noise(cfg["noise"]),
                              seed=panda.seed)
    zlo, zhi, zw = res.summary(zero=True)
    nlo, nhi, nw = res.summary(zero=False)
    print(f"{path}: {res.replicates} replicates, {len(res.failures)} failures, {time.time() - t0:.0f} s")
    print(f"  zero coefficients     CP [{zlo:.3f}, {zhi:.3f}]  mean width {zw:.3f}")
    print(f"  nonzero coefficients  CP [{nlo:.3f}, {nhi:.3f}]  mean width {nw:.3f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--replicates", type=int)
    args = ap.parse_args()
    for path in args.configs:
        run(path, args.replicates)


if __name__ == "__main__":
    main()
