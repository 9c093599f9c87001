"""SGBP convergence traces on the 3x3 Potts grid for several alphabet sizes.

Writes convergence_d{d}.csv per alphabet, runtime_d4.csv and convergence.svg.
The full default run (d up to 32, 20 seeds, 1e4 iterations) takes a while;
try ``--ds 4 --seeds 5 --iters 2000`` first.
"""
import argparse
import json
from pathlib import Path

from sgbp.experiments import ConvergenceConfig, reproduce_convergence
from sgbp.model import PottsParams


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ds", type=int, nargs="+", default=[4, 8, 16, 32])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--iters", type=int, default=10_000)
    p.add_argument("--schedule", default="harmonic")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--potts-seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    a = p.parse_args()
    cfg = ConvergenceConfig(
        out_dir=a.out_dir,
        ds=tuple(a.ds),
        seeds=a.seeds,
        iters=a.iters,
        schedule=a.schedule,
        nu=a.nu,
        potts=PottsParams(seed=a.potts_seed),
    )
    summary = reproduce_convergence(cfg)
    print(json.dumps({str(k): v for k, v in summary.items()}, indent=2))


if __name__ == "__main__":
    main()
