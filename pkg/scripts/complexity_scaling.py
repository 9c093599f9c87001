"""Kernel op counts of GBP and SGBP as the alphabet grows."""
import argparse

from sgbp.experiments import fit_exponent, gbp_dominant_ops, i2_op_ratio


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--ds", type=int, nargs="+", default=[2, 4, 8, 16])
    a = p.parse_args()

    grid = [gbp_dominant_ops(d) for d in a.ds]
    pairs = [i2_op_ratio(d) for d in a.ds]
    print(f"{'d':>4} {'grid GBP':>12} {'I=2 GBP':>12} {'I=2 SGBP':>10} {'ratio':>9}")
    for d, g, (gb, sg) in zip(a.ds, grid, pairs):
        print(f"{d:>4} {g:>12} {gb:>12} {sg:>10} {gb / sg:>9.1f}")
    print(f"grid dominant edge exponent: {fit_exponent(a.ds, grid):.3f}")
    print(f"GBP/SGBP ratio exponent on the I=2 edge: {fit_exponent(a.ds, [g / s for g, s in pairs]):.3f}")


if __name__ == "__main__":
    main()
