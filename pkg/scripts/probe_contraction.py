"""Local contraction diagnostics of the GBP update at the Potts fixed point.

Prints the Lipschitz ratio, the one-sided monotonicity rate and the derived
nu, plus the spectrum of the linearized update (estimated by finite
differences on the non-constant messages).
"""
import argparse

import numpy as np

from sgbp.experiments import potts_grid_plan, probe_nu, reference_fixed_point
from sgbp.gbp import gbp_iterate


def jacobian_spectrum(plan, m_star, eps=1e-7):
    base = m_star.vector()
    f0 = gbp_iterate(plan, m_star).vector()
    cols = []
    for i in range(base.size):
        m = m_star.copy()
        flat = m.vector()
        flat[i] += eps
        offset = 0
        for k, t in enumerate(m.tables):
            m.tables[k] = flat[offset:offset + t.size].reshape(t.shape)
            offset += t.size
        cols.append((gbp_iterate(plan, m).vector() - f0) / eps)
    return np.linalg.eigvals(np.array(cols).T)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    plan = potts_grid_plan(a.d)
    ref = reference_fixed_point(plan)
    probe = probe_nu(plan, ref, seed=a.seed)
    for k, v in probe.items():
        print(f"{k:>12}: {v}")
    eig = jacobian_spectrum(plan, ref)
    big = eig[np.argsort(-np.abs(eig))][:8]
    print("largest eigenvalues of the linearized update:")
    for z in big:
        print(f"  {z.real:+.4f} {z.imag:+.4f}i  |z| = {abs(z):.4f}")


if __name__ == "__main__":
    main()
