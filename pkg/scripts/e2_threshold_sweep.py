"""One-time sweep used to freeze the E2 growth threshold.

Solves along s = 0.4 * 2^(-k/2), k = 0..10, at two resolutions, for the
subcritical p = 1.2 and the supercritical p = 3, and prints the growth of
u_s(0.5 e_N) and G[Gamma_s](0.5 e_N) per halving of s.

    python scripts/e2_threshold_sweep.py > docs/e2_threshold_sweep.txt
"""

import numpy as np

from fracball.constants import normalization_constant
from fracball.geometry import ProblemParams, mesh_for
from fracball.greenop import cached_assemble, linear_solution
from fracball.solver import axis_trace, sweep_s

S = 0.4 * 2.0 ** (-np.arange(11) / 2)
PROBE = 0.5


def main():
    cN = normalization_constant(2, 0.5)
    print("resolution,p,s,u_probe,G_probe,u_growth_per_halving,G_growth_per_halving")
    for res in (32, 48):
        for p in (1.2, 3.0):
            pr = ProblemParams(2, 0.5, p, 0.0, res)
            mesh = mesh_for(pr)
            K = cached_assemble(mesh, 0.5)
            sw = sweep_s(mesh, K, pr, S, cN)
            u = np.array([axis_trace(mesh, v, [PROBE]).values[0] for _, v, _ in sw])
            g = np.array([axis_trace(mesh, linear_solution(mesh, K, pr, s, cN), [PROBE]).values[0]
                          for s in S])
            for k, s in enumerate(S):
                ru = u[k] / u[k - 2] if k >= 2 else float("nan")
                rg = g[k] / g[k - 2] if k >= 2 else float("nan")
                print(f"{res},{p:g},{s:.6g},{u[k]:.6g},{g[k]:.6g},{ru:.4f},{rg:.4f}")


if __name__ == "__main__":
    main()
