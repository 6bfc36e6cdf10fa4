"""Mountain-pass solve on the half space for N = 4, p = 3, lambda = mu = 1.

Runs the Nehari descent with Newton polish on a coarse and the default
grid, prints the level against the threshold A and the Pohozaev residuals,
then flips the sign of mu and shows the descent losing its mass while the
level stays above A.

    python3 demos/mountain_pass.py      # about half a minute
"""

from critneumann.landscape import FunctionalParams, threshold_A
from critneumann.solver import (
    Grid,
    SolverConfig,
    mountain_pass_solve,
    nonexistence_certificate,
    pohozaev_report,
)


def main():
    A = threshold_A(4)
    fp = FunctionalParams(1.0, 1.0, 3.0, 4)
    for n in (64, 128):
        res = mountain_pass_solve(fp, Grid(n_rho=n, n_xN=n))
        rep = pohozaev_report(res.u, fp)
        print(f"n = {n:3d}: level {res.level:.5f} (A = {A:.5f}), {res.iterations} descent steps, "
              f"{res.newton_steps} Newton, status {res.status}")
        print("         Pohozaev " + ", ".join(f"{k} {v:.2%}" for k, v in rep.residuals.items()))

    fp = FunctionalParams(1.0, -0.5, 3.0, 4)
    res = mountain_pass_solve(fp, Grid(n_rho=64, n_xN=64), SolverConfig(max_outer=300))
    cert = nonexistence_certificate(res.u, fp)
    print(f"\nmu = -0.5: L2 mass {res.l2_norms[0]:.3f} -> {res.l2_norms[-1]:.4f}, "
          f"min level {min(res.levels):.4f} > A, certificate gap {cert.gap:.3e} ({cert.verdict})")


if __name__ == "__main__":
    main()
