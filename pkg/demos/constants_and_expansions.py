"""Bubble constants and the eps-ladder fits of the test-function norms.

Prints K1, K2, K3 and the threshold A for N = 3..6, then the fitted
expansion coefficients next to their closed-form references.

    python3 demos/constants_and_expansions.py
"""

from critneumann.asymptotics import verify_expansions
from critneumann.landscape import threshold_A
from critneumann.quadrature import bubble_constants


def main():
    print(f"{'N':>2} {'K1':>12} {'K2':>12} {'K3':>12} {'A':>10} {'identity':>10}")
    for N in (3, 4, 5, 6):
        c = bubble_constants(N)
        print(f"{N:>2} {c.K1:12.6f} {c.K2:12.6f} {c.K3:12.6f} {threshold_A(N):10.6f} "
              f"{abs(c.identity_residual) / c.K1:10.1e}")

    for N, p in ((3, None), (4, 3.0), (5, None), (6, None)):
        rep = verify_expansions(N, p=p)
        print(f"\nN = {N}" + (f", p = {p}" if p else ""))
        for chk in rep.checks:
            flag = "ok" if chk.passed else ("--" if not chk.asserted else "FAIL")
            print(f"  {chk.name:<24} {chk.measured:12.5g} ref {chk.reference:12.5g} "
                  f"err {chk.error:8.2%}  {flag}")


if __name__ == "__main__":
    main()
