"""Threshold margins A_lambda - sup_t g_eps(t) along eps ladders.

The three regimes where the mountain-pass level is expected to sit below
the compactness threshold.  Margins are negative for moderate eps and turn
positive only deep in the asymptotic range; the tail order is fitted on the
positive rungs.

    python3 demos/threshold_margins.py
"""

from critneumann.landscape import THRESHOLD_LADDERS, FunctionalParams, verify_threshold

REGIMES = {
    "i": (FunctionalParams(1.0, 1.0, 3.0, 4), "fixed"),
    "ii": (FunctionalParams(1.0, 1.0, 5.0, 3), "fixed"),
    "iii": (FunctionalParams(1.0, 1.0, 3.0, 3), "eps_power"),
}


def main():
    for name, (fp, mode) in REGIMES.items():
        rep = verify_threshold(fp, THRESHOLD_LADDERS[name], mode)
        print(f"regime ({name}): N = {rep.N}, p = {rep.p}, A_lambda = {rep.A_lambda:.6f}")
        for r in rep.ladder:
            print(f"  eps {r.eps:9.3g}  mu {r.mu:9.3g}  t* {r.t_star:.5f}  margin {r.margin:+.3e}")
        order = "n/a" if rep.fitted_order is None else f"{rep.fitted_order:.3f}"
        print(f"  positive for eps <= {rep.positive_from}, fitted order {order}"
              f" (expected {rep.expected_order})\n")


if __name__ == "__main__":
    main()
