"""Weak-star pairings along the synthetic corrugation sequence, per q."""

import argparse

import numpy as np

from geofluid.renorm import CLAIM_FIELDS, synthetic_sequence, verify_vanishing_claims, weak_star_pairings


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--Q", type=int, default=8)
    ap.add_argument("--frozen", action="store_true", help="keep eta at eta_0 (negative control)")
    args = ap.parse_args()

    seq = synthetic_sequence(Q=args.Q)
    est = weak_star_pairings(seq, eta=seq.eta[0] if args.frozen else None)
    names = list(CLAIM_FIELDS)
    print(f"{'q':>2} {'eta':>9} {'delta':>9} " + " ".join(f"{CLAIM_FIELDS[k]:>11}" for k in names))
    for q in range(seq.Q + 1):
        mags = " ".join(f"{np.max(est[k].magnitudes[q]):11.3e}" for k in names)
        print(f"{q:2d} {seq.eta[q]:9.2f} {seq.delta[q]:9.2e} {mags}")
    res = verify_vanishing_claims(est)
    for label, v in res["verdicts"].items():
        worst = float(np.max(res["details"][label]["final_over_initial"]))
        print(f"{label}: {v} (worst final/initial {worst:.3f})")


if __name__ == "__main__":
    main()
