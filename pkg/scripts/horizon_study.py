"""How quickly first-stage gains settle as the discount factors grow.

For each common discount factor the reference game is re-solved over a
range of horizons; the table lists the first horizon whose gain
difference stays below ``eps`` and the fitted geometric decay rate.

    python3 scripts/horizon_study.py --deltas 0.5 0.8 0.9 0.99
"""
import argparse
from dataclasses import replace

import numpy as np

from gamekit import benchmark as bm
from gamekit.behavior import partition, predictors
from gamekit.lti import generate_offline_data
from gamekit.receding import sweep_horizons


def decay_rate(diff):
    """Least-squares slope of ``log d(T)`` over the part above roundoff."""
    d = np.asarray(diff)
    keep = np.isfinite(d) & (d > 1e-13)
    if keep.sum() < 3:
        return float("nan")
    T = np.flatnonzero(keep)
    slope = np.polyfit(T, np.log(d[keep]), 1)[0]
    return float(np.exp(slope))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.5, 0.8, 0.9, 0.99])
    ap.add_argument("--T-max", type=int, default=60)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sys = bm.reference_system()
    data = generate_offline_data(sys, 600, bm.AMPLITUDE, args.seed, np.zeros(sys.n))
    blocks = partition(data, bm.T_INI, args.T_max + 1, n_hint=sys.n, player_partition=(1, 1))
    preds = predictors(blocks)
    base = bm.reference_game(horizon=args.T_max)
    print(f"{'delta':>6} {'settled':>8} {'rate':>7} {'d(T_max)':>10}")
    for delta in args.deltas:
        spec = replace(base, deltas=(delta,) * base.N)
        sweep = sweep_horizons(None, preds, spec, range(1, args.T_max + 1), eps=args.eps)
        print(f"{delta:>6.2f} {str(sweep.settled_at):>8} {decay_rate(sweep.gain_diff):>7.3f} "
              f"{sweep.gain_diff[-1]:>10.2e}")


if __name__ == "__main__":
    main()
