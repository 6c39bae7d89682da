"""Simulated mean delay against the exact sum and the extreme-value approximation,
plus the Kolmogorov distance of rescaled delays to the Gumbel law.

    python3 scripts/evt_accuracy.py [--reps 30] [--budget 200]
"""

import argparse
import math

from rlnc_broadcast import analytics as an
from rlnc_broadcast.channel import ChannelParams, Correlated, Invariant
from rlnc_broadcast.coding import Idealized
from rlnc_broadcast.sim import SessionConfig, replicate
from rlnc_broadcast.stats import DelaySample, ks_against_gumbel, ks_reference


def main(reps: int, budget: int, seed: int) -> None:
    print("channel,n,k,sim.mean_delay,sim.delay_hw,exact.mean_delay,approx.evt_mean,"
          "ks.scaled,ks.refined,ks.reference")
    for n in (100, 1000):
        for k in (math.ceil(50 * math.log(n)), n):
            rep = replicate(SessionConfig(Invariant(0.1), Idealized(k), n, budget=budget, seed=seed), reps)
            exact = an.exact_mean_delay_invariant(n, k, 0.1)
            evt = an.evt_moments_invariant(n, k, 0.1).mean
            ks = [ks_against_gumbel(DelaySample.from_delays(rep.delays, n, k, 0.1, norming=m).rescaled)
                  for m in ("scaled", "refined")]
            print(f"p=0.1,{n},{k},{rep.mean_delay:.4f},{rep.delay_hw:.4f},{exact:.4f},{evt:.4f},"
                  f"{ks[0]:.4f},{ks[1]:.4f},{ks_reference(rep.delays.size):.4f}")
            cfg = SessionConfig(Correlated(ChannelParams(0.3, 0.3)), Idealized(k), n, budget=budget,
                                seed=seed, block_start="all_on")
            rep = replicate(cfg, reps)
            evt = an.evt_moments(n, k, 0.3, 0.3).mean
            print(f"alpha=beta=0.3,{n},{k},{rep.mean_delay:.4f},{rep.delay_hw:.4f},,{evt:.4f},,,")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--budget", type=int, default=200)
    ap.add_argument("--seed", type=int, default=2024)
    a = ap.parse_args()
    main(a.reps, a.budget, a.seed)
