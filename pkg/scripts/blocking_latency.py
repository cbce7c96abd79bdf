"""Blocking vs non-blocking total latency on the calibrated 81-frame, 7-sensor scenario."""

import argparse
from dataclasses import replace

from asyncfusion.simulator import Policy, run
from asyncfusion.synthetic import calibrated_latency_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds, scen = calibrated_latency_scenario(seed=args.seed)
    totals = {}
    for policy in (Policy.DROP, Policy.BLOCK):
        m = run(replace(scen, policy=policy), ds)
        totals[policy] = m.aggregates["total_latency_ms"]
        print(f"{policy.value:>6}: total {totals[policy] / 1000:.3f} s over {m.aggregates['ticks']} frames")
    print(f"block : non-blocking = {totals[Policy.BLOCK] / totals[Policy.DROP]:.3f} : 1")


if __name__ == "__main__":
    main()
