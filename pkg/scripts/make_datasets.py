"""Write the synthetic datasets and scenario files used by the CLI walkthrough."""

import argparse
import json
from pathlib import Path

from asyncfusion.core import save_dataset
from asyncfusion.simulator import Deadline, Scenario
from asyncfusion.synthetic import POINT_MIX, calibrated_latency_scenario, linear_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    save_dataset(linear_scene(seed=args.seed), args.out / "linear")
    save_dataset(linear_scene(seed=args.seed, payload="points", mix=POINT_MIX), args.out / "points")
    ds, scen = calibrated_latency_scenario(seed=args.seed)
    save_dataset(ds, args.out / "calibrated")

    scenarios = {
        "calibrated.json": scen.to_dict(),
        "fastest_arrival.json": Scenario(100.0, first_tick=100, seed=args.seed).to_dict(),
        "budget_52ms.json": Scenario(100.0, deadline=Deadline.fixed_budget(52.0), first_tick=100, seed=args.seed).to_dict(),
    }
    for name, body in scenarios.items():
        (args.out / name).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    print(f"wrote datasets linear/, points/, calibrated/ and {len(scenarios)} scenarios under {args.out}")


if __name__ == "__main__":
    main()
