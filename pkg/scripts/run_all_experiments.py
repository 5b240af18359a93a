#!/usr/bin/env python3
"""Run the four standard problem scenarios and drop reports under runs/.

Standard sizes: 50 sessions per cell, 80 training epochs, the four stock
domains.  Expect roughly an hour on one desktop core, dominated by P1
(4 domains x 3 opposition bands x 10 strategies x 50 sessions, five
checkpoint models per domain).  Pass --sessions-per-cell / --epochs to
scale down for a quick look.
"""

import argparse
import time
from pathlib import Path

from negrec.experiments import ScenarioSettings, run_scenario
from negrec.features import Scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs", help="output root (default: runs/)")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--sessions-per-cell", type=int, default=50)
    parser.add_argument("--epochs", type=int, default=80)
    parser.add_argument(
        "--scenarios", default="p1,p2,p3,p4", help="comma-separated subset to run"
    )
    args = parser.parse_args()

    out_root = Path(args.out)
    for token in args.scenarios.split(","):
        scenario = Scenario(token.strip().upper())
        settings = ScenarioSettings(
            seed=args.seed,
            sessions_per_cell=args.sessions_per_cell,
            epochs=args.epochs,
        )
        out_dir = out_root / scenario.value.lower()
        t0 = time.perf_counter()
        report = run_scenario(scenario, out_dir, settings)
        minutes = (time.perf_counter() - t0) / 60.0
        if "accuracy" in report and "average" in report.get("accuracy", {}):
            last = str(report["checkpoints"][-1])
            summary = f"average cp{last} accuracy {100 * report['accuracy']['average'][last]:.1f}%"
        else:
            summary = "see report.txt"
        print(f"{scenario.value}: {summary}  ({minutes:.1f} min)  -> {out_dir}/report.txt")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
