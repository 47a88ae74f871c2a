#!/usr/bin/env python3
"""Run the demo scenario end to end and print the audit summary.

Usage: python scripts/run_demo.py [outdir]
"""

import sys
from pathlib import Path

from make_demo_scenario import DEMO

from crowdflow.scenario import (
    build_model_data,
    run_scenario,
    scenario_from_dict,
    summarize_run,
    write_outputs,
)


def main() -> None:
    outdir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    scenario = scenario_from_dict(DEMO)
    data = build_model_data(scenario)
    trajectory = run_scenario(scenario)
    summary = summarize_run(trajectory, data, scenario)
    paths = write_outputs(trajectory, summary, outdir, scenario=scenario)

    status = trajectory.status
    print(f"status: {status.kind} at t = {status.t:.6g} "
          f"({len(trajectory.records)} records)")
    print(f"rho floor: {trajectory.rho_floor:.6g}, "
          f"observed sup |rho_t|: {summary['kstar_observed']:.6g}")
    horizons = ", ".join(f"{k}={v:.6g}" for k, v in summary["horizons"].items())
    print(f"horizons: {horizons}")
    for name, audit in summary["audits"].items():
        print(f"audit {name}: {audit['verdict']}")
    print(f"outputs: {paths['timeseries']}, {paths['summary']}")


if __name__ == "__main__":
    main()
