#!/usr/bin/env python3
"""Smoothing-parameter convergence experiment on the demo scenario.

Usage: python scripts/run_epsilon_ladder.py [m_prime]

Runs the ladder declared in the demo scenario, prints the successive
H^{m'} differences at the final time and the fitted empirical order.
"""

import sys

from make_demo_scenario import DEMO

from crowdflow.scenario import epsilon_study, scenario_from_dict


def main() -> None:
    m_prime = int(sys.argv[1]) if len(sys.argv) > 1 else None
    scenario = scenario_from_dict(DEMO)
    table = epsilon_study(scenario, m_prime=m_prime)
    print(f"ladder: {list(table.epsilons)}  (H^{table.norm_index} differences)")
    for (hi, lo), diff in zip(zip(table.epsilons, table.epsilons[1:]),
                              table.differences):
        print(f"  {hi:>7.4g} -> {lo:>7.4g}: {diff:.6e}")
    print(f"fitted order: {table.fitted_order:.4f}")


if __name__ == "__main__":
    main()
