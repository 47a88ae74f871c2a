#!/usr/bin/env python3
"""Write a ready-to-run demo scenario JSON.

Usage: python scripts/make_demo_scenario.py [path]

The scenario is a smooth one-dimensional run with a resource profile kappa,
mode-structured entry/travel rates, a uniform transfer kernel and an initial
density sitting above the kappa-aligned quasi-steady profile, plus study
blocks for the epsilon ladder and the two-grid consistency check.
"""

import json
import sys

DEMO = {
    "schema_version": 1,
    "grid": {"d": 1, "n": 128},
    "params": {"delta": 0.08, "u_plus": 0.85, "u_minus": 0.6, "rho_tilde": 1.0},
    "fields": {
        "kappa": {"kind": "modes", "offset": 0.5,
                  "modes": [{"k": [1], "amplitude": 0.2}]},
        "eta": {"kind": "modes", "offset": 0.05,
                "modes": [{"k": [1], "amplitude": 0.02, "phase": 0.4}]},
        "omega": {"kind": "constant", "value": 0.05},
        "gamma": {"kind": "modes", "offset": 0.3,
                  "modes": [{"k": [1], "amplitude": 0.1, "phase": -1.5707963267948966}]},
        "rho0": {"kind": "modes", "offset": 1.0,
                 "modes": [{"k": [1], "amplitude": 0.15}]},
    },
    "kernel": {"kind": "uniform"},
    "solver": {"epsilon": 0.05, "t_end": 0.5, "guard_k": 1e9,
               "dt": {"mode": "fixed", "value": 0.002}, "record_every": 10},
    "studies": {
        "epsilon_ladder": {"epsilons": [0.2, 0.1, 0.05, 0.025], "m_prime": 3},
        "resolution_pair": {"n2": 256, "m_prime": 3, "threshold": 1e-6},
    },
    "output": {"write_snapshots": False},
}


def main() -> None:
    path = sys.argv[1] if len(sys.argv) > 1 else "demo_scenario.json"
    with open(path, "w") as fh:
        json.dump(DEMO, fh, indent=2)
        fh.write("\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
