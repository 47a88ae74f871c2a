#!/usr/bin/env python3
"""Smoothing-operator property suite at the reference settings.

Usage: python scripts/run_mollifier_checks.py [seeds]

Runs the five-property suite on the d=1 n=256 and d=2 n=64 grids with
m = 5, nu = 2 and prints one line per item; exits nonzero on any failure.
"""

import sys

from crowdflow.analysis import mollifier_lemma_suite
from crowdflow.spectral import TorusGrid


def main() -> int:
    seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    failed = False
    for d, n in ((1, 256), (2, 64)):
        report = mollifier_lemma_suite(TorusGrid(d, n), m=5, nu=2, seeds=seeds)
        print(f"d={d} n={n} (band of {len(report.band)} modes, "
              f"rng_seed={report.rng_seed}):")
        for item in report.items:
            flag = "PASS" if item.passed else "FAIL"
            print(f"  {item.key:16s} {flag}  worst={item.worst:.6e}  "
                  f"tol={item.tolerance:.3e}")
        failed = failed or not report.all_passed
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
