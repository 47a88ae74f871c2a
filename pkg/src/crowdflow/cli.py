"""Command-line surface.

Subcommands:

* ``simulate <scenario.json> --out <dir>`` -- one run plus audits.
* ``epsilon-study <scenario.json> --epsilons 0.2,0.1,0.05,0.025 --m-prime 3
  --out <dir>`` -- smoothing-parameter convergence ladder.
* ``verify --dim <d> --n <int> --m <int> --nu <int> --seeds <int>`` --
  mollifier/norm property suite; exit code 0 iff every item passes.
* ``envelope --e0 <float> --c <float> --m <int> --t-max <float>`` -- print
  energy-envelope samples and the blow-up horizon.
* ``resolution-check <scenario.json> --n2 <int> --out <dir>`` -- two-grid
  consistency experiment.

No environment variables are consulted; all configuration lives in files and
flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analysis import EnvelopeParams, envelope, existence_horizon, mollifier_lemma_suite
from .scenario import (
    ScenarioParseError,
    ValidationError,
    build_model_data,
    epsilon_study,
    load_scenario,
    resolution_check,
    run_scenario,
    summarize_run,
    write_outputs,
)
from .spectral import TorusGrid


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdflow",
                                     description="Pseudospectral crowding-diffusion lab")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario with audits")
    sim.add_argument("scenario", type=Path)
    sim.add_argument("--out", type=Path, required=True)

    study = sub.add_parser("epsilon-study", help="smoothing-parameter convergence ladder")
    study.add_argument("scenario", type=Path)
    study.add_argument("--epsilons", type=str, default=None,
                       help="comma-separated decreasing ladder, e.g. 0.2,0.1,0.05,0.025")
    study.add_argument("--m-prime", type=int, default=None)
    study.add_argument("--out", type=Path, required=True)

    verify = sub.add_parser("verify", help="mollifier and norm property suite")
    verify.add_argument("--dim", type=int, default=1)
    verify.add_argument("--n", type=int, default=256)
    verify.add_argument("--m", type=int, default=5)
    verify.add_argument("--nu", type=int, default=2)
    verify.add_argument("--seeds", type=int, default=100)
    verify.add_argument("--rng-seed", type=int, default=2024)

    env = sub.add_parser("envelope", help="closed-form energy envelope samples")
    env.add_argument("--e0", type=float, required=True)
    env.add_argument("--c", type=float, required=True)
    env.add_argument("--m", type=int, required=True)
    env.add_argument("--t-max", type=float, required=True)
    env.add_argument("--samples", type=int, default=11)

    res = sub.add_parser("resolution-check", help="two-grid consistency experiment")
    res.add_argument("scenario", type=Path)
    res.add_argument("--n2", type=int, default=None)
    res.add_argument("--m-prime", type=int, default=None)
    res.add_argument("--threshold", type=float, default=None)
    res.add_argument("--out", type=Path, required=True)

    return parser


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    data = build_model_data(scenario)
    trajectory = run_scenario(scenario)
    summary = summarize_run(trajectory, data, scenario)
    paths = write_outputs(trajectory, summary, args.out, scenario=scenario,
                          write_snapshots=scenario.write_snapshots)
    status = trajectory.status
    extra = f" ({status.guard_kind})" if status.guard_kind else ""
    print(f"status: {status.kind}{extra} at t = {status.t:.6g}; "
          f"records: {len(trajectory.records)}; outputs in {paths['summary']}")
    verdicts = [f"{k}={v['verdict']}" for k, v in summary["audits"].items()]
    print("audits: " + ", ".join(verdicts))
    return 0


def _cmd_epsilon_study(args) -> int:
    scenario = load_scenario(args.scenario)
    epsilons = None
    if args.epsilons:
        epsilons = tuple(float(tok) for tok in args.epsilons.split(",") if tok)
    table = epsilon_study(scenario, epsilons, args.m_prime)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ladder_csv = out / "ladder.csv"
    with open(ladder_csv, "w", newline="") as fh:
        fh.write("eps_hi,eps_lo,difference\n")
        for (hi, lo), diff in zip(zip(table.epsilons, table.epsilons[1:]), table.differences):
            fh.write(f"{hi:.17g},{lo:.17g},{diff:.17g}\n")
    (out / "study.json").write_text(json.dumps({
        "epsilons": list(table.epsilons),
        "differences": list(table.differences),
        "fitted_order": table.fitted_order,
        "norm_index": table.norm_index,
    }, indent=2) + "\n")
    print(f"ladder differences (H^{table.norm_index}): "
          + ", ".join(f"{d:.6g}" for d in table.differences))
    print(f"fitted order: {table.fitted_order:.4f}")
    return 0


def _cmd_verify(args) -> int:
    grid = TorusGrid(args.dim, args.n)
    report = mollifier_lemma_suite(grid, args.m, args.nu, args.seeds, args.rng_seed)
    print(f"suite: d={report.d} n={report.n} m={report.m} nu={report.nu} "
          f"seeds={report.seeds} rng_seed={report.rng_seed} band_modes={len(report.band)}")
    for item in report.items:
        flag = "PASS" if item.passed else "FAIL"
        print(f"  {item.key:16s} {flag}  worst={item.worst:.6e}  tol={item.tolerance:.3e}  "
              f"({item.description})")
    return 0 if report.all_passed else 1


def _cmd_envelope(args) -> int:
    params = EnvelopeParams(args.e0, args.c, args.m)
    horizon = existence_horizon(params)
    print(f"T_E = {horizon:.17g}")
    t_hi = min(args.t_max, horizon * (1.0 - 1e-9))
    samples = max(args.samples, 2)
    print("t,envelope")
    for i in range(samples):
        t = t_hi * i / (samples - 1)
        print(f"{t:.17g},{envelope(params, t):.17g}")
    return 0


def _cmd_resolution_check(args) -> int:
    scenario = load_scenario(args.scenario)
    report = resolution_check(scenario, args.n2, args.m_prime, args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolution.json").write_text(json.dumps({
        "n_coarse": report.n_coarse,
        "n_fine": report.n_fine,
        "norm_index": report.norm_index,
        "difference": report.difference,
        "threshold": report.threshold,
        "verdict": "pass" if report.passed else "fail",
    }, indent=2) + "\n")
    print(f"H^{report.norm_index} difference {report.n_coarse} vs {report.n_fine}: "
          f"{report.difference:.6e} (threshold {report.threshold:.1e}) -> "
          f"{'PASS' if report.passed else 'FAIL'}")
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "epsilon-study": _cmd_epsilon_study,
        "verify": _cmd_verify,
        "envelope": _cmd_envelope,
        "resolution-check": _cmd_resolution_check,
    }
    try:
        return handlers[args.command](args)
    except (ValidationError, ScenarioParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
