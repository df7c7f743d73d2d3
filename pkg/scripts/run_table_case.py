"""Run one Monte-Carlo case and print per-criterion and best-over-criteria results.

    python scripts/run_table_case.py --q 1 --n 100 --d 10 --r-nz 0.2 --theta0 100 --trials 200
"""

from __future__ import annotations

import argparse
import time

from qreg.simlab import ExperimentCase, default_workers, run_case


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--r-nz", type=float, default=0.2)
    p.add_argument("--theta0", type=float, default=100.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--copies", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=default_workers())
    args = p.parse_args()

    case = ExperimentCase(q=args.q, n=args.n, d=args.d, r_nz=args.r_nz, theta0=args.theta0,
                          m_trials=args.trials, m_copies=args.copies, base_seed=args.seed)
    t0 = time.perf_counter()
    summary = run_case(case, workers=args.workers)
    print(f"{case.slug}  ({time.perf_counter() - t0:.0f}s)")
    print(f"oracle (true-support MLE) mean error: {summary.oracle_mean_error:.4f}")
    crits = summary.criteria_for("lasso")
    print("criterion " + "".join(f"{m:>18}" for m in summary.methods))
    for c in crits:
        cells = [f"{summary.counts[(m, c)]:>5}/{summary.available[(m, c)]:<4}"
                 f"{summary.mean_error[(m, c)]:>8.3f}" for m in summary.methods]
        print(f"{c:<9} " + " ".join(f"{s:>17}" for s in cells))
    for m in summary.methods:
        cc, count = summary.best_count(m)
        ce, err = summary.best_error(m)
        print(f"best {m:<6} rate {count / case.m_trials:.3f} ({cc})   error {err:.4f} ({ce})")
    if any(summary.unconverged_paths.values()) or summary.mle_failures:
        print(f"unconverged paths {summary.unconverged_paths}, MLE failures {summary.mle_failures}")


if __name__ == "__main__":
    main()
