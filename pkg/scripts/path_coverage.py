"""How often does each method's path contain the true support at all?

Selection by any criterion can only find the true model if some path point
has exactly that support; this separates path quality from criterion quality.
"""

from __future__ import annotations

import argparse

from qreg.simlab import ExperimentCase, gen_design, gen_response, make_true_theta, stream
from qreg.solver import Penalty, PenaltySpec, solve_path


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--r-nz", type=float, default=0.2)
    p.add_argument("--theta0", type=float, default=100.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    case = ExperimentCase(q=args.q, n=args.n, d=args.d, r_nz=args.r_nz, theta0=args.theta0,
                          m_trials=args.trials, base_seed=args.seed)
    truth = make_true_theta(case.d, case.r_nz, case.theta0)
    hits = {m: 0 for m in Penalty}
    for t in range(case.m_trials):
        design = gen_design(case.n, case.d, stream(case.base_seed, t, "design"))
        design = design.with_y(gen_response(design, truth, case.q,
                                            stream(case.base_seed, t, "noise")))
        for m in Penalty:
            supports = solve_path(design, PenaltySpec(m)).supports
            hits[m] += truth.support in supports
    for m, h in hits.items():
        print(f"{m.value:<6} true support on path in {h}/{case.m_trials} trials")


if __name__ == "__main__":
    main()
