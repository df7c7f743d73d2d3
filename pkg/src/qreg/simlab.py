"""Monte-Carlo harness: true-model recovery and generalization error of
LASSO/SCAD/MCP paths under q-normal errors, per information criterion.

Every random quantity of a trial comes from its own stream, keyed by
``(base_seed, trial index, stream tag)``, so any subset of trials can be
re-run in isolation and reproduces exactly.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np

from .inference import (
    INFORMATION_CRITERIA, Criterion, cross_validate, mle_restricted, select_model,
)
from .qcore import QNormal, check_q
from .solver import Coefficients, Design, PathConfig, Penalty, PenaltySpec, solve_path, standardize

METHODS = (Penalty.LASSO, Penalty.SCAD, Penalty.MCP)
ALL_CRITERIA = tuple(Criterion)
STREAMS = {"design": 0, "noise": 1, "cv": 2, "copies": 3}

# default experiment grid
GRID_Q = (1.0, 13 / 11, 1.5, 5 / 3, 2.0, 2.01, 2.1, 2.5)
GRID_N = (100, 1000)
GRID_D = (10, 100)
GRID_R_NZ = (0.2, 0.4, 0.6, 0.8)
GRID_THETA0 = (1.0, 10.0, 100.0, 1000.0)


def stream(base_seed: int, trial: int, tag: str) -> np.random.Generator:
    seq = np.random.SeedSequence(int(base_seed), spawn_key=(int(trial), STREAMS[tag]))
    return np.random.default_rng(seq)


def nonzero_count(d: int, r_nz: float) -> int:
    k = d * r_nz
    if not (abs(k - round(k)) < 1e-9 and round(k) >= 1):
        raise ValueError(f"d * r_nz = {k} is not a positive integer")
    return int(round(k))


@dataclass(frozen=True)
class ExperimentCase:
    q: float
    n: int
    d: int
    r_nz: float
    theta0: float
    m_trials: int = 100
    m_copies: int = 100
    base_seed: int = 0

    def __post_init__(self):
        check_q(self.q)
        if self.n < 2 or self.d < 1 or self.m_trials < 1 or self.m_copies < 1:
            raise ValueError("n >= 2, d >= 1, m_trials >= 1, m_copies >= 1 required")
        if not 0 < self.r_nz <= 1:
            raise ValueError("r_nz must lie in (0, 1]")
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")
        nonzero_count(self.d, self.r_nz)

    @property
    def true_support(self) -> tuple[int, ...]:
        return tuple(range(1, nonzero_count(self.d, self.r_nz) + 1))

    @property
    def slug(self) -> str:
        return (f"q{self.q:.6g}_n{self.n}_d{self.d}_r{self.r_nz:g}_t{self.theta0:g}"
                f"_m{self.m_trials}_c{self.m_copies}_s{self.base_seed}")


def make_true_theta(d: int, r_nz: float, theta0: float) -> Coefficients:
    theta = np.zeros(d + 1)
    theta[1:nonzero_count(d, r_nz) + 1] = theta0
    return Coefficients(theta)


def gen_design(n: int, d: int, rng: np.random.Generator) -> Design:
    """Standard-normal design, standardized; the response is a zero placeholder."""
    if n < 2:
        raise ValueError("n must be at least 2")
    return standardize(rng.standard_normal((n, d)), np.zeros(n))


def gen_response(design: Design, theta_true: Coefficients, q: float,
                 rng: np.random.Generator) -> np.ndarray:
    return design.X @ theta_true.theta + QNormal(q).sample(design.n, rng)


def generalization_errors(thetas, theta_true: Coefficients, q: float, n: int,
                          m_copies: int, rng: np.random.Generator) -> np.ndarray:
    """Mean over fresh (y', X') copies of (1/n)||y' - X' theta||^2, per row of ``thetas``.

    All rows are scored on the same copies.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    d = thetas.shape[1] - 1
    total = np.zeros(len(thetas))
    for _ in range(m_copies):
        fresh = gen_design(n, d, rng)
        y = gen_response(fresh, theta_true, q, rng)
        resid = y[:, None] - fresh.X @ thetas.T
        total += np.einsum("ij,ij->j", resid, resid) / n
    return total / m_copies


def generalization_error(theta_hat: Coefficients, theta_true: Coefficients, q: float,
                         n: int, m_copies: int, design: Design | None = None,
                         rng: np.random.Generator | None = None) -> float:
    """Generalization error of one estimate; ``design`` is accepted for its shape only."""
    if design is not None and design.d + 1 != len(theta_hat.theta):
        raise ValueError("theta_hat does not match the design dimension")
    rng = rng if rng is not None else np.random.default_rng(0)
    return float(generalization_errors(theta_hat.theta, theta_true, q, n, m_copies, rng)[0])


@dataclass
class Cell:
    support: tuple[int, ...] | None
    true_model: bool
    gen_error: float
    index: int | None = None

    @property
    def available(self) -> bool:
        return self.support is not None


@dataclass
class TrialResult:
    trial: int
    base_seed: int
    true_support: tuple[int, ...]
    cells: dict  # (method value, criterion value) -> Cell
    path_converged: dict  # method value -> bool
    mle_failures: int
    oracle_gen_error: float

    def to_dict(self) -> dict:
        return {
            "trial": self.trial,
            "base_seed": self.base_seed,
            "true_support": list(self.true_support),
            "path_converged": self.path_converged,
            "mle_failures": self.mle_failures,
            "oracle_gen_error": self.oracle_gen_error,
            "cells": [
                {"method": m, "criterion": c,
                 "support": None if cell.support is None else list(cell.support),
                 "true_model": cell.true_model, "gen_error": cell.gen_error,
                 "index": cell.index}
                for (m, c), cell in self.cells.items()
            ],
        }


def _key(method, criterion) -> tuple[str, str]:
    return Penalty(method).value, Criterion(criterion).value


def run_trial(case: ExperimentCase, trial: int, methods=METHODS, criteria=ALL_CRITERIA,
              config: PathConfig | None = None, folds: int = 10) -> TrialResult:
    """Generate one data set, fit every method's path and score every criterion."""
    config = config or PathConfig()
    q = case.q
    truth = make_true_theta(case.d, case.r_nz, case.theta0)
    true_support = truth.support
    design = gen_design(case.n, case.d, stream(case.base_seed, trial, "design"))
    design = design.with_y(gen_response(design, truth, q, stream(case.base_seed, trial, "noise")))

    mle_cache: dict = {}
    picks = {}
    path_ok = {}
    for method in methods:
        spec = PenaltySpec(method)
        path = solve_path(design, spec, config)
        path_ok[spec.kind.value] = path.all_converged
        for crit in criteria:
            crit = Criterion(crit)
            key = _key(method, crit)
            if crit is Criterion.CV:
                cv = cross_validate(design, spec, config, folds,
                                    stream(case.base_seed, trial, "cv"), lambdas=path.lambdas)
                picks[key] = (cv.index, path[cv.index])
                continue
            sel = select_model(path, crit, design, q, cache=mle_cache)
            picks[key] = (sel.index, sel.fit.theta_hat) if sel.ok else (None, None)

    oracle = mle_restricted(design, true_support, q)
    thetas = [t.theta for _, t in picks.values() if t is not None] + [oracle.theta_hat.theta]
    errors = generalization_errors(np.array(thetas), truth, q, case.n, case.m_copies,
                                   stream(case.base_seed, trial, "copies"))
    cells = {}
    j = 0
    for key, (idx, theta) in picks.items():
        if theta is None:
            cells[key] = Cell(None, False, math.nan, None)
            continue
        supp = theta.support
        cells[key] = Cell(supp, supp == true_support, float(errors[j]), idx)
        j += 1
    failures = sum(1 for fit in mle_cache.values() if not fit.converged)
    return TrialResult(trial, case.base_seed, true_support, cells, path_ok, failures,
                       float(errors[-1]) if oracle.converged else math.nan)


@dataclass
class CaseSummary:
    case: ExperimentCase
    n_trials: int
    counts: dict  # (method, criterion) -> true-model count
    available: dict  # (method, criterion) -> trials with a selection
    mean_error: dict
    median_error: dict
    oracle_mean_error: float
    unconverged_paths: dict  # method -> trials with a non-converged path point
    mle_failures: int
    trials: list = field(default_factory=list, repr=False)

    @property
    def methods(self) -> list[str]:
        return list(dict.fromkeys(m for m, _ in self.counts))

    def criteria_for(self, method: str) -> list[str]:
        return [c for m, c in self.counts if m == method]

    def best_count(self, method, criteria=None) -> tuple[str, int]:
        method = Penalty(method).value
        pool = [Criterion(c).value for c in criteria] if criteria else self.criteria_for(method)
        best = max(pool, key=lambda c: (self.counts[(method, c)], -pool.index(c)))
        return best, self.counts[(method, best)]

    def best_rate(self, method, criteria=None) -> float:
        return self.best_count(method, criteria)[1] / self.n_trials

    def best_error(self, method, criteria=None) -> tuple[str, float]:
        method = Penalty(method).value
        pool = [Criterion(c).value for c in criteria] if criteria else self.criteria_for(method)
        finite = [c for c in pool if not math.isnan(self.mean_error[(method, c)])]
        if not finite:
            return pool[0], math.nan
        best = min(finite, key=lambda c: self.mean_error[(method, c)])
        return best, self.mean_error[(method, best)]

    def rows(self) -> list[dict]:
        """Flat rows: one per (method, criterion) plus one 'best' row per method."""
        base = asdict(self.case)
        out = []
        for (m, c), count in self.counts.items():
            out.append({**base, "method": m, "criterion": c, "trials": self.n_trials,
                        "available": self.available[(m, c)], "true_count": count,
                        "mean_error": self.mean_error[(m, c)],
                        "median_error": self.median_error[(m, c)],
                        "best_count_criterion": "", "best_error_criterion": ""})
        for m in self.methods:
            cc, count = self.best_count(m)
            ce, err = self.best_error(m)
            out.append({**base, "method": m, "criterion": "best", "trials": self.n_trials,
                        "available": self.n_trials, "true_count": count,
                        "mean_error": err, "median_error": self.median_error[(m, ce)],
                        "best_count_criterion": cc, "best_error_criterion": ce})
        return out


def summarize_trials(case: ExperimentCase, trials: list[TrialResult],
                     keep_trials: bool = False) -> CaseSummary:
    """Aggregate in trial-index order (fixed floating-point reduction order)."""
    trials = sorted(trials, key=lambda t: t.trial)
    if not trials:
        raise ValueError("no trials to summarize")
    keys = list(trials[0].cells)
    counts, avail, means, medians = {}, {}, {}, {}
    for key in keys:
        cells = [t.cells[key] for t in trials]
        counts[key] = sum(c.true_model for c in cells)
        errs = [c.gen_error for c in cells if c.available]
        avail[key] = len(errs)
        means[key] = math.fsum(errs) / len(errs) if errs else math.nan
        medians[key] = float(np.median(errs)) if errs else math.nan
    oracle = [t.oracle_gen_error for t in trials if not math.isnan(t.oracle_gen_error)]
    methods = list(dict.fromkeys(m for m, _ in keys))
    return CaseSummary(
        case=case, n_trials=len(trials), counts=counts, available=avail,
        mean_error=means, median_error=medians,
        oracle_mean_error=math.fsum(oracle) / len(oracle) if oracle else math.nan,
        unconverged_paths={m: sum(not t.path_converged[m] for t in trials) for m in methods},
        mle_failures=sum(t.mle_failures for t in trials),
        trials=trials if keep_trials else [],
    )


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def run_case(case: ExperimentCase, workers: int = 1, trial_indices=None,
             methods=METHODS, criteria=ALL_CRITERIA, config: PathConfig | None = None,
             folds: int = 10, keep_trials: bool = False) -> CaseSummary:
    """Run ``case.m_trials`` trials (or ``trial_indices``) and aggregate them."""
    indices = list(range(case.m_trials)) if trial_indices is None else list(trial_indices)
    job = partial(run_trial, case, methods=tuple(methods), criteria=tuple(criteria),
                  config=config, folds=folds)
    if workers <= 1 or len(indices) <= 1:
        trials = [job(i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, len(indices) // (4 * workers))
            trials = list(pool.map(job, indices, chunksize=chunk))
    return summarize_trials(case, trials, keep_trials)


def expand_grid(**axes) -> list[dict]:
    """Cartesian product of list-valued fields; scalars are broadcast."""
    names = list(axes)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in axes.values()]
    return [dict(zip(names, combo)) for combo in itertools.product(*values)]
