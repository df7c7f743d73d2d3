"""``qreg`` command line: fit, select, experiment, qmath, summarize.

Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
Floats are written with ``repr`` (shortest round-trip form), so every
number read back parses to the identical double.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .inference import (
    Criterion, NoSelectionError, RankDeficientError, cross_validate, select_model,
)
from .qcore import QDomainError, QNormal, check_q, density, normalizing_constant, q_exp, q_log
from .simlab import ALL_CRITERIA, METHODS, ExperimentCase, default_workers, expand_grid, run_case
from .solver import PathConfig, Penalty, PenaltySpec, ZeroVarianceError, solve_path, standardize

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _json_num(x):
    x = float(x)
    return None if not math.isfinite(x) else x


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("QREG_SEED")
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"QREG_SEED must be an integer, got {env!r}") from None


# -- CSV input ---------------------------------------------------------------

def read_csv(path, response: str | None = None):
    """Return (predictor names, response name, X, y) from a headed numeric CSV."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if not numbered:
        raise DataError(f"{path}: empty file")
    _, header = numbered[0]
    header = [h.strip() for h in header]
    if len(header) < 2:
        raise DataError(f"{path}:1: need at least one predictor and a response column")
    if len(set(header)) != len(header):
        raise DataError(f"{path}:1: duplicate column names")
    target = header[-1] if response is None else response
    if target not in header:
        raise DataError(f"{path}:1: no column named {target!r}")
    values = []
    for line, row in numbered[1:]:
        if len(row) != len(header):
            raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        parsed = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}:{line}: column {name!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{line}: column {name!r}: non-finite value {cell!r}")
            parsed.append(v)
        values.append(parsed)
    if len(values) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(values)}")
    data = np.array(values)
    j = header.index(target)
    names = [h for h in header if h != target]
    return names, target, np.delete(data, j, axis=1), data[:, j]


def load_design(args):
    names, target, raw, y = read_csv(args.data, args.response)
    try:
        design = standardize(raw, y)
    except ZeroVarianceError as exc:
        raise DataError(f"predictor {names[exc.column]!r} has zero variance") from None
    A = design.X
    if A.shape[0] < A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
        print(f"warning: design with intercept is rank deficient "
              f"({A.shape[0]} rows, {A.shape[1]} columns); restricted MLEs may be unavailable",
              file=sys.stderr)
    return names, target, raw, design


def path_config(args) -> PathConfig:
    return PathConfig(n_lambda=args.n_lambda, lambda_min_ratio=args.lambda_min_ratio,
                      tol=args.tol, max_iter=args.max_iter)


def penalty_spec(args) -> PenaltySpec:
    return PenaltySpec(args.penalty, a=args.a, gamma=args.gamma)


# -- subcommands -------------------------------------------------------------

def write_text(text: str, output) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def cmd_fit(args) -> int:
    names, _, _, design = load_design(args)
    path = solve_path(design, penalty_spec(args), path_config(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lambda", "support_size", "converged", "iterations", "intercept", *names])
    for k in range(len(path)):
        coefs = path[k]
        raw = design.to_raw(coefs.theta)
        w.writerow([fmt(path.lambdas[k]), len(coefs.support), fmt(bool(path.converged[k])),
                    int(path.iterations[k]), *map(fmt, raw)])
    write_text(buf.getvalue(), args.output)
    if not path.all_converged:
        print(f"warning: {int((~path.converged).sum())} path points did not converge",
              file=sys.stderr)
    return EXIT_OK


def cmd_select(args) -> int:
    names, _, _, design = load_design(args)
    q = check_q(args.q)
    spec = penalty_spec(args)
    config = path_config(args)
    crit = Criterion(args.criterion)
    path = solve_path(design, spec, config)
    if crit is Criterion.CV:
        rng = np.random.default_rng(resolve_seed(args.seed))
        cv = cross_validate(design, spec, config, args.folds, rng, lambdas=path.lambdas)
        index, values, chosen = cv.index, cv.errors, path[cv.index]
        value = float(cv.errors[cv.index])
    else:
        sel = select_model(path, crit, design, q)
        if not sel.ok:
            raise NoSelectionError(f"{crit.value} is unavailable at every path point "
                                   "(restricted MLE failed everywhere)")
        index, values, chosen = sel.index, sel.values, sel.fit.theta_hat
        value = float(sel.values[sel.index])
    raw = design.to_raw(chosen.theta)
    report = {
        "penalty": spec.kind.value,
        "criterion": crit.value,
        "q": q,
        "index": index,
        "lambda": float(path.lambdas[index]),
        "support": [names[i - 1] for i in chosen.support],
        "coefficients": {"intercept": float(raw[0]),
                         **{n: float(v) for n, v in zip(names, raw[1:])}},
        "criterion_value": _json_num(value),
        "lambdas": [float(v) for v in path.lambdas],
        "values": [_json_num(v) for v in values],
        "path_converged": path.all_converged,
    }
    write_text(json.dumps(report, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_qmath(args) -> int:
    q = check_q(args.q)
    if args.func == "qlog":
        out = [q_log(u, q) for u in args.u]
    elif args.func == "qexp":
        out = [q_exp(u, q) for u in args.u]
    elif args.func == "density":
        dist = QNormal(q, args.xi, args.sigma)
        out = [density(y, dist) for y in args.y]
    elif args.func == "zq":
        out = [normalizing_constant(QNormal(q, 0.0, args.sigma))]
    else:
        if args.count < 0:
            raise UsageError("--count must be non-negative")
        rng = np.random.default_rng(resolve_seed(args.seed))
        out = QNormal(q, args.xi, args.sigma).sample(args.count, rng)
    sys.stdout.write("".join(fmt(float(v)) + "\n" for v in out))
    return EXIT_OK


# -- experiment config -------------------------------------------------------

CASE_FIELDS = [f.name for f in fields(ExperimentCase)]
PATH_FIELDS = [f.name for f in fields(PathConfig)]
TOP_KEYS = {"schema_version", "cases", "methods", "criteria", "folds", "path", "keep_trials"}


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if str(path).endswith((".yaml", ".yml")):
            import yaml
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
    except Exception as exc:  # parser errors carry their own positions
        raise UsageError(f"{path}: cannot parse config: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a mapping")
    return doc


class Plan:
    def __init__(self, cases, methods, criteria, folds, config, keep_trials):
        self.cases = cases
        self.methods = methods
        self.criteria = criteria
        self.folds = folds
        self.config = config
        self.keep_trials = keep_trials

    def settings_tag(self) -> str:
        blob = json.dumps({"methods": [m.value for m in self.methods],
                           "criteria": [c.value for c in self.criteria],
                           "folds": self.folds, "path": asdict(self.config)}, sort_keys=True)
        return hashlib.sha1(blob.encode()).hexdigest()[:8]


def build_plan(doc: dict, seed: int) -> Plan:
    """Validate a config document and expand it into concrete cases."""
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UsageError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    blocks = doc.get("cases")
    if isinstance(blocks, dict):
        blocks = [blocks]
    if not blocks or not isinstance(blocks, list):
        raise UsageError("config needs a non-empty 'cases' mapping or list")
    cases = []
    for block in blocks:
        if not isinstance(block, dict):
            raise UsageError("each cases entry must be a mapping")
        bad = set(block) - set(CASE_FIELDS)
        if bad:
            raise UsageError(f"unknown case fields: {sorted(bad)}")
        for combo in expand_grid(**block):
            combo.setdefault("base_seed", seed)
            try:
                cases.append(ExperimentCase(**combo))
            except TypeError as exc:
                raise UsageError(f"case {combo}: {exc}") from None
            except ValueError as exc:
                raise UsageError(f"case {combo}: {exc}") from None
    try:
        methods = tuple(Penalty(m) for m in doc.get("methods", [m.value for m in METHODS]))
        criteria = tuple(Criterion(c) for c in doc.get("criteria", [c.value for c in ALL_CRITERIA]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = doc.get("path", {})
    bad = set(path) - set(PATH_FIELDS)
    if bad:
        raise UsageError(f"unknown path fields: {sorted(bad)}")
    try:
        config = PathConfig(**path)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"path: {exc}") from None
    folds = int(doc.get("folds", 10))
    if Criterion.CV in criteria and any(folds > c.n or folds < 2 for c in cases):
        raise UsageError(f"folds={folds} must lie in [2, n] for every case")
    return Plan(cases, methods, criteria, folds, config, bool(doc.get("keep_trials", False)))


SUMMARY_COLUMNS = [*CASE_FIELDS, "method", "criterion", "trials", "available", "true_count",
                   "mean_error", "median_error", "best_count_criterion", "best_error_criterion"]


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for row in rows:
        w.writerow([row[c] if isinstance(row[c], str) else fmt(row[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def write_if_changed(path: Path, text: str) -> bool:
    if path.exists() and path.read_text() == text:
        return False
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return True


def cmd_experiment(args) -> int:
    seed = resolve_seed(args.seed)
    plan = build_plan(load_config(args.config), seed)
    workers = args.workers if args.workers is not None else default_workers()
    if workers < 1:
        raise UsageError("--workers must be at least 1")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    tag = plan.settings_tag()
    failed = []
    done = skipped = 0
    for case in plan.cases:
        stem = f"{case.slug}_{tag}"
        target = out / f"{stem}.csv"
        if target.exists() and not args.force:
            skipped += 1
            continue
        try:
            summary = run_case(case, workers=workers, methods=plan.methods,
                               criteria=plan.criteria, config=plan.config, folds=plan.folds,
                               keep_trials=plan.keep_trials)
        except Exception as exc:  # isolate the failure to this case
            failed.append((stem, f"{type(exc).__name__}: {exc}"))
            print(f"case {stem} failed: {exc}", file=sys.stderr)
            continue
        if plan.keep_trials:
            archive = {"case": asdict(case), "trials": [t.to_dict() for t in summary.trials]}
            write_if_changed(out / f"{stem}.json",
                             json.dumps(archive, indent=1, allow_nan=True) + "\n")
        write_if_changed(target, rows_to_csv(summary.rows()))
        done += 1
        print(f"case {stem}: {summary.n_trials} trials", file=sys.stderr)
    # combined table over every case file of this settings tag
    parts = sorted(p for p in out.glob(f"*_{tag}.csv") if not p.name.startswith("summary_"))
    combined = [rows_to_csv([])]
    for p in parts:
        combined.append(p.read_text().split("\n", 1)[1])
    write_if_changed(out / f"summary_{tag}.csv", "".join(combined))
    if failed:
        write_if_changed(out / f"failed_{tag}.json", json.dumps(dict(failed), indent=1) + "\n")
    print(f"{done} run, {skipped} skipped, {len(failed)} failed", file=sys.stderr)
    for stem, msg in failed:
        print(f"  failed: {stem}: {msg}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_summarize(args) -> int:
    src = Path(args.path)
    files = sorted(p for p in src.glob("*.csv") if not p.name.startswith("summary_")) \
        if src.is_dir() else [src]
    if not files:
        raise DataError(f"no result CSVs under {src}")
    rows = []
    for p in files:
        with p.open() as fh:
            rows.extend(r for r in csv.DictReader(fh)
                        if args.all or r["criterion"] == "best")
    keys = ["q", "n", "d", "r_nz", "theta0", "method", "criterion", "true_count", "trials",
            "mean_error", "best_count_criterion", "best_error_criterion"]
    if args.csv:
        buf = io.StringIO()
        w = csv.DictWriter(buf, keys, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        sys.stdout.write(buf.getvalue())
        return EXIT_OK
    table = [keys] + [[r[k] for k in keys] for r in rows]
    widths = [max(len(str(row[i])) for row in table) for i in range(len(keys))]
    for row in table:
        print("  ".join(str(v).rjust(w) for v, w in zip(row, widths)))
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def _add_path_flags(p):
    p.add_argument("data", help="CSV with a header row")
    p.add_argument("--response", help="response column (default: last)")
    p.add_argument("--penalty", default="lasso", choices=[m.value for m in Penalty])
    p.add_argument("--a", type=float, default=3.7, help="SCAD shape")
    p.add_argument("--gamma", type=float, default=3.0, help="MCP shape")
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--lambda-min-ratio", type=float, default=None)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("-o", "--output", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="solve a regularization path")
    _add_path_flags(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("select", help="choose a model on the path")
    _add_path_flags(p)
    p.add_argument("--criterion", default="BIC2", choices=[c.value for c in Criterion])
    p.add_argument("--q", type=float, default=1.0)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_select)

    p = sub.add_parser("experiment", help="run Monte-Carlo cases from a config")
    p.add_argument("config", help="JSON or YAML config")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="base seed for cases without one")
    p.add_argument("--force", action="store_true", help="recompute existing cases")
    p.set_defaults(handler=cmd_experiment)

    p = sub.add_parser("qmath", help="evaluate q-functions")
    p.add_argument("func", choices=["qlog", "qexp", "density", "zq", "sample"])
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--u", type=float, nargs="+", default=[1.0])
    p.add_argument("--y", type=float, nargs="+", default=[0.0])
    p.add_argument("--xi", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(handler=cmd_qmath)

    p = sub.add_parser("summarize", help="tabulate experiment outputs")
    p.add_argument("path", help="result directory or CSV file")
    p.add_argument("--all", action="store_true", help="include per-criterion rows")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of a text table")
    p.set_defaults(handler=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on usage errors
    try:
        return args.handler(args)
    except (UsageError, QDomainError) as exc:
        print(f"qreg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, RankDeficientError, NoSelectionError) as exc:
        print(f"qreg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        # invalid flag values caught by dataclass validation
        print(f"qreg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
