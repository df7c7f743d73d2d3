"""Likelihoods under the q-normal linear model, information criteria, and
model selection along a regularization path.

The dispersion is fixed at one, so for residuals ``r = y - X theta``

    log-likelihood   sum_a log f_q(r_a)
    L_q-likelihood   sum_a log_q f_q(r_a) = -c ||r||^2 + n log_q(1/Z_q),
                     c = Z_q**(q-1) / (3-q).

The constant is ``log_q(1/Z_q) = -Z_q**(q-1) log_q(Z_q)``; it differs from
``-log_q(Z_q)`` unless q = 1, and is irrelevant to every argmax.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .qcore import QNormal, check_q, log_density, normalizing_constant, q_log, q_log_of_log
from .solver import (
    Coefficients, Design, PathConfig, PenaltySpec, SolutionPath, ZeroVarianceError,
    lambda_grid, solve_path, standardize,
)


class Criterion(str, enum.Enum):
    AIC1 = "AIC1"
    AIC2 = "AIC2"
    BIC1 = "BIC1"
    BIC2 = "BIC2"
    LqAIC1 = "LqAIC1"
    LqAIC2 = "LqAIC2"
    LqBIC1 = "LqBIC1"
    LqBIC2 = "LqBIC2"
    CV = "CV"

    @property
    def uses_mle(self) -> bool:
        return self.value.endswith("1")

    @property
    def uses_lq(self) -> bool:
        return self.value.startswith("Lq")

    @property
    def is_bic(self) -> bool:
        return "BIC" in self.value


INFORMATION_CRITERIA = tuple(c for c in Criterion if c is not Criterion.CV)


class RankDeficientError(ValueError):
    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(f"design is rank deficient; dependent columns: {list(self.columns)}")


class IRLSAscentError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModelFit:
    theta_hat: Coefficients
    d_prime: int
    log_lik: float
    lq_lik: float
    source: str  # "path_estimate" | "restricted_mle"
    converged: bool = True
    iterations: int = 0

    @property
    def support(self) -> tuple[int, ...]:
        return self.theta_hat.support


def _theta(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, Coefficients) else np.asarray(theta, dtype=float)


def residuals(design: Design, theta) -> np.ndarray:
    return design.y - design.X @ _theta(theta)


def log_likelihood(design: Design, theta, q: float) -> float:
    """Sum of q-normal log-densities (sigma = 1) of the residuals."""
    dist = QNormal(check_q(q))
    return math.fsum(log_density(residuals(design, theta), dist))


def lq_likelihood(design: Design, theta, q: float) -> float:
    """Sum of q-logarithms of the model densities at the observations."""
    dist = QNormal(check_q(q))
    return math.fsum(q_log_of_log(log_density(residuals(design, theta), dist), q))


def lq_constant(q: float) -> float:
    """``c = Z_q**(q-1)/(3-q)``, the curvature of the L_q-likelihood in the residuals."""
    zq = normalizing_constant(QNormal(check_q(q)))
    return zq ** (q - 1.0) / (3.0 - q)


def lq_likelihood_closed_form(design: Design, theta, q: float) -> float:
    r = residuals(design, theta)
    zq = normalizing_constant(QNormal(check_q(q)))
    return -lq_constant(q) * float(r @ r) + design.n * q_log(1.0 / zq, q)


def _dependent_columns(A: np.ndarray, labels) -> list:
    rank = np.linalg.matrix_rank(A)
    if rank == A.shape[1]:
        return []
    keep: list[int] = []
    dependent = []
    for j in range(A.shape[1]):
        if np.linalg.matrix_rank(A[:, keep + [j]]) == len(keep) + 1:
            keep.append(j)
        else:
            dependent.append(labels[j])
    return dependent


def _ols(A: np.ndarray, y: np.ndarray, labels) -> np.ndarray:
    if A.shape[0] < A.shape[1]:
        raise RankDeficientError(labels[A.shape[0]:])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        raise RankDeficientError(_dependent_columns(A, labels))
    return coef


def mlqe(design: Design, q: float) -> Coefficients:
    """Maximizer of the L_q-likelihood: ordinary least squares for every q."""
    check_q(q)
    coef = _ols(design.X, design.y, list(range(design.d + 1)))
    return Coefficients(coef)


def _irls(A, y, q, start, tol, max_iter):
    k = (q - 1.0) / (3.0 - q)
    dist = QNormal(q)
    coef = start.copy()

    def ll(c):
        return math.fsum(log_density(y - A @ c, dist))

    current = ll(coef)
    for it in range(1, max_iter + 1):
        r = y - A @ coef
        w = 1.0 / (1.0 + k * r * r)
        sw = np.sqrt(w)
        new, *_ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
        value = ll(new)
        if value < current - 1e-12 * (1.0 + abs(current)):
            raise IRLSAscentError(
                f"log-likelihood decreased at iteration {it}: {current!r} -> {value!r}")
        change = float(np.max(np.abs(new - coef)))
        coef, current = new, value
        if change < tol:
            r = y - A @ coef
            grad = (2.0 / (3.0 - q)) * (A.T @ (r / (1.0 + k * r * r)))
            if float(np.linalg.norm(grad)) <= 1e-6:
                return coef, current, it, True
    return coef, current, max_iter, False


def mle_restricted(design: Design, support, q: float, tol: float = 1e-8,
                   max_iter: int = 500) -> ModelFit:
    """Maximum-likelihood fit with slopes outside ``support`` fixed at zero.

    Returns a fit with ``converged=False`` when the MLE does not exist
    (too few observations, collinear columns) or IRLS fails to converge.
    """
    q = check_q(q)
    support = tuple(sorted(int(i) for i in support))
    if any(not 1 <= i <= design.d for i in support):
        raise ValueError(f"support {support} outside 1..{design.d}")
    cols = [0, *support]
    A = design.X[:, cols]
    y = design.y
    theta = np.zeros(design.d + 1)
    try:
        start = _ols(A, y, cols)
    except RankDeficientError:
        return ModelFit(Coefficients(theta), len(cols), -math.inf, -math.inf,
                        "restricted_mle", converged=False)
    if QNormal(q).gaussian:
        coef, converged, iters = start, True, 1
    else:
        starts = [start]
        if q >= 2.0:
            rng = np.random.default_rng([2020, len(design.y), *support])
            starts += [start + rng.standard_normal(len(cols)) for _ in range(3)]
        best = None
        for s in starts:
            c, value, it, ok = _irls(A, y, q, s, tol, max_iter)
            if best is None or (ok, value) > (best[3], best[1]):
                best = (c, value, it, ok)
        coef, _, iters, converged = best
    theta[cols] = coef
    fit_coefs = Coefficients(theta)
    return ModelFit(fit_coefs, len(cols), log_likelihood(design, fit_coefs, q),
                    lq_likelihood(design, fit_coefs, q), "restricted_mle",
                    converged=bool(converged), iterations=int(iters))


def path_fit(design: Design, coefs: Coefficients, q: float) -> ModelFit:
    return ModelFit(coefs, len(coefs.support) + 1, log_likelihood(design, coefs, q),
                    lq_likelihood(design, coefs, q), "path_estimate")


def criterion_value(kind: Criterion, fit: ModelFit, n: int, q: float | None = None) -> float:
    """AIC/BIC (or their L_q versions) for ``fit``; NaN when the fit is unavailable."""
    kind = Criterion(kind)
    if kind is Criterion.CV:
        raise ValueError("CV is not an information criterion; use cross_validate")
    expected = "restricted_mle" if kind.uses_mle else "path_estimate"
    if fit.source != expected:
        raise ValueError(f"{kind.value} needs a {expected} fit, got {fit.source}")
    if not fit.converged:
        return math.nan
    lik = fit.lq_lik if kind.uses_lq else fit.log_lik
    weight = math.log(n) if kind.is_bic else 2.0
    return -2.0 * lik + weight * fit.d_prime


@dataclass(frozen=True, eq=False)
class Selection:
    index: int | None
    fit: ModelFit | None
    values: np.ndarray  # NaN where unavailable

    @property
    def ok(self) -> bool:
        return self.index is not None


class NoSelectionError(RuntimeError):
    pass


def select_model(path: SolutionPath, kind: Criterion, design: Design, q: float,
                 cache: dict | None = None) -> Selection:
    """Minimize an information criterion along ``path``.

    Restricted MLEs are computed once per distinct support (``cache`` may be
    shared across calls on the same design and q). Ties go to the smaller d'
    and then to the larger lambda. ``index`` is None when every point is
    unavailable.
    """
    kind = Criterion(kind)
    if kind is Criterion.CV:
        raise ValueError("CV selection is done by cross_validate")
    if len(path) == 0:
        raise ValueError("empty path")
    cache = {} if cache is None else cache
    values = np.full(len(path), np.nan)
    fits: list[ModelFit | None] = []
    for k, coefs in enumerate(path.coefs):
        if kind.uses_mle:
            supp = coefs.support
            if supp not in cache:
                cache[supp] = mle_restricted(design, supp, q)
            fit = cache[supp]
        else:
            fit = path_fit(design, coefs, q)
        fits.append(fit)
        values[k] = criterion_value(kind, fit, design.n, q)
    best = None
    for k, v in enumerate(values):
        if math.isnan(v):
            continue
        key = (v, fits[k].d_prime, k)
        if best is None or key < best:
            best = key
    if best is None:
        return Selection(None, None, values)
    return Selection(best[2], fits[best[2]], values)


@dataclass(frozen=True, eq=False)
class CVResult:
    lambdas: np.ndarray
    errors: np.ndarray
    index: int
    skipped_folds: tuple[int, ...] = ()


def fold_assignment(n: int, folds: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [np.sort(b) for b in np.array_split(rng.permutation(n), folds)]


def cross_validate(design: Design, spec: PenaltySpec, config: PathConfig | None = None,
                   folds: int = 10, rng: np.random.Generator | None = None,
                   lambdas=None) -> CVResult:
    """K-fold cross-validated mean squared prediction error over one lambda grid.

    Each training fold is re-standardized and solved on the full-data grid;
    held-out rows are predicted through that fold's standardization.
    """
    config = config or PathConfig()
    n = design.n
    if folds < 2 or n < folds:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    rng = rng if rng is not None else np.random.default_rng(0)
    lambdas = lambda_grid(design, config) if lambdas is None else np.asarray(lambdas, float)
    sse = np.zeros(len(lambdas))
    count = 0
    skipped = []
    raw = design.X[:, 1:]
    for f, test in enumerate(fold_assignment(n, folds, rng)):
        train = np.setdiff1d(np.arange(n), test)
        try:
            sub = standardize(raw[train], design.y[train])
        except (ZeroVarianceError, ValueError) as exc:
            warnings.warn(f"skipping CV fold {f}: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append(f)
            continue
        path = solve_path(sub, spec, config, lambdas=lambdas)
        pred = sub.transform(raw[test]) @ path.thetas.T  # (n_test, n_lambda)
        sse += ((design.y[test][:, None] - pred) ** 2).sum(axis=0)
        count += len(test)
    if count == 0:
        raise NoSelectionError("every cross-validation fold was degenerate")
    errors = sse / count
    return CVResult(lambdas, errors, int(np.argmin(errors)), tuple(skipped))
