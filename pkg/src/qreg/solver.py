"""Penalized least squares (LASSO, SCAD, MCP) by cyclic coordinate descent.

The objective is

    (1/(2n)) ||y - X theta||^2 + pen(theta),

with the intercept unpenalized and slope columns standardized to mean zero and
unit Euclidean norm. With unit-norm columns each coordinate subproblem is
``(1/n) [ 1/2 (t - z)^2 + P(t; n*lam) ]`` where ``P`` is the penalty in its
unit-curvature form (:func:`scalar_update` solves it exactly). The SCAD and MCP
shape parameters ``a`` and ``gamma`` therefore act on that unit-curvature scale,
so ``pen(theta) = penalty_value(theta, spec, n*lam) / n``; for the LASSO this is
exactly ``lam * sum |theta_i|``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np


class Penalty(str, enum.Enum):
    LASSO = "lasso"
    SCAD = "scad"
    MCP = "mcp"


_KIND_CODE = {Penalty.LASSO: 0, Penalty.SCAD: 1, Penalty.MCP: 2}


@dataclass(frozen=True)
class PenaltySpec:
    kind: Penalty = Penalty.LASSO
    a: float = 3.7
    gamma: float = 3.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Penalty(self.kind.lower()))
        if self.kind is Penalty.SCAD and not self.a > 2:
            raise ValueError(f"SCAD needs a > 2, got a={self.a}")
        if self.kind is Penalty.MCP and not self.gamma > 0:
            raise ValueError(f"MCP needs gamma > 0, got gamma={self.gamma}")

    @property
    def code(self) -> int:
        return _KIND_CODE[self.kind]


@dataclass(frozen=True)
class PathConfig:
    n_lambda: int = 100
    lambda_min_ratio: float | None = None  # None: 0.001 if n > d else 0.05
    tol: float = 1e-7
    max_iter: int = 10_000

    def __post_init__(self):
        if self.n_lambda < 1 or self.max_iter < 1 or not self.tol > 0:
            raise ValueError("n_lambda, max_iter and tol must be positive")
        if self.lambda_min_ratio is not None and not 0 < self.lambda_min_ratio < 1:
            raise ValueError("lambda_min_ratio must lie in (0, 1)")

    def min_ratio(self, n: int, d: int) -> float:
        if self.lambda_min_ratio is not None:
            return self.lambda_min_ratio
        return 0.001 if n > d else 0.05


class ZeroVarianceError(ValueError):
    def __init__(self, column: int):
        super().__init__(f"predictor column {column} has zero variance")
        self.column = column


@dataclass(frozen=True, eq=False)
class Design:
    """Standardized design: ``X[:, 0] == 1`` and unit-norm centred slope columns."""

    X: np.ndarray
    y: np.ndarray
    center: np.ndarray
    scale: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1] - 1

    @property
    def slopes(self) -> np.ndarray:
        return self.X[:, 1:]

    def with_y(self, y) -> "Design":
        y = np.array(y, dtype=float)
        if y.shape != (self.n,) or not np.all(np.isfinite(y)):
            raise ValueError(f"response must be a finite vector of length {self.n}")
        y.setflags(write=False)
        return Design(self.X, y, self.center, self.scale)

    def transform(self, raw_X) -> np.ndarray:
        """Standardize new raw rows with this design's centring/scaling; prepends 1s."""
        raw_X = np.atleast_2d(np.asarray(raw_X, dtype=float))
        if raw_X.shape[1] != self.d:
            raise ValueError(f"expected {self.d} predictor columns, got {raw_X.shape[1]}")
        Z = (raw_X - self.center) / self.scale
        return np.column_stack([np.ones(len(Z)), Z])

    def to_raw(self, theta) -> np.ndarray:
        """Map standardized-scale coefficients to the raw predictor scale."""
        theta = np.asarray(theta, dtype=float)
        beta = theta[1:] / self.scale
        return np.concatenate([[theta[0] - beta @ self.center], beta])


def standardize(raw_X, y) -> Design:
    """Centre each predictor and scale it to unit Euclidean norm."""
    raw_X = np.atleast_2d(np.asarray(raw_X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = raw_X.shape
    if n < 2 or d < 1:
        raise ValueError(f"need n >= 2 and d >= 1, got n={n}, d={d}")
    if y.shape != (n,):
        raise ValueError(f"response length {y.shape[0]} != {n} rows")
    if not (np.all(np.isfinite(raw_X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite entries in design or response")
    center = raw_X.mean(axis=0)
    Z = raw_X - center
    scale = np.sqrt(np.einsum("ij,ij->j", Z, Z))
    tiny = np.finfo(float).eps * math.sqrt(n) * np.maximum(1.0, np.abs(center))
    for j in range(d):
        if scale[j] <= tiny[j]:
            raise ZeroVarianceError(j)
    X = np.column_stack([np.ones(n), Z / scale])
    for arr in (X, y, center, scale):
        arr.setflags(write=False)
    return Design(X, y.copy(), center, scale)


@dataclass(frozen=True, eq=False)
class Coefficients:
    """``theta[0]`` is the intercept; ``theta[1:]`` the standardized slopes."""

    theta: np.ndarray

    def __post_init__(self):
        arr = np.array(self.theta, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "theta", arr)

    @property
    def support(self) -> tuple[int, ...]:
        """1-based indices of nonzero slopes (no thresholding)."""
        return tuple(int(i) + 1 for i in np.flatnonzero(self.theta[1:] != 0.0))

    @property
    def intercept(self) -> float:
        return float(self.theta[0])

    def __len__(self):
        return len(self.theta)


@dataclass(frozen=True, eq=False)
class CDResult:
    coefs: Coefficients
    iterations: int
    converged: bool
    trace: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SolutionPath:
    lambdas: np.ndarray
    thetas: np.ndarray  # (n_lambda, d+1)
    iterations: np.ndarray
    converged: np.ndarray
    spec: PenaltySpec = field(default_factory=PenaltySpec)

    def __len__(self):
        return len(self.lambdas)

    def __getitem__(self, k) -> Coefficients:
        return Coefficients(self.thetas[k])

    @property
    def coefs(self) -> list[Coefficients]:
        return [Coefficients(t) for t in self.thetas]

    @property
    def supports(self) -> list[tuple[int, ...]]:
        return [c.support for c in self.coefs]

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


# ---------------------------------------------------------------------------
# scalar kernels (unit curvature)

@numba.njit(cache=True)
def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@numba.njit(cache=True)
def _threshold(z, lam, kind, a, gamma):
    az = abs(z)
    if kind == 0:
        return _soft(z, lam)
    if kind == 1:
        if az <= 2.0 * lam:
            return _soft(z, lam)
        if az <= a * lam:
            return _soft(z, a * lam / (a - 1.0)) / (1.0 - 1.0 / (a - 1.0))
        return z
    if az <= gamma * lam:
        return _soft(z, lam) / (1.0 - 1.0 / gamma)
    return z


@numba.njit(cache=True)
def _pen1(t, lam, kind, a, gamma):
    at = abs(t)
    if kind == 0:
        return lam * at
    if kind == 1:
        if at <= lam:
            return lam * at
        if at <= a * lam:
            return -(at * at - 2.0 * a * lam * at + lam * lam) / (2.0 * (a - 1.0))
        return 0.5 * (a + 1.0) * lam * lam
    if at <= gamma * lam:
        return lam * at - at * at / (2.0 * gamma)
    return 0.5 * gamma * lam * lam


def scalar_update(z: float, lam: float, spec: PenaltySpec) -> float:
    """Global minimizer of ``1/2 (t - z)^2 + P(t; lam)``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if spec.kind is Penalty.MCP and not spec.gamma > 1:
        raise ValueError("unit-curvature MCP update needs gamma > 1")
    return float(_threshold(float(z), float(lam), spec.code, spec.a, spec.gamma))


def penalty_value(coefs, spec: PenaltySpec, lam: float) -> float:
    """Penalty summed over the slopes (the intercept is never penalized)."""
    theta = coefs.theta if isinstance(coefs, Coefficients) else np.asarray(coefs, dtype=float)
    return float(math.fsum(_pen1(float(t), float(lam), spec.code, spec.a, spec.gamma)
                           for t in theta[1:]))


def objective(design: Design, coefs, spec: PenaltySpec, lam: float) -> float:
    """Value of the penalized least-squares objective minimized by the solver."""
    theta = coefs.theta if isinstance(coefs, Coefficients) else np.asarray(coefs, dtype=float)
    r = design.y - design.X @ theta
    n = design.n
    return float(r @ r) / (2 * n) + penalty_value(theta, spec, n * lam) / n


# ---------------------------------------------------------------------------
# coordinate descent

@numba.njit(cache=True)
def _objective_from_residual(r, theta, n, lam, kind, a, gamma):
    rss = 0.0
    for i in range(r.shape[0]):
        rss += r[i] * r[i]
    pen = 0.0
    for j in range(1, theta.shape[0]):
        pen += _pen1(theta[j], n * lam, kind, a, gamma)
    return rss / (2.0 * n) + pen / n


@numba.njit(cache=True)
def _lambda_max_kernel(XT, y):
    n = y.shape[0]
    s = 0.0
    for i in range(n):
        s += y[i]
    ybar = s / n
    r = np.empty(n)
    for i in range(n):
        r[i] = y[i] - ybar
    best = 0.0
    for j in range(XT.shape[0]):
        z = 0.0
        for i in range(n):
            z += XT[j, i] * r[i]
        if abs(z) / n > best:
            best = abs(z) / n
    return best


@numba.njit(cache=True)
def _cd_kernel(XT, y, theta, lam, kind, a, gamma, tol, max_iter, trace, trace_level):
    """Cyclic CD in place on ``theta``. Returns (sweeps, converged, trace_len).

    Thresholding compares |z|/n with lam so that lam = lambda_max yields an
    exactly empty support (same arithmetic as ``_lambda_max_kernel``).
    """
    d, n = XT.shape
    r = np.empty(n)
    for i in range(n):
        r[i] = y[i] - theta[0]
    for j in range(d):
        tj = theta[j + 1]
        if tj != 0.0:
            for i in range(n):
                r[i] -= XT[j, i] * tj
    nlam = n * lam
    k = 0
    for sweep in range(max_iter):
        s = 0.0
        for i in range(n):
            s += r[i]
        delta = s / n
        max_change = abs(delta)
        if delta != 0.0:
            theta[0] += delta
            for i in range(n):
                r[i] -= delta
        if trace_level == 2 and k < trace.shape[0]:
            trace[k] = _objective_from_residual(r, theta, n, lam, kind, a, gamma)
            k += 1
        for j in range(d):
            old = theta[j + 1]
            z = old
            for i in range(n):
                z += XT[j, i] * r[i]
            if abs(z) / n <= lam:
                new = 0.0
            else:
                new = _threshold(z, nlam, kind, a, gamma)
            if new != old:
                diff = new - old
                for i in range(n):
                    r[i] -= XT[j, i] * diff
                theta[j + 1] = new
                if abs(diff) > max_change:
                    max_change = abs(diff)
            if trace_level == 2 and k < trace.shape[0]:
                trace[k] = _objective_from_residual(r, theta, n, lam, kind, a, gamma)
                k += 1
        if trace_level == 1 and k < trace.shape[0]:
            trace[k] = _objective_from_residual(r, theta, n, lam, kind, a, gamma)
            k += 1
        if max_change < tol:
            return sweep + 1, True, k
    return max_iter, False, k


def _slopes_T(design: Design) -> np.ndarray:
    return np.ascontiguousarray(design.X[:, 1:].T)


def lambda_max(design: Design) -> float:
    """Smallest lambda whose solution has no nonzero slope."""
    return float(_lambda_max_kernel(_slopes_T(design), np.ascontiguousarray(design.y)))


def coordinate_descent(design: Design, spec: PenaltySpec, lam: float,
                       init: Coefficients | None = None,
                       config: PathConfig | None = None,
                       trace: str | None = None, _XT=None) -> CDResult:
    """Minimize the penalized objective at a single lambda.

    ``trace`` may be ``"sweep"`` (objective after each full sweep) or
    ``"coordinate"`` (after each single-coordinate update, intercept included).
    Non-convergence is reported through ``converged``, never raised.
    """
    config = config or PathConfig()
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if spec.kind is Penalty.MCP and not spec.gamma > 1:
        raise ValueError("unit-curvature MCP update needs gamma > 1")
    theta = (np.zeros(design.d + 1) if init is None
             else np.array(init.theta if isinstance(init, Coefficients) else init, dtype=float))
    XT = _slopes_T(design) if _XT is None else _XT
    y = np.ascontiguousarray(design.y)
    if trace is None and lam >= _lambda_max_kernel(XT, y):
        # null model; iterating would let intercept rounding reopen a coordinate
        theta = np.zeros(design.d + 1)
        theta[0] = math.fsum(y) / design.n
        return CDResult(Coefficients(theta), 0, True, None)
    level ={None: 0, "sweep": 1, "coordinate": 2}[trace]
    size = 0 if level == 0 else config.max_iter * (1 if level == 1 else design.d + 1)
    buf = np.empty(size)
    sweeps, ok, k = _cd_kernel(XT, y, theta, float(lam),
                               spec.code, float(spec.a), float(spec.gamma),
                               float(config.tol), int(config.max_iter), buf, level)
    return CDResult(Coefficients(theta), int(sweeps), bool(ok), buf[:k] if level else None)


def lambda_grid(design: Design, config: PathConfig) -> np.ndarray:
    lmax = lambda_max(design)
    if lmax <= 0.0:
        return np.array([0.0])
    L = config.n_lambda
    if L == 1:
        return np.array([lmax])
    ratio = config.min_ratio(design.n, design.d)
    grid = lmax * np.exp(np.linspace(0.0, math.log(ratio), L))
    grid[0] = lmax
    return grid


def solve_path(design: Design, spec: PenaltySpec, config: PathConfig | None = None,
               lambdas=None) -> SolutionPath:
    """Warm-started path over a decreasing geometric lambda grid."""
    config = config or PathConfig()
    lambdas = lambda_grid(design, config) if lambdas is None else np.asarray(lambdas, float)
    if lambdas.ndim != 1 or len(lambdas) == 0 or np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be a non-empty strictly decreasing vector")
    XT = _slopes_T(design)
    thetas = np.empty((len(lambdas), design.d + 1))
    iters = np.empty(len(lambdas), dtype=int)
    conv = np.empty(len(lambdas), dtype=bool)
    current = None
    for k, lam in enumerate(lambdas):
        res = coordinate_descent(design, spec, float(lam), current, config, _XT=XT)
        current = res.coefs
        thetas[k] = res.coefs.theta
        iters[k] = res.iterations
        conv[k] = res.converged
    lambdas = lambdas.copy()
    for arr in (lambdas, thetas, iters, conv):
        arr.setflags(write=False)
    return SolutionPath(lambdas, thetas, iters, conv, spec)


def predict(coefs: Coefficients, new_X, design: Design) -> np.ndarray:
    """Fitted mean for raw rows ``new_X`` using ``design``'s standardization."""
    theta = coefs.theta if isinstance(coefs, Coefficients) else np.asarray(coefs, float)
    return design.transform(new_X) @ theta
