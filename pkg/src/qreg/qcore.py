"""q-deformed logarithm/exponential and the q-normal distribution family.

For ``1 <= q < 3`` the q-normal density with location ``xi`` and dispersion
``sigma`` is

    f_q(y) = exp_q(-((y - xi) / sigma)**2 / (3 - q)) / Z_q,

which is a scaled Student-t with ``nu = (3 - q) / (q - 1)`` degrees of freedom
(Gaussian at q = 1, Cauchy at q = 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

Q_MIN = 1.0
Q_MAX = 3.0
# |q - 1| below this switches to the exact log/exp branch.
Q_ONE_TOL = 1e-9


class QDomainError(ValueError):
    """An argument lies outside the domain of a q-function."""


def check_q(q: float) -> float:
    q = float(q)
    if not (Q_MIN <= q < Q_MAX):
        raise QDomainError(f"q={q!r} violates 1 <= q < 3")
    return q


def _is_one(q: float) -> bool:
    return abs(q - 1.0) < Q_ONE_TOL


def q_log(u, q: float):
    """q-logarithm ``(u**(1-q) - 1) / (1-q)``; natural log at q = 1."""
    q = check_q(q)
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0)):
        raise QDomainError("q_log requires u > 0")
    if _is_one(q):
        out = np.log(arr)
    else:
        out = np.expm1((1.0 - q) * np.log(arr)) / (1.0 - q)
    return out if out.ndim else float(out)


def q_log_of_log(log_u, q: float):
    """q-logarithm evaluated from ``log(u)``; avoids underflow for tiny u."""
    q = check_q(q)
    log_u = np.asarray(log_u, dtype=float)
    if _is_one(q):
        return log_u if log_u.ndim else float(log_u)
    out = np.expm1((1.0 - q) * log_u) / (1.0 - q)
    return out if out.ndim else float(out)


def q_exp(u, q: float):
    """q-exponential, the inverse of :func:`q_log`; zero where ``1+(1-q)u <= 0``."""
    q = check_q(q)
    arr = np.asarray(u, dtype=float)
    if _is_one(q):
        out = np.exp(arr)
    else:
        base = (1.0 - q) * arr
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            out = np.where(base > -1.0, np.exp(np.log1p(np.maximum(base, -1.0)) / (1.0 - q)), 0.0)
    return out if out.ndim else float(out)


def degrees_of_freedom(q: float) -> float:
    """``nu = (3-q)/(q-1)``; ``inf`` in the Gaussian limit."""
    q = check_q(q)
    if _is_one(q):
        return math.inf
    return (3.0 - q) / (q - 1.0)


@dataclass(frozen=True)
class QNormal:
    """q-normal distribution with location ``xi`` and dispersion ``sigma``."""

    q: float
    xi: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q", check_q(self.q))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise QDomainError(f"sigma={self.sigma!r} must be positive and finite")
        if not math.isfinite(self.xi):
            raise QDomainError(f"xi={self.xi!r} must be finite")

    @property
    def nu(self) -> float:
        return degrees_of_freedom(self.q)

    @property
    def gaussian(self) -> bool:
        return _is_one(self.q)

    @property
    def variance(self) -> float:
        """``sigma**2 * (3-q)/(5-3q)`` for q < 5/3, else infinite."""
        if self.q >= 5.0 / 3.0:
            return math.inf
        return self.sigma ** 2 * (3.0 - self.q) / (5.0 - 3.0 * self.q)

    def pdf(self, y):
        return density(y, self)

    def logpdf(self, y):
        return log_density(y, self)

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return sample(self, count, rng)


def _log_beta_half(nu: float) -> float:
    # log B(nu/2, 1/2); B(1/2, 1/2) = pi exactly.
    if nu == 1.0:
        return math.log(math.pi)
    return float(betaln(0.5 * nu, 0.5))


def normalizing_constant(dist: QNormal) -> float:
    """``Z_q = sigma * sqrt(nu) * B(nu/2, 1/2)``, or ``sigma * sqrt(2 pi)`` at q = 1."""
    if dist.gaussian:
        return dist.sigma * math.sqrt(2.0 * math.pi)
    nu = dist.nu
    if nu == 1.0:
        return dist.sigma * math.pi
    return dist.sigma * math.sqrt(nu) * math.exp(_log_beta_half(nu))


def log_normalizing_constant(dist: QNormal) -> float:
    if dist.gaussian:
        return math.log(dist.sigma) + 0.5 * math.log(2.0 * math.pi)
    nu = dist.nu
    return math.log(dist.sigma) + 0.5 * math.log(nu) + _log_beta_half(nu)


def density(y, dist: QNormal):
    """q-normal density; strictly positive on the real line."""
    z = (np.asarray(y, dtype=float) - dist.xi) / dist.sigma
    zq = normalizing_constant(dist)
    if dist.gaussian:
        out = np.exp(-0.5 * z * z) / zq
    else:
        k = (dist.q - 1.0) / (3.0 - dist.q)
        out = np.power(1.0 + k * z * z, -1.0 / (dist.q - 1.0)) / zq
    return out if out.ndim else float(out)


def log_density(y, dist: QNormal):
    z = (np.asarray(y, dtype=float) - dist.xi) / dist.sigma
    log_zq = log_normalizing_constant(dist)
    if dist.gaussian:
        out = -0.5 * z * z - log_zq
    else:
        k = (dist.q - 1.0) / (3.0 - dist.q)
        out = -np.log1p(k * z * z) / (dist.q - 1.0) - log_zq
    return out if out.ndim else float(out)


def sample(dist: QNormal, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. variates as ``xi + sigma * T`` with T ~ Student-t(nu).

    The normal numerators and chi-square denominators come from two child
    streams spawned off ``rng``, so the result is a pure function of its state.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be non-negative")
    normal_rng, chi_rng = rng.spawn(2)
    z = normal_rng.standard_normal(count)
    if not dist.gaussian:
        nu = dist.nu
        # for q near 3 (nu -> 0) a chi-square draw can round to 0; the
        # quotient then overflows to +-inf, which is the IEEE-rounded value
        with np.errstate(divide="ignore"):
            z = z / np.sqrt(chi_rng.chisquare(nu, count) / nu)
    return dist.xi + dist.sigma * z
