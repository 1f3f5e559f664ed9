"""Joint distribution of two correlated chi-square statistics.

``X`` and ``Y`` are sums of ``N`` squared standard normals where the j-th
pair of normals has correlation ``rho``.  The joint CDF is a mixture of
products of regularized lower incomplete gamma functions,

    F(X, Y) = sum_r w_r P(r + N/2, X') P(r + N/2, Y'),   X' = X / (2 (1 - rho^2)),

with negative binomial weights ``w_r = C(r + N/2 - 1, r) rho^(2r) (1 - rho^2)^(N/2)``.
The weights sum to one and every gamma factor is at most one, so the
series can be stopped as soon as the accumulated weight reaches ``1 - eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DomainError
from .specfun import chi2_sf_inv, reg_lower_gamma

RHO_LIMIT = 0.999999


@dataclass(frozen=True)
class JointParams:
    N: int
    rho: float
    eps: float = 1e-12
    max_terms: int = 10000

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2 or self.N % 2:
            raise DomainError(f"N must be an even integer >= 2, got {self.N}")
        if not abs(self.rho) < 1:
            raise DomainError(f"|rho| must be < 1, got {self.rho}")
        if abs(self.rho) > RHO_LIMIT:
            raise DomainError(f"|rho| = {abs(self.rho)} exceeds the supported limit {RHO_LIMIT}")
        if not 0 < self.eps < 1e-3:
            raise DomainError(f"eps must lie in (0, 1e-3), got {self.eps}")
        if self.max_terms < 1:
            raise DomainError("max_terms must be positive")


def _gamma_ladder_step(p: float, a: float, x: float) -> float:
    """P(a + 1, x) from P(a, x)."""
    if x == 0:
        return 0.0
    return max(0.0, p - math.exp(a * math.log(x) - x - math.lgamma(a + 1)))


def joint_cdf_series(params: JointParams, X: float, Y: float) -> tuple[float, int]:
    """Joint CDF and the number of series terms used."""
    if not (X >= 0 and Y >= 0):
        raise DomainError(f"X and Y must be positive, got ({X}, {Y})")
    if X == 0 or Y == 0:
        return 0.0, 0
    N, rho = params.N, params.rho
    r2 = rho * rho
    s = 1.0 - r2
    a = N / 2.0
    xs, ys = X / (2.0 * s), Y / (2.0 * s)
    px = reg_lower_gamma(a, xs)
    py = px if xs == ys else reg_lower_gamma(a, ys)
    w = s ** a
    cum = 0.0
    total = 0.0
    for r in range(params.max_terms):
        total += w * px * py
        cum += w
        if cum >= 1.0 - params.eps or r2 == 0.0:
            return min(1.0, max(0.0, total)), r + 1
        px = _gamma_ladder_step(px, a + r, xs)
        py = px if xs == ys else _gamma_ladder_step(py, a + r, ys)
        w *= r2 * (r + a) / (r + 1)
    raise ConvergenceError("joint CDF series hit max_terms", total, 1.0 - cum, params.max_terms)


def joint_cdf(params: JointParams, X: float, Y: float) -> float:
    return joint_cdf_series(params, X, Y)[0]


def joint_pdf(params: JointParams, X: float, Y: float) -> float:
    """Joint density of (X, Y)."""
    if not (X > 0 and Y > 0):
        raise DomainError(f"X and Y must be positive, got ({X}, {Y})")
    N, rho = params.N, params.rho
    r2 = rho * rho
    s = 1.0 - r2
    a = N / 2.0
    log_pre = (
        (a - 1) * (math.log(X) + math.log(Y))
        - N * math.log(2.0)
        - math.lgamma(a)
        - a * math.log(s)
        - (X + Y) / (2.0 * s)
    )
    # sum_r z^r / (r! Gamma(r + a)), summed relative to its first term
    if r2 == 0.0:
        return math.exp(log_pre - math.lgamma(a))
    log_z = math.log(r2) + math.log(X) + math.log(Y) - 2.0 * math.log(2.0 * s)
    z = math.exp(log_z)
    # terms grow until r ~ sqrt(z); anchor the scale at the largest term
    peak = max(0, int(math.sqrt(z)))
    log_scale = peak * log_z - math.lgamma(peak + 1) - math.lgamma(peak + a)
    total = 0.0
    for r in range(params.max_terms):
        log_t = r * log_z - math.lgamma(r + 1) - math.lgamma(r + a)
        t = math.exp(log_t - log_scale)
        total += t
        if r >= peak:
            q = z / ((r + 1) * (r + a))
            if q < 1 and t * q / (1 - q) <= params.eps * total:
                return math.exp(log_pre + log_scale) * total
    raise ConvergenceError("joint density series hit max_terms", total, float("nan"), params.max_terms)


def joint_pvalue_tail(params: JointParams, P: float, Pp: float) -> float:
    """Probability that both p-values exceed their thresholds, Prob{p1 > P and p2 > Pp}."""
    for v in (P, Pp):
        if not 0 < v <= 1:
            raise DomainError(f"p-value thresholds must lie in (0, 1], got {v}")
    if P == 1 or Pp == 1:
        return 0.0
    return joint_cdf(params, chi2_sf_inv(params.N, P), chi2_sf_inv(params.N, Pp))


def _tail(params: JointParams, a: float, b: float) -> float:
    # a == 0 means no constraint on that axis; the marginal p-value is uniform
    if a == 0 and b == 0:
        return 1.0
    if a == 0:
        return 1.0 - b
    if b == 0:
        return 1.0 - a
    return joint_pvalue_tail(params, a, b)


def cell_probability(params: JointParams, p1_lo: float, p1_hi: float, p2_lo: float, p2_hi: float) -> float:
    """Prob{p1 in (p1_lo, p1_hi] and p2 in (p2_lo, p2_hi]}."""
    if not (0 <= p1_lo < p1_hi <= 1 and 0 <= p2_lo < p2_hi <= 1):
        raise DomainError(f"malformed cell ({p1_lo}, {p1_hi}] x ({p2_lo}, {p2_hi}]")
    v = (
        _tail(params, p1_lo, p2_lo)
        - _tail(params, p1_hi, p2_lo)
        - _tail(params, p1_lo, p2_hi)
        + _tail(params, p1_hi, p2_hi)
    )
    return min(1.0, max(0.0, v))


def cell_grid(params: JointParams, G: int) -> np.ndarray:
    """``G x G`` cell probabilities on the uniform p-value grid; row = first p-value."""
    edges = np.linspace(0.0, 1.0, G + 1)
    tails = np.empty((G + 1, G + 1))
    for i, a in enumerate(edges):
        for j, b in enumerate(edges[: i + 1]):
            tails[i, j] = tails[j, i] = _tail(params, float(a), float(b))
    cells = tails[:-1, :-1] - tails[1:, :-1] - tails[:-1, 1:] + tails[1:, 1:]
    return np.clip(cells, 0.0, 1.0)


def mc_joint_chisq_sampler(N: int, rho: float, count: int, seed: int, chunk: int = 100_000):
    """Simulated (X, Y) pairs as two arrays of length ``count``.

    Each pair is built from ``N`` independent bivariate standard normal
    pairs with correlation ``rho``.  Deterministic for a given seed.
    """
    if not abs(rho) < 1:
        raise DomainError(f"|rho| must be < 1, got {rho}")
    if N < 1 or count < 0:
        raise DomainError("N must be positive and count nonnegative")
    rng = np.random.default_rng(seed)
    c = math.sqrt(1.0 - rho * rho)
    X = np.empty(count)
    Y = np.empty(count)
    for lo in range(0, count, chunk):
        hi = min(count, lo + chunk)
        u = rng.standard_normal((hi - lo, N))
        v = rho * u + c * rng.standard_normal((hi - lo, N))
        X[lo:hi] = np.sum(u * u, axis=1)
        Y[lo:hi] = np.sum(v * v, axis=1)
    return X, Y
