"""Closed-form sampling expectations for loss-based resampling and a Monte Carlo check.

Model: a user holds ``n`` normal and ``m`` noisy items; a pool of ``k``
items is drawn i.i.d. (normal with probability n/(n+m)); normal losses are
N(mu1, sigma^2) and noisy losses N(mu2, sigma^2); one item is picked by a
softmax over ``-loss / tau``. The quantity of interest is
E[Lambda_normal - Lambda_noise], the expected probability mass on normal
pool members minus the mass on noisy ones.

Temperature enters by rescaling losses, so every closed-form expression is
evaluated with mu/tau and sigma/tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np


@dataclass(frozen=True)
class TheoremParams:
    n: int
    m: int
    mu1: float
    mu2: float
    sigma: float
    k: int = 5
    tau: float = 1.0

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("n and m must be >= 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")

    @property
    def assumptions_hold(self) -> bool:
        """mu1 < mu2 and both means exceed sigma."""
        return self.mu1 < self.mu2 and self.mu1 > self.sigma and self.mu2 > self.sigma

    def scaled(self) -> tuple[float, float, float]:
        return self.mu1 / self.tau, self.mu2 / self.tau, self.sigma / self.tau


@dataclass(frozen=True)
class TheoremTerms:
    alpha: float
    beta: float
    gamma: float
    eta: float
    Gamma: float
    chi: float
    C: float


def alpha_beta(p: TheoremParams) -> tuple[float, float]:
    """E[exp(-loss/tau)] for normal and noisy losses."""
    mu1, mu2, s = p.scaled()
    return math.exp(-mu1 + s * s / 2), math.exp(-mu2 + s * s / 2)


def theorem_terms(p: TheoremParams) -> TheoremTerms:
    n, m = p.n, p.m
    if n + m == 0:
        raise ValueError("n + m must be positive")
    a, b = alpha_beta(p)
    s = p.scaled()[2]
    gamma = math.expm1(s * s)
    eta = (n * a + m * b) / (n + m)
    Gamma = (n * a - m * b) / (m + n) * ((a * a + b * b) * (gamma + m / (n + m)) + b * b) / eta ** 3
    chi = gamma / (n + m) * (n * a * a - m * b * b)
    C = (a + b) / 2
    return TheoremTerms(a, b, gamma, eta, Gamma, chi, C)


def leading_term(p: TheoremParams) -> float:
    """(n*alpha - m*beta) / ((n+m)*eta), the large-pool limit of the expectation."""
    t = theorem_terms(p)
    return (p.n * t.alpha - p.m * t.beta) / ((p.n + p.m) * t.eta)


def theorem_expectation(p: TheoremParams) -> float:
    """Closed-form E[Lambda_normal - Lambda_noise].

    k = 1 reduces to uniform sampling, (n-m)/(n+m). For k > 1 the
    leading term is corrected by the pool-size fluctuation term
    Gamma/k - chi/C^2 * k/(k-1)^2 with C = (alpha+beta)/2.
    """
    if p.n + p.m == 0:
        raise ValueError("n + m must be positive")
    if p.k == 1:
        return (p.n - p.m) / (p.n + p.m)
    t = theorem_terms(p)
    k = p.k
    lead = (p.n * t.alpha - p.m * t.beta) / ((p.n + p.m) * t.eta)
    return lead + t.Gamma / k - t.chi / t.C ** 2 * k / (k - 1) ** 2


def prop1_moments(k: int, n: int, m: int, mu: float, sigma: float) -> tuple[float, float]:
    """Mean and variance of S = sum_{i<=N} exp(-x_i), N ~ Bin(k, n/(n+m)), x_i ~ N(mu, sigma^2)."""
    if n + m < 1:
        raise ValueError("n + m must be >= 1")
    p = n / (n + m)
    mean = k * p * math.exp(-mu + sigma ** 2 / 2)
    var = k * p * math.exp(-2 * mu + sigma ** 2) * (math.exp(sigma ** 2) - p)
    return mean, var


def xi_ratio(p: TheoremParams) -> float:
    """beta / alpha after temperature scaling; exp((mu1 - mu2)/tau) under the Gaussian model."""
    a, b = alpha_beta(p)
    return b / a


def _lambda_diffs(p: TheoremParams, trials: int, rng: np.random.Generator) -> np.ndarray:
    is_normal = rng.random((trials, p.k)) < p.n / (p.n + p.m)
    losses = np.where(is_normal, p.mu1, p.mu2) + p.sigma * rng.standard_normal((trials, p.k))
    z = -losses / p.tau
    w = np.exp(z - z.max(axis=1, keepdims=True))
    sx = np.where(is_normal, w, 0.0).sum(axis=1)
    sy = np.where(is_normal, 0.0, w).sum(axis=1)
    return (sx - sy) / (sx + sy)


def simulate_lambda(p: TheoremParams, trials: int = 100_000, seed: int = 0,
                    chunk: int = 1 << 16) -> tuple[float, float]:
    """Monte Carlo estimate of E[Lambda_normal - Lambda_noise] and its standard error.

    Trials are generated in fixed-size chunks from one seeded stream, so the
    result depends only on (params, trials, seed, chunk).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if p.n + p.m == 0:
        raise ValueError("n + m must be positive")
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        d = _lambda_diffs(p, t, rng)
        total += float(d.sum())
        total_sq += float(np.dot(d, d))
        done += t
    mean = total / trials
    if trials == 1:
        return mean, float("nan")
    var = max(total_sq - trials * mean * mean, 0.0) / (trials - 1)
    return mean, math.sqrt(var / trials)


SWEEP_HEADER = ["n", "m", "mu1", "mu2", "sigma", "k", "tau", "closed_form", "mc_estimate",
                "mc_stderr", "trials", "abs_diff"]


def sweep(grid: list[TheoremParams], trials: int = 100_000, seed: int = 0) -> list[dict]:
    """Closed form vs simulation over a parameter grid, one row per point."""
    rows = []
    ss = np.random.SeedSequence(seed)
    for p, child in zip(grid, ss.spawn(len(grid))):
        cf = theorem_expectation(p)
        est, se = simulate_lambda(p, trials, seed=int(child.generate_state(1)[0]))
        rows.append({"n": p.n, "m": p.m, "mu1": p.mu1, "mu2": p.mu2, "sigma": p.sigma,
                     "k": p.k, "tau": p.tau, "closed_form": cf, "mc_estimate": est,
                     "mc_stderr": se, "trials": trials, "abs_diff": abs(cf - est)})
    return rows


def grid_from_lists(n, m, mu1, delta, sigma, k, tau) -> list[TheoremParams]:
    """Cartesian grid; ``delta`` lists mu2 - mu1."""
    return [TheoremParams(int(nn), int(mm), float(a), float(a + d), float(s), int(kk), float(t))
            for nn, mm, a, d, s, kk, t in product(n, m, mu1, delta, sigma, k, tau)]
