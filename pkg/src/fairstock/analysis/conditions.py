"""Checks on the supply/demand pair that make threshold rules well behaved."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from ..env import DistributionSpec

MC_SAMPLES = 1_000_000


def moments(spec: DistributionSpec) -> tuple[float, float]:
    """Exact first and second moments ``(E[X], E[X^2])``.

    Scheduled specs return the cycle average (the law of a draw at a
    uniformly random phase).
    """
    locs = spec.mean_schedule if spec.mean_schedule is not None else (spec.mean,)
    fam = spec.family
    if fam in ("bernoulli", "bounded_discrete"):
        atoms, probs = spec.support()
        return float(np.dot(atoms, probs)), float(np.dot(atoms**2, probs))
    first, second = [], []
    for m in locs:
        if fam == "deterministic":
            first.append(m)
            second.append(m * m)
        elif fam == "poisson":
            first.append(m)
            second.append(m + m * m)
        elif fam == "exponential":
            first.append(m)
            second.append(2 * m * m)
        else:  # clamped normal max(0, Y), Y ~ N(m, s^2)
            s = spec.sigma
            if s == 0:
                first.append(max(m, 0.0))
                second.append(max(m, 0.0) ** 2)
                continue
            z = m / s
            cdf, pdf = stats.norm.cdf(z), stats.norm.pdf(z)
            first.append(m * cdf + s * pdf)
            second.append((m * m + s * s) * cdf + m * s * pdf)
    return float(np.mean(first)), float(np.mean(second))


def drift_moments(supply: DistributionSpec, demand: DistributionSpec, alpha: float) -> tuple[float, float]:
    """``E[Z]`` and ``E[Z^2]`` for ``Z = B - alpha * N`` with independent B, N."""
    mb, sb = moments(supply)
    mn, sn = moments(demand)
    return mb - alpha * mn, sb - 2 * alpha * mb * mn + alpha * alpha * sn


def _joint_support(supply: DistributionSpec, demand: DistributionSpec):
    sup, dem = supply.support(), demand.support()
    if sup is None or dem is None:
        return None
    b = np.repeat(sup[0], len(dem[0]))
    n = np.tile(dem[0], len(sup[0]))
    w = np.repeat(sup[1], len(dem[1])) * np.tile(dem[1], len(sup[1]))
    return b, n, w


def _sample_pair(supply, demand, samples, seed):
    gen = np.random.default_rng(seed)
    b = supply.sample(gen, np.arange(samples))
    n = demand.sample(gen, np.arange(samples))
    return b, n


def wilson_lower(successes: int, n: int, z: float = 1.96) -> float:
    """Lower end of the Wilson score interval for a binomial proportion."""
    if n <= 0:
        return 0.0
    phat = successes / n
    denom = 1 + z * z / n
    centre = phat + z * z / (2 * n)
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return max(0.0, (centre - half) / denom)


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the two-sided drift condition for a threshold rule.

    ``feasible`` means some ``epsilon > 0`` has both
    ``P(B - N (alpha + delta/2) >= epsilon)`` and
    ``P(B - N (alpha - delta/2) <= -epsilon)`` at least ``delta_prob > 0``.
    ``sufficient_delta`` is the largest ``delta`` certified by the
    tail-probability criterion at ``c`` (``None`` if that criterion fails).
    """

    feasible: bool
    epsilon: float | None
    delta_prob: float
    alpha_star: float
    method: str
    c: float | None = None
    sufficient_delta: float | None = None


def sufficient_delta_bound(
    supply: DistributionSpec, demand: DistributionSpec, c: float, samples: int = MC_SAMPLES, seed: int = 0
) -> float | None:
    """Largest delta certified when all four tails at offset ``c`` are positive."""
    if c <= 0:
        raise ValueError("c must be positive")
    mb, mn = supply.nominal_mean, demand.nominal_mean
    tails = _four_tails(supply, demand, c, samples, seed)
    if min(tails) <= 0:
        return None
    return c * (mb + mn) / (mn * (mn + c / 2))


def _four_tails(supply, demand, c, samples, seed):
    mb, mn = supply.nominal_mean, demand.nominal_mean
    out = []
    for spec, mu, off, s in ((supply, mb, c, 0), (demand, mn, c / 2, 1)):
        sup = spec.support()
        if sup is not None:
            atoms, probs = sup
            out.append(float(probs[atoms >= mu + off].sum()))
            out.append(float(probs[atoms <= mu - off].sum()))
        else:
            x = spec.sample(np.random.default_rng([seed, s]), np.arange(samples))
            out.append(float(np.mean(x >= mu + off)))
            out.append(float(np.mean(x <= mu - off)))
    return out


def check_delta_feasible(
    supply: DistributionSpec,
    demand: DistributionSpec,
    delta: float,
    eps_grid: Sequence[float] | None = None,
    c: float | None = None,
    samples: int = MC_SAMPLES,
    seed: int = 0,
) -> FeasibilityReport:
    """Search ``eps_grid`` for the epsilon maximizing the two-sided drift probability.

    Finite-support pairs are enumerated exactly.  Otherwise probabilities
    come from ``samples`` Monte Carlo draws and are reported as Wilson lower
    bounds.  Ties in probability go to the larger epsilon.
    """
    alpha = supply.nominal_mean / demand.nominal_mean
    hi_alloc, lo_alloc = alpha + delta / 2, alpha - delta / 2
    joint = _joint_support(supply, demand)
    if joint is not None:
        b, n, w = joint
        method = "exact"
    else:
        b, n = _sample_pair(supply, demand, samples, seed)
        w = None
        method = "monte_carlo"
    up = b - n * hi_alloc  # drift when over-allocating; must sometimes be positive
    down = b - n * lo_alloc  # drift when under-allocating; must sometimes be negative

    if eps_grid is None:
        if w is not None:
            cand = np.concatenate([up[up > 0], -down[down < 0]])
        else:
            top = max(float(up.max()), float(-down.min()), 0.0)
            cand = np.linspace(0, top, 201)[1:]
        eps_grid = np.unique(cand)
    best_eps, best = None, 0.0
    for eps in sorted(float(e) for e in eps_grid if e > 0):
        if w is not None:
            p1 = float(w[up >= eps].sum())
            p2 = float(w[down <= -eps].sum())
        else:
            p1 = wilson_lower(int(np.count_nonzero(up >= eps)), len(up))
            p2 = wilson_lower(int(np.count_nonzero(down <= -eps)), len(down))
        prob = min(p1, p2)
        if prob > 0 and prob >= best - 1e-15:
            best_eps, best = eps, prob
    suff = None if c is None else sufficient_delta_bound(supply, demand, c, samples, seed)
    return FeasibilityReport(
        feasible=best > 0, epsilon=best_eps, delta_prob=best, alpha_star=alpha,
        method=method, c=c, sufficient_delta=suff,
    )


@dataclass(frozen=True)
class MgfCheck:
    holds: bool
    value: float
    sufficient_C: float | None
    method: str


def supermartingale_mgf_check(
    supply: DistributionSpec,
    demand: DistributionSpec,
    delta: float,
    C: float,
    monte_carlo: bool = False,
    samples: int = MC_SAMPLES,
    seed: int = 0,
) -> MgfCheck:
    """Test ``E[exp(-C delta (B - (alpha - delta) N))] <= 1``.

    Also returns the range ``C < 8 mu_N / (B_max + alpha N_max)^2`` in which
    the inequality is guaranteed for bounded supports (``None`` if unbounded).
    """
    alpha = supply.nominal_mean / demand.nominal_mean
    joint = _joint_support(supply, demand)
    if joint is not None:
        b, n, w = joint
        value = float(np.dot(w, np.exp(-C * delta * (b - (alpha - delta) * n))))
        method = "exact"
    elif monte_carlo:
        b, n = _sample_pair(supply, demand, samples, seed)
        value = float(np.mean(np.exp(-C * delta * (b - (alpha - delta) * n))))
        method = "monte_carlo"
    else:
        raise ValueError("unbounded support: pass monte_carlo=True")
    b_max, n_max = supply.upper_bound, demand.upper_bound
    suff = None
    if math.isfinite(b_max) and math.isfinite(n_max):
        suff = 8 * demand.nominal_mean / (b_max + alpha * n_max) ** 2
    return MgfCheck(holds=value <= 1.0 + 1e-15, value=value, sufficient_C=suff, method=method)


def expected_positive_part(
    supply: DistributionSpec,
    demand: DistributionSpec,
    alpha: float,
    negative: bool = False,
    samples: int = MC_SAMPLES,
    seed: int = 0,
) -> tuple[float, float]:
    """``E[(B - alpha N)^+]`` (or the negative part) with a standard error.

    Exact (standard error 0) for finite supports, Monte Carlo otherwise.
    """
    joint = _joint_support(supply, demand)
    sign = -1.0 if negative else 1.0
    if joint is not None:
        b, n, w = joint
        return float(np.dot(w, np.maximum(sign * (b - alpha * n), 0.0))), 0.0
    b, n = _sample_pair(supply, demand, samples, seed)
    x = np.maximum(sign * (b - alpha * n), 0.0)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))
