"""Exit statistics of the unreflected walk and the boundary-occupancy identity.

Before its first exit from ``(0, M)`` the store level coincides with the
walk ``Q_t = S_0 + sum_s Z_s`` that ignores the capacity limits.  Exit
times and exit sides of ``Q`` therefore give the expected time to reach a
boundary and the probability that a boundary visit is followed by another
visit to the same boundary.  Those four numbers determine the long-run
fraction of rounds spent full or empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..env import DistributionSpec, RngStream
from ..policies import PolicySpec, branch_allocations, depletion_share


class HittingBudgetExceeded(RuntimeError):
    """Some walks were still inside the interval when the round budget ran out."""


@dataclass(frozen=True)
class ExitEstimate:
    """Monte Carlo exit statistics from one starting level.

    ``p_upper`` is the fraction of walks leaving through the top
    (``Q >= M``).  ``cov_time_upper`` is the covariance of the two sample
    means, needed when both feed the same delta-method standard error.
    """

    start: float
    mean_time: float
    se_time: float
    p_upper: float
    se_upper: float
    cov_time_upper: float
    replications: int


@dataclass(frozen=True)
class HittingStats:
    E_M: float
    E_0: float
    p_M: float
    p_0: float
    se_E_M: float
    se_E_0: float
    se_p_M: float
    se_p_0: float
    cov_M: float = 0.0
    cov_0: float = 0.0


def _allocator(policy: PolicySpec, M: float):
    if policy.kind == "full_depletion":
        a_max = policy.a_max

        def alloc(q, b, n):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(n > 0, np.minimum(a_max, depletion_share(np.clip(q, 0, M), b, n)), 0.0)

        return alloc
    low, high, _ = branch_allocations(policy)

    def alloc(q, b, n):
        return np.where(q >= M / 2, high, low)

    return alloc


def exit_walks(
    policy: PolicySpec,
    supply: DistributionSpec,
    demand: DistributionSpec,
    M: float,
    start: float,
    replications: int,
    root_seed: int = 0,
    max_rounds: int = 1_000_000,
    stop_below: float | None = None,
    stream: int = 0,
    max_work: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run independent walks from ``start`` until they leave ``(lower, M)``.

    ``lower`` is 0 unless ``stop_below`` is given.  Returns each walk's exit
    round and whether it left through the top.  All walks share one random
    stream keyed by ``(root_seed, stream)`` and are advanced together; at
    each round only the still-active walks consume draws.  ``max_work``
    caps the total number of walk-rounds simulated.
    """
    lower = 0.0 if stop_below is None else float(stop_below)
    if replications < 1:
        raise ValueError("replications must be positive")
    alloc = _allocator(policy, M)
    rng = RngStream(root_seed, stream)
    g_sup, g_dem = rng.generator("aux", 0), rng.generator("aux", 1)
    q = np.full(replications, float(start))
    idx = np.arange(replications)
    times = np.zeros(replications, dtype=np.int64)
    upper = np.zeros(replications, dtype=bool)
    t = 0
    work = 0
    while idx.size:
        if max_work is not None and work + idx.size > max_work:
            raise HittingBudgetExceeded(
                f"{idx.size} of {replications} walks from {start} still active after "
                f"{work} walk-rounds (budget {max_work})"
            )
        work += idx.size
        if t >= max_rounds:
            raise HittingBudgetExceeded(
                f"{idx.size} of {replications} walks from {start} had not left "
                f"({lower}, {M}) after {max_rounds} rounds"
            )
        rounds = np.full(idx.size, t)
        b = supply.sample(g_sup, rounds)
        n = demand.sample(g_dem, rounds)
        q_now = q[idx]
        q_next = q_now + b - n * alloc(q_now, b, n)
        t += 1
        out_top = q_next >= M
        done = out_top | (q_next <= lower)
        times[idx[done]] = t
        upper[idx[done]] = out_top[done]
        q[idx] = q_next
        idx = idx[~done]
    return times, upper


def estimate_hitting(
    policy: PolicySpec,
    supply: DistributionSpec,
    demand: DistributionSpec,
    M: float,
    start: float,
    replications: int,
    root_seed: int = 0,
    max_rounds: int = 1_000_000,
    stream: int = 0,
    max_work: int | None = None,
) -> ExitEstimate:
    """Mean exit time of the walk from ``start`` and the top-exit frequency.

    From ``start = M`` a nonnegative first step is an immediate exit through
    the top, which is how a return to the full state is counted.
    """
    times, upper = exit_walks(policy, supply, demand, M, start, replications, root_seed, max_rounds, stream=stream, max_work=max_work)
    n = len(times)
    t = times.astype(float)
    u = upper.astype(float)
    if n > 1:
        cov = np.cov(t, u, ddof=1)
        se_t, se_u, c = math.sqrt(cov[0, 0] / n), math.sqrt(cov[1, 1] / n), cov[0, 1] / n
    else:
        se_t = se_u = c = 0.0
    return ExitEstimate(float(start), float(t.mean()), se_t, float(u.mean()), se_u, float(c), n)


def estimate_hitting_stats(
    policy: PolicySpec,
    supply: DistributionSpec,
    demand: DistributionSpec,
    M: float,
    replications: int,
    root_seed: int = 0,
    max_rounds: int = 1_000_000,
    max_work: int | None = None,
) -> HittingStats:
    """Exit statistics from the full and from the empty store.

    ``max_work`` bounds the walk-rounds spent on each starting level.
    """
    top = estimate_hitting(policy, supply, demand, M, M, replications, root_seed, max_rounds, 1, max_work)
    bottom = estimate_hitting(policy, supply, demand, M, 0.0, replications, root_seed, max_rounds, 2, max_work)
    return HittingStats(
        E_M=top.mean_time, E_0=bottom.mean_time,
        p_M=top.p_upper, p_0=1.0 - bottom.p_upper,
        se_E_M=top.se_time, se_E_0=bottom.se_time,
        se_p_M=top.se_upper, se_p_0=bottom.se_upper,
        cov_M=top.cov_time_upper, cov_0=-bottom.cov_time_upper,
    )


def renewal_identity(E_M: float, E_0: float, p_M: float, p_0: float) -> tuple[float, float]:
    """Long-run fractions of rounds at the full and the empty boundary.

    A cycle runs from a full store through any number of returns to full,
    then to empty and its returns, then back to full.  The number of full
    visits per cycle is geometric with mean ``1 / (1 - p_M)``, each costing
    ``E_M`` rounds on average, and likewise for the empty side.
    """
    if not (E_M > 0 and E_0 > 0):
        raise ValueError("expected exit times must be positive")
    if p_M >= 1 or p_0 >= 1:
        raise ZeroDivisionError("boundary return probabilities must be below 1")
    h_m = 1.0 / (E_M + E_0 * (1 - p_M) / (1 - p_0))
    h_0 = 1.0 / (E_M * (1 - p_0) / (1 - p_M) + E_0)
    return h_m, h_0


def renewal_identity_se(stats: HittingStats) -> tuple[float, float]:
    """Delta-method standard errors of :func:`renewal_identity` at ``stats``.

    The two starting levels are simulated independently, so only the
    within-start covariances enter.
    """
    E_M, E_0, p_M, p_0 = stats.E_M, stats.E_0, stats.p_M, stats.p_0
    cov_top = np.array([[stats.se_E_M**2, stats.cov_M], [stats.cov_M, stats.se_p_M**2]])
    cov_bot = np.array([[stats.se_E_0**2, stats.cov_0], [stats.cov_0, stats.se_p_0**2]])
    qM, q0 = 1 - p_M, 1 - p_0

    d = E_M + E_0 * qM / q0
    g_top_m = np.array([-1.0, E_0 / q0]) / d**2
    g_bot_m = np.array([-qM / q0, -E_0 * qM / q0**2]) / d**2

    d0 = E_M * q0 / qM + E_0
    g_top_0 = np.array([-q0 / qM, -E_M * q0 / qM**2]) / d0**2
    g_bot_0 = np.array([-1.0, E_M / qM]) / d0**2

    var_m = g_top_m @ cov_top @ g_top_m + g_bot_m @ cov_bot @ g_bot_m
    var_0 = g_top_0 @ cov_top @ g_top_0 + g_bot_0 @ cov_bot @ g_bot_0
    return math.sqrt(max(var_m, 0.0)), math.sqrt(max(var_0, 0.0))


def crossing_probability(
    policy: PolicySpec,
    supply: DistributionSpec,
    demand: DistributionSpec,
    M: float,
    offset: float = 1.0,
    replications: int = 100_000,
    root_seed: int = 0,
    max_rounds: int = 1_000_000,
) -> tuple[float, float]:
    """Probability that a walk started ``offset`` above ``M/2`` drops below ``M/2`` before reaching ``M``.

    Returns the estimate and its standard error.
    """
    _, upper = exit_walks(
        policy, supply, demand, M, M / 2 + offset, replications, root_seed, max_rounds,
        stop_below=M / 2, stream=3,
    )
    p = 1.0 - upper.mean()
    return float(p), float(math.sqrt(p * (1 - p) / len(upper)))
