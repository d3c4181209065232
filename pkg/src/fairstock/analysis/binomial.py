"""Fair-coin binomial tails and the epoch construction for the efficiency lower bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

# relative slack when rounding float ratios up to integers, so that e.g.
# 11 / 0.19999999999999998 still rounds to 55
_CEIL_RTOL = 1e-9


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_RTOL * max(1.0, abs(x)))


def fair_binomial_tail(L: int, k: int) -> tuple[float, float]:
    """``Pr(Bin(L, 1/2) >= k)`` and its natural log.

    The coefficient sum is exact integer arithmetic; the probability is the
    correctly rounded quotient by ``2**L`` and the log is taken of the exact
    integer, so neither underflows for large ``L``.
    """
    if L < 0:
        raise ValueError("L must be nonnegative")
    k = max(int(k), 0)
    if k > L:
        return 0.0, -math.inf
    total = sum(math.comb(L, j) for j in range(k, L + 1))
    return total / 2**L, math.log(total) - L * math.log(2)


@dataclass(frozen=True)
class TailBound:
    exact_tail: float
    bound: float
    holds: bool
    log_tail: float


def binomial_tail_bound(L: int, t: int) -> TailBound:
    """Compare ``Pr(Bin(L, 1/2) >= L/2 + t)`` with ``exp(-16 t^2 / L) / 15``."""
    if int(L) != L or L <= 0 or L % 2:
        raise ValueError("L must be a positive even integer")
    if int(t) != t or not 0 < t <= L / 8:
        raise ValueError("t must be an integer in (0, L/8]")
    L, t = int(L), int(t)
    tail, log_tail = fair_binomial_tail(L, L // 2 + t)
    log_bound = -16 * t * t / L - math.log(15)
    return TailBound(tail, math.exp(log_bound), log_tail >= log_bound, log_tail)


@dataclass(frozen=True)
class EpochBound:
    """Lower bound on long-run waste or stockout for Bernoulli(1/2) supply, unit demand.

    ``case`` is 1 (allocations too small: waste), 2 (too large: stockout)
    or 3 (straddling one half: stockout, via a binomial tail).
    """

    case: int
    W_lb: float
    V_lb: float
    L_used: int
    t: int | None = None
    log_V_lb: float | None = None
    tail_bound: float | None = None


def epoch_lower_bound(a: float, delta: float, M: float) -> EpochBound:
    """Inefficiency floor for any policy with allocations in ``[a, a + delta]``.

    Rounds are grouped into epochs of ``L`` rounds whose total supply is
    ``Bin(L, 1/2)``.  If even the largest allocation leaves an expected
    surplus, an epoch with at least half its rounds supplied must overflow;
    if even the smallest leaves a deficit, half the epochs stock out.
    Otherwise a stockout needs a binomial deviation of ``L * delta + 1``,
    which with ``L`` of order ``M / delta`` has probability ``e^{-O(delta M)}``.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if M <= 0:
        raise ValueError("M must be positive")
    if a < 0.5 - delta:
        L = _ceil((M + 1) / (0.5 - a - delta))
        return EpochBound(case=1, W_lb=0.5, V_lb=0.0, L_used=L)
    if a > 0.5:
        L = _ceil(1 / (a - 0.5))
        return EpochBound(case=2, W_lb=0.0, V_lb=0.5, L_used=L)
    if delta > 1 / 9 + 1e-15:
        raise ValueError("the straddling case needs delta <= 1/9")
    L = _ceil(8 * M / delta)
    L += L % 2
    if L < (M + 1) / (0.5 - 2 * delta):
        raise ValueError("epoch length too short for the straddling case")
    t = _ceil(L * delta) + 1
    tail, log_tail = fair_binomial_tail(L, L // 2 + t)
    bound = math.exp(-16 * t * t / L) / 15 if t <= L / 8 else None
    return EpochBound(case=3, W_lb=0.0, V_lb=tail, L_used=L, t=t, log_V_lb=log_tail, tail_bound=bound)
