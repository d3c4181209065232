"""Discrete birth-death caricature of the inventory under a threshold rule.

States are ``0..M``.  Away from the boundaries the chain steps up or down
by one; below ``M/2`` it is biased upward by ``delta``, above ``M/2``
downward.  At ``M/2`` both moves have the smaller probability.  With
``delta = 0`` it is the unbiased walk, whose stationary law is uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BirthDeathChain:
    M: int
    p: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        _check_params(self.p, self.delta, self.M)

    @property
    def rho(self) -> float:
        return (2 * self.p + self.delta) / (2 * self.p - self.delta)

    def transition_matrix(self) -> np.ndarray:
        M, p, d = self.M, self.p, self.delta
        toward = p + d / 2  # step toward the middle
        away = p - d / 2  # step away from the middle
        P = np.zeros((M + 1, M + 1))
        for i in range(M + 1):
            if self.delta == 0:
                up = p if i < M else 0.0
                down = p if i > 0 else 0.0
            elif i == M // 2:
                up = down = away
            elif i < M // 2:
                up = toward
                down = away if i > 0 else 0.0
            else:
                up = away if i < M else 0.0
                down = toward
            if i < M:
                P[i, i + 1] = up
            if i > 0:
                P[i, i - 1] = down
            P[i, i] = 1.0 - up - down
        return P


def _check_params(p: float, delta: float, M: int) -> None:
    if int(M) != M or M < 1:
        raise ValueError("M must be a positive integer")
    if not 0 < p <= 0.5:
        raise ValueError("p must lie in (0, 1/2]")
    if delta < 0 or delta >= 2 * p:
        raise ValueError("delta must lie in [0, 2p)")
    if delta > 0 and M % 2:
        raise ValueError("M must be even when delta > 0")


def birth_death_stationary_closed_form(p: float, delta: float, M: int) -> np.ndarray:
    """Stationary law from the geometric profile rho^min(i, M - i)."""
    _check_params(p, delta, M)
    M = int(M)
    if delta == 0:
        return np.full(M + 1, 1.0 / (M + 1))
    rho = (2 * p + delta) / (2 * p - delta)
    half = M // 2
    dist = np.minimum(np.arange(M + 1), M - np.arange(M + 1))
    log_peak = half * math.log(rho)
    if log_peak < 700:
        peak = rho**half
        pi0 = 1.0 / (2 * (peak - 1) / (rho - 1) + peak)
        return pi0 * rho ** dist.astype(float)
    # rho^(M/2) would overflow: normalize relative to the middle state
    rel = np.exp((dist - half) * math.log(rho))
    below = math.fsum(rho ** -float(j) for j in range(1, half + 1))
    return rel / (2 * below + 1)


def birth_death_stationary_solve(
    chain: BirthDeathChain, tol: float = 1e-12, max_iter: int = 1_000_000
) -> np.ndarray:
    """Solve ``pi P = pi`` with ``sum(pi) = 1`` directly; power iteration if that is inaccurate."""
    P = chain.transition_matrix()
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(A, rhs)
        if np.max(np.abs(pi @ P - pi)) <= tol and np.all(pi >= -tol):
            return np.clip(pi, 0.0, None)
    except np.linalg.LinAlgError:
        pass
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    raise RuntimeError("stationary distribution did not converge; chain may be non-ergodic")
