"""Vectorized simulation of many independent stores at once.

A *lane* is one (capacity, policy, replication) combination.  All lanes are
advanced in lock-step, one round per iteration, with numpy arithmetic over
the lane axis.  Every lane sees the supply and demand draws of its own
replication, so lanes that share a replication id are driven by common
random numbers and the result of a lane never depends on which other lanes
ran beside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .env import DistributionSpec, RngStream
from .metrics import PATH_TOL, RunSummary
from .policies import depletion_share

# rounds drawn per block; generators are consumed sequentially so block size
# does not change the sample path
BLOCK = 4096


def draw_blocks(
    specs: Sequence[DistributionSpec],
    kind: str,
    root_seed: int,
    replication_ids: Sequence[int],
    horizon: int,
    block: int = BLOCK,
) -> Iterator[np.ndarray]:
    """Yield draws of shape (rounds, replications, len(specs)) block by block."""
    streams = [RngStream(root_seed, int(r)) for r in replication_ids]
    gens = [[s.generator(kind, j) for j in range(len(specs))] for s in streams]
    for t0 in range(0, horizon, block):
        rounds = np.arange(t0, min(t0 + block, horizon))
        out = np.empty((len(rounds), len(streams), len(specs)))
        for r, row in enumerate(gens):
            for j, spec in enumerate(specs):
                out[:, r, j] = spec.sample(row[j], rounds)
        yield out


@dataclass
class Lanes:
    """Single-resource lanes in threshold form.

    Each lane allocates ``low`` while its level is below ``capacity / 2`` and
    ``high`` otherwise.  With ``full_depletion`` set the branch values are
    ignored and every lane hands out everything on hand.
    """

    capacity: np.ndarray
    low: np.ndarray
    high: np.ndarray
    start: np.ndarray
    replication: np.ndarray
    full_depletion: bool = False
    a_max: float = math.inf
    clamped: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.capacity = np.asarray(self.capacity, dtype=float)
        n = self.capacity.shape[0]
        self.low = np.broadcast_to(np.asarray(self.low, dtype=float), (n,)).copy()
        self.high = np.broadcast_to(np.asarray(self.high, dtype=float), (n,)).copy()
        self.start = np.broadcast_to(np.asarray(self.start, dtype=float), (n,)).copy()
        self.replication = np.broadcast_to(np.asarray(self.replication, dtype=np.int64), (n,)).copy()
        if self.clamped is None:
            self.clamped = np.zeros(n, dtype=bool)
        if np.any(self.capacity <= 0):
            raise ValueError("capacities must be positive")
        if np.any(self.start < 0) or np.any(self.start > self.capacity):
            raise ValueError("start levels must lie in [0, capacity]")

    def __len__(self) -> int:
        return self.capacity.shape[0]


@dataclass
class MultiLanes:
    """Virtual-store lanes: ``low``/``high`` have shape (lanes, types, resources)."""

    capacity: np.ndarray
    low: np.ndarray
    high: np.ndarray
    replication: np.ndarray
    start: np.ndarray | None = None
    clamped: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.capacity = np.asarray(self.capacity, dtype=float)
        self.low = np.asarray(self.low, dtype=float)
        self.high = np.asarray(self.high, dtype=float)
        n = self.capacity.shape[0]
        if self.low.shape != self.high.shape or self.low.ndim != 3 or self.low.shape[0] != n:
            raise ValueError("low/high must have shape (lanes, types, resources)")
        self.replication = np.broadcast_to(np.asarray(self.replication, dtype=np.int64), (n,)).copy()
        k = self.low.shape[2]
        caps = self.capacity[:, None] / k
        if self.start is None:
            self.start = caps / 2
        self.start = np.broadcast_to(np.asarray(self.start, dtype=float), (n, k)).copy()
        if self.clamped is None:
            self.clamped = np.zeros(n, dtype=bool)
        if np.any(self.start < 0) or np.any(self.start > caps):
            raise ValueError("start levels must lie in [0, capacity / K]")

    def __len__(self) -> int:
        return self.capacity.shape[0]


@dataclass
class LaneResults:
    """Per-lane run statistics; ``summary(i)`` packages lane ``i``."""

    T: int
    waste: np.ndarray
    stockout: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    upper_prev: np.ndarray
    lower_prev: np.ndarray
    delta_fair: np.ndarray
    z_max: np.ndarray
    z_min: np.ndarray
    violations: np.ndarray
    clamped: np.ndarray
    h: float = 1.0
    b: float = 1.0
    final_level: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def summary(self, i: int) -> RunSummary:
        w_bar = float(self.waste[i]) / self.T
        v_bar = float(self.stockout[i]) / self.T
        return RunSummary(
            T=self.T,
            w_bar=w_bar,
            v_bar=v_bar,
            delta_eff=self.h * w_bar + self.b * v_bar,
            delta_fair=float(self.delta_fair[i]),
            h_m=float(self.upper[i]) / self.T,
            h_0=float(self.lower[i]) / self.T,
            h_m_prev=float(self.upper_prev[i]) / self.T,
            h_0_prev=float(self.lower_prev[i]) / self.T,
            z_max=float(self.z_max[i]),
            z_min=float(self.z_min[i]),
            clamp_warnings=int(self.clamped[i]),
            sandwich_violations=int(self.violations[i]),
            h=self.h,
            b=self.b,
        )

    def summaries(self) -> list[RunSummary]:
        return [self.summary(i) for i in range(len(self.waste))]


def simulate(
    lanes: Lanes,
    supply: DistributionSpec,
    demand: DistributionSpec,
    horizon: int,
    root_seed: int,
    replication_ids: Sequence[int],
    h: float = 1.0,
    b: float = 1.0,
) -> LaneResults:
    """Run every lane for ``horizon`` rounds.

    ``lanes.replication`` indexes into ``replication_ids``; the draws of
    replication ``replication_ids[j]`` drive every lane with ``replication == j``.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n = len(lanes)
    cap = lanes.capacity
    half = cap / 2
    rep = lanes.replication
    level = lanes.start.copy()
    waste = np.zeros(n)
    stockout = np.zeros(n)
    upper = np.zeros(n, dtype=np.int64)
    lower = np.zeros(n, dtype=np.int64)
    upper_prev = np.zeros(n, dtype=np.int64)
    lower_prev = np.zeros(n, dtype=np.int64)
    a_min = np.full(n, np.inf)
    a_hi = np.full(n, -np.inf)
    z_max = np.zeros(n)
    z_min = np.zeros(n)
    bad = np.zeros(n, dtype=np.int64)

    supplies = draw_blocks([supply], "supply", root_seed, replication_ids, horizon)
    demands = draw_blocks([demand], "demand", root_seed, replication_ids, horizon)
    for b_blk, n_blk in zip(supplies, demands):
        b_blk = b_blk[:, rep, 0]
        n_blk = n_blk[:, rep, 0]
        for bt, nt in zip(b_blk, n_blk):
            if lanes.full_depletion:
                with np.errstate(divide="ignore", invalid="ignore"):
                    alloc = np.where(nt > 0, np.minimum(lanes.a_max, depletion_share(level, bt, nt)), 0.0)
            else:
                alloc = np.where(level >= half, lanes.high, lanes.low)
            draw = nt * alloc
            drift = bt - draw
            x = level + drift
            w = np.maximum(x - cap, 0.0)
            v = np.maximum(-x, 0.0)
            new = np.minimum(np.maximum(x, 0.0), cap)

            at_up = new == cap
            at_lo = new == 0.0
            prev_up = level == cap
            prev_lo = level == 0.0
            waste += w
            stockout += v
            upper += at_up
            lower += at_lo
            upper_prev += prev_up
            lower_prev += prev_lo
            present = nt > 0
            a_min = np.where(present, np.minimum(a_min, alloc), a_min)
            a_hi = np.where(present, np.maximum(a_hi, alloc), a_hi)
            z_max = np.maximum(z_max, bt)
            z_min = np.maximum(z_min, draw)

            bad += (w > PATH_TOL) & ~at_up
            bad += (v > PATH_TOL) & ~at_lo
            bad += (w > z_max + PATH_TOL) | (v > z_min + PATH_TOL)
            bad += prev_up & (w < np.maximum(drift, 0.0) - PATH_TOL)
            bad += prev_lo & (v < np.maximum(-drift, 0.0) - PATH_TOL)
            level = new

    envy = np.where(a_hi >= a_min, a_hi - a_min, 0.0)
    return LaneResults(
        T=horizon, waste=waste, stockout=stockout, upper=upper, lower=lower,
        upper_prev=upper_prev, lower_prev=lower_prev, delta_fair=envy,
        z_max=z_max, z_min=z_min, violations=bad, clamped=lanes.clamped.copy(),
        h=h, b=b, final_level=level,
    )


def simulate_multi(
    lanes: MultiLanes,
    supplies: Sequence[DistributionSpec],
    demands: Sequence[DistributionSpec],
    weights: np.ndarray,
    horizon: int,
    root_seed: int,
    replication_ids: Sequence[int],
    h: float = 1.0,
    b: float = 1.0,
) -> LaneResults:
    """Virtual-store counterpart of :func:`simulate`.

    Store ``k`` of a lane with total capacity ``M`` has cap ``M / K`` and
    threshold ``M / (2K)``.  Waste and stockout are summed over stores; a
    round counts toward ``upper``/``lower`` when any store sits at that
    boundary.  Envy uses the weight table (types, resources).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    weights = np.asarray(weights, dtype=float)
    n, n_types, n_res = lanes.low.shape
    if len(supplies) != n_res or len(demands) != n_types or weights.shape != (n_types, n_res):
        raise ValueError("supply/demand/weight dimensions disagree with the lane tables")
    cap = lanes.capacity[:, None] / n_res
    half = cap / 2
    rep = lanes.replication
    level = lanes.start.copy()
    waste = np.zeros(n)
    stockout = np.zeros(n)
    upper = np.zeros(n, dtype=np.int64)
    lower = np.zeros(n, dtype=np.int64)
    upper_prev = np.zeros(n, dtype=np.int64)
    lower_prev = np.zeros(n, dtype=np.int64)
    own_min = np.full((n, n_types), np.inf)
    own_max = np.full((n, n_types), -np.inf)
    all_min = np.full((n, n_types), np.inf)
    all_max = np.full((n, n_types), -np.inf)
    z_max = np.zeros(n)
    z_min = np.zeros(n)
    bad = np.zeros(n, dtype=np.int64)

    s_iter = draw_blocks(supplies, "supply", root_seed, replication_ids, horizon)
    d_iter = draw_blocks(demands, "demand", root_seed, replication_ids, horizon)
    for b_blk, n_blk in zip(s_iter, d_iter):
        b_blk = b_blk[:, rep, :]
        n_blk = n_blk[:, rep, :]
        for bt, nt in zip(b_blk, n_blk):
            alloc = np.where((level >= half)[:, None, :], lanes.high, lanes.low)
            draw = np.einsum("lt,ltk->lk", nt, alloc)
            drift = bt - draw
            x = level + drift
            w = np.maximum(x - cap, 0.0)
            v = np.maximum(-x, 0.0)
            new = np.minimum(np.maximum(x, 0.0), cap)

            at_up = new == cap
            at_lo = new == 0.0
            prev_up = level == cap
            prev_lo = level == 0.0
            waste += w.sum(axis=1)
            stockout += v.sum(axis=1)
            upper += at_up.any(axis=1)
            lower += at_lo.any(axis=1)
            upper_prev += prev_up.any(axis=1)
            lower_prev += prev_lo.any(axis=1)

            present = nt > 0
            util = np.einsum("tk,lsk->lts", weights, alloc)
            own = np.einsum("ltt->lt", util)
            own_min = np.where(present, np.minimum(own_min, own), own_min)
            own_max = np.where(present, np.maximum(own_max, own), own_max)
            mask = present[:, None, :]
            all_min = np.minimum(all_min, np.where(mask, util, np.inf).min(axis=2))
            all_max = np.maximum(all_max, np.where(mask, util, -np.inf).max(axis=2))

            z_max = np.maximum(z_max, bt.max(axis=1))
            z_min = np.maximum(z_min, draw.max(axis=1))
            bad += ((w > PATH_TOL) & ~at_up).sum(axis=1)
            bad += ((v > PATH_TOL) & ~at_lo).sum(axis=1)
            bad += (prev_up & (w < np.maximum(drift, 0.0) - PATH_TOL)).sum(axis=1)
            bad += (prev_lo & (v < np.maximum(-drift, 0.0) - PATH_TOL)).sum(axis=1)
            level = new

    with np.errstate(invalid="ignore"):
        gap = np.maximum(all_max - own_min, own_max - all_min)
    gap = np.where(np.isfinite(gap), gap, 0.0)
    envy = np.maximum(gap.max(axis=1), 0.0)
    return LaneResults(
        T=horizon, waste=waste, stockout=stockout, upper=upper, lower=lower,
        upper_prev=upper_prev, lower_prev=lower_prev, delta_fair=envy,
        z_max=z_max, z_min=z_min, violations=bad, clamped=lanes.clamped.copy(),
        h=h, b=b, final_level=level,
    )
