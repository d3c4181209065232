"""Streaming envy and inefficiency accounting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .inventory import StepRecord

# path-wise inequalities are checked with this absolute slack
PATH_TOL = 1e-9


@dataclass
class EnvyTracker:
    """Running extrema of per-agent allocations over rounds with arrivals."""

    min_alloc: float = math.inf
    max_alloc: float = -math.inf

    def update(self, allocation: float, demand: float) -> None:
        if demand > 0:
            if allocation < self.min_alloc:
                self.min_alloc = allocation
            if allocation > self.max_alloc:
                self.max_alloc = allocation

    @property
    def delta_fair(self) -> float:
        if self.max_alloc < self.min_alloc:
            return 0.0
        return self.max_alloc - self.min_alloc


@dataclass
class MultiEnvyTracker:
    """Envy between bundles under type-specific linear utilities.

    For each type ``theta`` we keep the extrema of ``w_theta . A`` over the
    type's own bundles and over every bundle handed to any type with
    positive demand.  The envy is the largest gap between an own-bundle
    utility and any bundle utility, maximized over types.
    """

    weights: np.ndarray
    own_min: np.ndarray = field(init=False)
    own_max: np.ndarray = field(init=False)
    all_min: np.ndarray = field(init=False)
    all_max: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")
        n = self.weights.shape[0]
        self.own_min = np.full(n, math.inf)
        self.own_max = np.full(n, -math.inf)
        self.all_min = np.full(n, math.inf)
        self.all_max = np.full(n, -math.inf)

    def update(self, allocations: np.ndarray, demand_by_type: Sequence[float]) -> None:
        alloc = np.atleast_2d(np.asarray(allocations, dtype=float))
        demand = np.atleast_1d(np.asarray(demand_by_type, dtype=float))
        n_types, n_res = self.weights.shape
        if alloc.shape != (n_types, n_res) or demand.shape != (n_types,):
            raise ValueError(
                f"expected allocations {(n_types, n_res)} and demand ({n_types},), "
                f"got {alloc.shape} and {demand.shape}"
            )
        present = demand > 0
        if not present.any():
            return
        # util[theta, theta'] = w_theta . A_theta'
        util = self.weights @ alloc.T
        own = np.diag(util)
        self.own_min = np.where(present, np.minimum(self.own_min, own), self.own_min)
        self.own_max = np.where(present, np.maximum(self.own_max, own), self.own_max)
        seen = util[:, present]
        self.all_min = np.minimum(self.all_min, seen.min(axis=1))
        self.all_max = np.maximum(self.all_max, seen.max(axis=1))

    @property
    def delta_fair(self) -> float:
        return float(_multi_envy_from_extrema(self.own_min, self.own_max, self.all_min, self.all_max))


def _multi_envy_from_extrema(own_min, own_max, all_min, all_max):
    with np.errstate(invalid="ignore"):
        gap = np.maximum(all_max - own_min, own_max - all_min)
    gap = np.where(np.isfinite(gap), gap, 0.0)
    return np.maximum(gap.max(axis=-1), 0.0)


def multi_envy(
    weights: np.ndarray, allocation_history: Iterable[np.ndarray], demand_history: Iterable[Sequence[float]]
) -> float:
    """Envy of a multi-type allocation history; each entry is a (types, resources) matrix."""
    tracker = MultiEnvyTracker(weights)
    allocations = list(allocation_history)
    demands = list(demand_history)
    if len(allocations) != len(demands):
        raise ValueError("allocation and demand histories differ in length")
    for alloc, demand in zip(allocations, demands):
        tracker.update(alloc, demand)
    return tracker.delta_fair


@dataclass(frozen=True)
class RunSummary:
    """Finite-horizon metrics of one replication.

    ``h_m``/``h_0`` count rounds whose post-update level sits at a boundary;
    ``h_m_prev``/``h_0_prev`` use the pre-update level.  ``z_max``/``z_min``
    are the largest observed budget and drawdown, the path-wise stand-ins
    for the bounds on positive and negative drift.
    """

    T: int
    w_bar: float
    v_bar: float
    delta_eff: float
    delta_fair: float
    h_m: float
    h_0: float
    h_m_prev: float = 0.0
    h_0_prev: float = 0.0
    z_max: float = 0.0
    z_min: float = 0.0
    clamp_warnings: int = 0
    sandwich_violations: int = 0
    h: float = 1.0
    b: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class MetricsTracker:
    """Accumulates StepRecords into a :class:`RunSummary`.

    Records from a multi-resource run arrive as one list per round (one
    record per virtual store); waste and stockout are summed over stores and
    a round counts as "at a boundary" if any store is.
    """

    envy: EnvyTracker | MultiEnvyTracker = field(default_factory=EnvyTracker)
    rounds: int = 0
    upper: int = 0
    lower: int = 0
    upper_prev: int = 0
    lower_prev: int = 0
    z_max: float = 0.0
    z_min: float = 0.0
    clamp_warnings: int = 0
    sandwich_violations: int = 0
    _w_terms: list = field(default_factory=list, repr=False)
    _v_terms: list = field(default_factory=list, repr=False)

    def accumulate(self, record: StepRecord | Sequence[StepRecord], capacity: float | None = None) -> MetricsTracker:
        records = [record] if isinstance(record, StepRecord) else list(record)
        self.rounds += 1
        waste = stockout = 0.0
        at_upper = at_lower = prev_upper = prev_lower = False
        for rec in records:
            waste += rec.waste
            stockout += rec.stockout
            at_upper |= rec.at_upper
            at_lower |= rec.at_lower
            drawdown = rec.budget - rec.drift
            self.z_max = max(self.z_max, rec.budget)
            self.z_min = max(self.z_min, drawdown)
            if capacity is not None:
                prev_upper |= rec.prev_level == capacity
                prev_lower |= rec.prev_level == 0.0
            self.sandwich_violations += _path_violations(rec, self.z_max, self.z_min, capacity)
        self._w_terms.append(waste)
        self._v_terms.append(stockout)
        self.upper += at_upper
        self.lower += at_lower
        self.upper_prev += prev_upper
        self.lower_prev += prev_lower

        if isinstance(self.envy, MultiEnvyTracker):
            alloc = np.stack([np.asarray(rec.allocation, dtype=float) for rec in records], axis=1)
            self.envy.update(alloc, records[0].demand)
        else:
            self.envy.update(float(records[0].allocation), float(records[0].demand))
        return self

    def finalize(self, h: float = 1.0, b: float = 1.0) -> RunSummary:
        if self.rounds < 1:
            raise ValueError("cannot finalize an empty run")
        T = self.rounds
        w_bar = math.fsum(self._w_terms) / T
        v_bar = math.fsum(self._v_terms) / T
        return RunSummary(
            T=T,
            w_bar=w_bar,
            v_bar=v_bar,
            delta_eff=h * w_bar + b * v_bar,
            delta_fair=self.envy.delta_fair,
            h_m=self.upper / T,
            h_0=self.lower / T,
            h_m_prev=self.upper_prev / T,
            h_0_prev=self.lower_prev / T,
            z_max=self.z_max,
            z_min=self.z_min,
            clamp_warnings=self.clamp_warnings,
            sandwich_violations=self.sandwich_violations,
            h=h,
            b=b,
        )


def accumulate(tracker: MetricsTracker, record, capacity: float | None = None) -> MetricsTracker:
    return tracker.accumulate(record, capacity)


def finalize(tracker: MetricsTracker, h: float = 1.0, b: float = 1.0) -> RunSummary:
    return tracker.finalize(h, b)


def _path_violations(rec: StepRecord, z_max: float, z_min: float, capacity: float | None) -> int:
    """Count failures of the per-round waste/stockout bracketing for one record."""
    bad = 0
    if rec.waste > PATH_TOL and not rec.at_upper:
        bad += 1
    if rec.stockout > PATH_TOL and not rec.at_lower:
        bad += 1
    if rec.waste > z_max + PATH_TOL or rec.stockout > z_min + PATH_TOL:
        bad += 1
    if capacity is not None:
        if rec.prev_level == capacity and rec.waste < max(rec.drift, 0.0) - PATH_TOL:
            bad += 1
        if rec.prev_level == 0.0 and rec.stockout < max(-rec.drift, 0.0) - PATH_TOL:
            bad += 1
    return bad


def summarize_batch(summaries: Sequence[RunSummary]) -> dict[str, tuple[float, float]]:
    """Mean and standard error (sample sd / sqrt(n)) of each numeric field."""
    if not summaries:
        raise ValueError("no summaries to merge")
    n = len(summaries)
    out = {}
    for name in ("w_bar", "v_bar", "delta_eff", "delta_fair", "h_m", "h_0", "h_m_prev", "h_0_prev"):
        values = np.array([getattr(s, name) for s in summaries])
        se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out[name] = (float(values.mean()), se)
    return out
