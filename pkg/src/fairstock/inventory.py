"""Store dynamics: reflected inventory, unreflected walk, virtual stores."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class InventoryState:
    level: float
    capacity: float
    round: int = 0

    def __post_init__(self) -> None:
        if not self.capacity > 0:
            raise ValueError("capacity must be positive")
        if not 0.0 <= self.level <= self.capacity:
            raise ValueError(f"level {self.level} outside [0, {self.capacity}]")


@dataclass(frozen=True)
class StepRecord:
    """Outcome of one round.

    ``allocation`` and ``demand`` are scalars in the single-resource model and
    per-type vectors for a virtual store in the multi-resource model.
    ``at_upper``/``at_lower`` refer to the post-update level.
    """

    allocation: float | np.ndarray
    budget: float
    demand: float | np.ndarray
    drift: float
    waste: float
    stockout: float
    at_upper: bool
    at_lower: bool
    level: float = 0.0
    prev_level: float = 0.0


def _reflect(level: float, drift: float, capacity: float) -> tuple[float, float, float]:
    x = level + drift
    waste = x - capacity if x > capacity else 0.0
    stockout = -x if x < 0.0 else 0.0
    new = min(max(x, 0.0), capacity)
    return new, waste, stockout


def step(
    state: InventoryState, budget: float, demand: float, allocation: float
) -> tuple[InventoryState, StepRecord]:
    """Advance the store one round: receive ``budget``, serve ``demand`` agents ``allocation`` each."""
    drift = budget - demand * allocation
    new, waste, stockout = _reflect(state.level, drift, state.capacity)
    record = StepRecord(
        allocation=allocation,
        budget=budget,
        demand=demand,
        drift=drift,
        waste=waste,
        stockout=stockout,
        at_upper=new == state.capacity,
        at_lower=new == 0.0,
        level=new,
        prev_level=state.level,
    )
    return replace(state, level=new, round=state.round + 1), record


def step_unreflected(q: float, drift: float) -> float:
    return q + drift


@dataclass(frozen=True)
class MultiInventoryState:
    """Per-resource levels, each confined to its own virtual-store cap."""

    levels: np.ndarray
    virtual_caps: np.ndarray
    round: int = 0

    def __post_init__(self) -> None:
        levels = np.asarray(self.levels, dtype=float)
        caps = np.asarray(self.virtual_caps, dtype=float)
        if levels.shape != caps.shape or levels.ndim != 1:
            raise ValueError("levels and virtual_caps must be 1-d of equal length")
        if np.any(caps <= 0):
            raise ValueError("virtual caps must be positive")
        if np.any(levels < 0) or np.any(levels > caps):
            raise ValueError("each level must lie in [0, cap]")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "virtual_caps", caps)

    @classmethod
    def split(cls, capacity: float, n_resources: int, levels: Sequence[float] | None = None) -> MultiInventoryState:
        """Even split of total ``capacity`` into ``n_resources`` stores (half full by default)."""
        caps = np.full(n_resources, capacity / n_resources)
        start = caps / 2 if levels is None else np.asarray(levels, dtype=float)
        return cls(start, caps)

    @property
    def capacity(self) -> float:
        return float(self.virtual_caps.sum())


def step_multi(
    state: MultiInventoryState,
    budgets: Sequence[float],
    demand_by_type: Sequence[float],
    allocations: np.ndarray,
) -> tuple[MultiInventoryState, list[StepRecord]]:
    """Advance every virtual store by one round.

    ``allocations`` has shape (types, resources); store ``k`` is drawn down by
    ``sum_theta demand_by_type[theta] * allocations[theta, k]``.
    """
    budgets = np.asarray(budgets, dtype=float)
    demand = np.asarray(demand_by_type, dtype=float)
    alloc = np.asarray(allocations, dtype=float)
    n_res = state.levels.shape[0]
    if budgets.shape != (n_res,):
        raise ValueError(f"expected {n_res} budgets, got shape {budgets.shape}")
    if alloc.ndim != 2 or alloc.shape != (demand.shape[0], n_res):
        raise ValueError(f"allocations must have shape ({demand.shape[0]}, {n_res}), got {alloc.shape}")

    new_levels = np.empty(n_res)
    records = []
    for k in range(n_res):
        drift = budgets[k] - float(demand @ alloc[:, k])
        cap = state.virtual_caps[k]
        new, waste, stockout = _reflect(state.levels[k], drift, cap)
        new_levels[k] = new
        records.append(
            StepRecord(
                allocation=alloc[:, k].copy(),
                budget=float(budgets[k]),
                demand=demand.copy(),
                drift=drift,
                waste=waste,
                stockout=stockout,
                at_upper=new == cap,
                at_lower=new == 0.0,
                level=new,
                prev_level=float(state.levels[k]),
            )
        )
    return MultiInventoryState(new_levels, state.virtual_caps, state.round + 1), records
