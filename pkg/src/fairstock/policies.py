"""Allocation rules mapping (level, budget, demand) to per-agent allocations."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from .env import cycle_reference
from .inventory import InventoryState, MultiInventoryState

POLICY_KINDS = (
    "static",
    "proportional",
    "bang_bang",
    "time_varying_bang_bang",
    "multi_bang_bang",
    "eg_bang_bang",
    "full_depletion",
)

THRESHOLD_KINDS = ("static", "proportional", "bang_bang", "time_varying_bang_bang")


class AllocationClampWarning(UserWarning):
    """A branch allocation fell outside [0, a_max] and was clamped."""


class Branches(NamedTuple):
    low: float
    high: float
    clamped: bool


@dataclass(frozen=True)
class PolicySpec:
    """Which allocation rule to run and with what parameters.

    ``supply_mean`` is a scalar for single-resource policies and a
    per-resource sequence for ``multi_bang_bang``.  Reference means left as
    ``None`` are filled in from the environment by :meth:`bind`.
    """

    kind: str
    alpha: float | None = None
    delta: float = 0.0
    supply_mean: float | tuple[float, ...] | None = None
    demand_mean: float | None = None
    supply_schedule: tuple[float, ...] | None = None
    demand_schedule: tuple[float, ...] | None = None
    eg_allocations: tuple[tuple[float, ...], ...] | None = None
    n_types: int = 1
    a_max: float = math.inf

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.delta < 0 or not math.isfinite(self.delta):
            raise ValueError("delta must be finite and nonnegative")
        if not self.a_max > 0:
            raise ValueError("a_max must be positive")
        if isinstance(self.supply_mean, (list, tuple, np.ndarray)):
            object.__setattr__(self, "supply_mean", tuple(float(m) for m in self.supply_mean))
        if self.eg_allocations is not None:
            table = tuple(tuple(float(v) for v in row) for row in self.eg_allocations)
            object.__setattr__(self, "eg_allocations", table)
            object.__setattr__(self, "n_types", len(table))
        for name in ("supply_schedule", "demand_schedule"):
            sched = getattr(self, name)
            if sched is not None:
                object.__setattr__(self, name, tuple(float(m) for m in sched))

    def with_delta(self, delta: float) -> PolicySpec:
        return replace(self, delta=float(delta))

    def bind(
        self,
        supply_mean: float | Sequence[float] | None = None,
        demand_mean: float | None = None,
        supply_schedule: Sequence[float] | None = None,
        demand_schedule: Sequence[float] | None = None,
        n_types: int | None = None,
    ) -> PolicySpec:
        """Fill unset reference quantities (explicit spec values win)."""
        changes: dict[str, Any] = {}
        if self.supply_mean is None and supply_mean is not None:
            changes["supply_mean"] = supply_mean
        if self.demand_mean is None and demand_mean is not None:
            changes["demand_mean"] = float(demand_mean)
        if self.supply_schedule is None and supply_schedule is not None:
            changes["supply_schedule"] = tuple(supply_schedule)
        if self.demand_schedule is None and demand_schedule is not None:
            changes["demand_schedule"] = tuple(demand_schedule)
        if n_types is not None and self.eg_allocations is None:
            changes["n_types"] = int(n_types)
        return replace(self, **changes) if changes else self

    # -- reference levels -----------------------------------------------------

    def reference(self) -> float:
        """Center allocation for single-resource rules."""
        if self.kind == "static":
            if self.alpha is None:
                raise ValueError("static policy requires alpha")
            return float(self.alpha)
        if self.kind == "time_varying_bang_bang":
            if self.supply_schedule is None or self.demand_schedule is None:
                raise ValueError("time-varying policy requires supply and demand schedules")
            return cycle_reference(self.supply_schedule, self.demand_schedule)
        if self.supply_mean is None or self.demand_mean is None:
            raise ValueError(f"{self.kind} policy requires supply_mean and demand_mean")
        if isinstance(self.supply_mean, tuple):
            raise ValueError(f"{self.kind} policy expects a scalar supply_mean")
        if self.demand_mean <= 0:
            raise ValueError("demand_mean must be positive")
        return self.supply_mean / self.demand_mean

    def base_table(self, n_resources: int | None = None) -> np.ndarray:
        """Center allocations per (type, resource) for the multi-resource rules."""
        if self.kind == "eg_bang_bang":
            if self.eg_allocations is None:
                raise ValueError("eg_bang_bang requires an eg_allocations table")
            table = np.array(self.eg_allocations, dtype=float)
        elif self.kind == "multi_bang_bang":
            if self.supply_mean is None or self.demand_mean is None:
                raise ValueError("multi_bang_bang requires supply_mean and demand_mean")
            if self.demand_mean <= 0:
                raise ValueError("demand_mean must be positive")
            means = np.atleast_1d(np.asarray(self.supply_mean, dtype=float))
            table = np.tile(means / self.demand_mean, (self.n_types, 1))
        else:
            raise ValueError(f"{self.kind} is not a multi-resource policy")
        if n_resources is not None and table.shape[1] != n_resources:
            raise ValueError(f"policy has {table.shape[1]} resources, state has {n_resources}")
        return table

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.kind not in ("static", "proportional", "full_depletion"):
            out["delta"] = self.delta
        for name in ("supply_mean", "demand_mean", "supply_schedule", "demand_schedule", "eg_allocations"):
            value = getattr(self, name)
            if value is not None:
                out[name] = _to_jsonable(value)
        if math.isfinite(self.a_max):
            out["a_max"] = self.a_max
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PolicySpec:
        allowed = {
            "kind", "alpha", "delta", "supply_mean", "demand_mean",
            "supply_schedule", "demand_schedule", "eg_allocations", "a_max",
        }
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ValueError("policy requires a kind")
        kwargs = dict(data)
        for name in ("supply_schedule", "demand_schedule"):
            if kwargs.get(name) is not None:
                kwargs[name] = tuple(kwargs[name])
        if isinstance(kwargs.get("supply_mean"), list):
            kwargs["supply_mean"] = tuple(kwargs["supply_mean"])
        if kwargs.get("a_max") is None:
            kwargs.pop("a_max", None)
        return cls(**kwargs)


def _to_jsonable(value):
    if isinstance(value, tuple):
        return [_to_jsonable(v) for v in value]
    return value


def _clamp(value: float, a_max: float) -> tuple[float, bool]:
    clamped = min(max(value, 0.0), a_max)
    return clamped, clamped != value


def _check_delta(spec: PolicySpec, ref: float) -> None:
    if spec.delta >= 2 * ref and spec.delta > 0:
        raise ValueError(
            f"delta={spec.delta} out of range: must be below 2*reference = {2 * ref}"
        )


def branch_allocations(spec: PolicySpec) -> Branches:
    """Low/high allocations of a single-resource threshold rule, clamped to [0, a_max].

    Static and proportional rules have ``low == high``.
    """
    ref = spec.reference()
    if spec.kind in ("static", "proportional"):
        if spec.kind == "static" and not 0.0 <= ref <= spec.a_max:
            raise ValueError(f"alpha={ref} outside [0, a_max={spec.a_max}]")
        value, clamped = _clamp(ref, spec.a_max)
        return Branches(value, value, clamped)
    if spec.kind not in THRESHOLD_KINDS:
        raise ValueError(f"{spec.kind} is not a single-resource threshold rule")
    _check_delta(spec, ref)
    low, c_low = _clamp(ref - spec.delta / 2, spec.a_max)
    high, c_high = _clamp(ref + spec.delta / 2, spec.a_max)
    return Branches(low, high, c_low or c_high)


def _warn_if_clamped(branches: Branches) -> None:
    if branches.clamped:
        warnings.warn("allocation clamped to [0, a_max]", AllocationClampWarning, stacklevel=3)


def decide_static(spec: PolicySpec, state: InventoryState | None = None) -> float:
    """Constant allocation: ``alpha`` for static rules, mu_B/mu_N for proportional."""
    if spec.kind not in ("static", "proportional"):
        raise ValueError(f"decide_static got a {spec.kind} policy")
    return branch_allocations(spec).low


def decide_bang_bang(spec: PolicySpec, state: InventoryState) -> float:
    """Under-allocate below half capacity, over-allocate at or above it."""
    if spec.kind not in ("bang_bang", "proportional", "static"):
        raise ValueError(f"decide_bang_bang got a {spec.kind} policy")
    branches = branch_allocations(spec)
    _warn_if_clamped(branches)
    return branches.high if state.level >= state.capacity / 2 else branches.low


def decide_time_varying(spec: PolicySpec, state: InventoryState) -> float:
    if spec.kind != "time_varying_bang_bang":
        raise ValueError(f"decide_time_varying got a {spec.kind} policy")
    branches = branch_allocations(spec)
    _warn_if_clamped(branches)
    return branches.high if state.level >= state.capacity / 2 else branches.low


def multi_branch_tables(spec: PolicySpec, n_resources: int | None = None) -> tuple[np.ndarray, np.ndarray, bool]:
    """(low, high, clamped) tables of shape (types, resources) for virtual-store rules."""
    base = spec.base_table(n_resources)
    if spec.kind == "multi_bang_bang" and spec.delta > 0:
        limit = 2 * base.min()
        if spec.delta >= limit:
            raise ValueError(f"delta={spec.delta} out of range: must be below {limit}")
    low_raw = base - spec.delta / 2
    high_raw = base + spec.delta / 2
    low = np.clip(low_raw, 0.0, spec.a_max)
    high = np.clip(high_raw, 0.0, spec.a_max)
    clamped = bool(np.any(low != low_raw) or np.any(high != high_raw))
    return low, high, clamped


def _decide_virtual(spec: PolicySpec, state: MultiInventoryState) -> np.ndarray:
    low, high, clamped = multi_branch_tables(spec, state.levels.shape[0])
    if clamped:
        warnings.warn("allocation clamped to [0, a_max]", AllocationClampWarning, stacklevel=3)
    upper = state.levels >= state.virtual_caps / 2
    return np.where(upper[None, :], high, low)


def decide_multi(spec: PolicySpec, state: MultiInventoryState) -> np.ndarray:
    """Per-store threshold rule; the same bundle goes to every type."""
    if spec.kind != "multi_bang_bang":
        raise ValueError(f"decide_multi got a {spec.kind} policy")
    return _decide_virtual(spec, state)


def decide_eg_bang_bang(spec: PolicySpec, state: MultiInventoryState) -> np.ndarray:
    """Per-store threshold rule centred on type-specific EG allocations."""
    if spec.kind != "eg_bang_bang":
        raise ValueError(f"decide_eg_bang_bang got a {spec.kind} policy")
    return _decide_virtual(spec, state)


def decide_full_depletion(
    state: InventoryState, budget: float, demand: float, a_max: float = math.inf
) -> float:
    """Hand out everything on hand (capped at ``a_max``); 0 when nobody arrives."""
    if demand <= 0:
        return 0.0
    return float(min(a_max, depletion_share(state.level, budget, demand)))


def depletion_share(level, budget, demand):
    """``(level + budget) / demand``, nudged down until the store update cannot go negative.

    The store computes ``level + (budget - demand * share)``; plain division
    can leave that a rounding error below zero.  ``demand`` must be positive.
    """
    level = np.asarray(level, dtype=float)
    share = (level + budget) / demand
    for _ in range(4):
        short = level + (budget - demand * share) < 0
        if not np.any(short):
            break
        share = np.where(short, np.nextafter(share, 0.0), share)
    return share


def decide(spec: PolicySpec, state, budget: float | None = None, demand: float | None = None):
    """Dispatch on ``spec.kind``."""
    if spec.kind in ("static", "proportional"):
        return decide_static(spec, state)
    if spec.kind == "bang_bang":
        return decide_bang_bang(spec, state)
    if spec.kind == "time_varying_bang_bang":
        return decide_time_varying(spec, state)
    if spec.kind == "multi_bang_bang":
        return decide_multi(spec, state)
    if spec.kind == "eg_bang_bang":
        return decide_eg_bang_bang(spec, state)
    if budget is None or demand is None:
        raise ValueError("full_depletion needs the realized budget and demand")
    return decide_full_depletion(state, budget, demand, spec.a_max)
