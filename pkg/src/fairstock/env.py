"""Supply and demand processes with reproducible per-replication streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

FAMILIES = (
    "deterministic",
    "bernoulli",
    "truncated_normal",
    "poisson",
    "exponential",
    "bounded_discrete",
)

# families whose location parameter may follow a periodic schedule
_SCHEDULABLE = ("deterministic", "truncated_normal", "poisson", "exponential")

_STREAM_KINDS = {"supply": 0, "demand": 1, "aux": 2}


@dataclass(frozen=True)
class DistributionSpec:
    """Parametric description of a nonnegative supply or demand process.

    ``mean`` is the location parameter: the point mass for ``deterministic``,
    the pre-clamping mean for ``truncated_normal``, the rate for ``poisson``
    and the mean for ``exponential``.  ``bernoulli`` draws ``value`` with
    probability ``p`` and 0 otherwise.  ``bounded_discrete`` draws from the
    finite atoms ``values`` with probabilities ``probs``.

    A ``mean_schedule`` replaces ``mean``; the location used at round ``t``
    is ``mean_schedule[t % len(mean_schedule)]``.
    """

    family: str
    mean: float | None = None
    sigma: float = 0.0
    p: float | None = None
    value: float = 1.0
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    mean_schedule: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.mean_schedule is not None:
            object.__setattr__(self, "mean_schedule", tuple(float(m) for m in self.mean_schedule))
            if self.family not in _SCHEDULABLE:
                raise ValueError(f"family {self.family!r} does not accept a mean schedule")
            if self.mean is not None:
                raise ValueError("give either mean or mean_schedule, not both")
            if len(self.mean_schedule) == 0:
                raise ValueError("mean_schedule must be nonempty")
            locations = self.mean_schedule
        elif self.family in _SCHEDULABLE:
            if self.mean is None:
                raise ValueError(f"family {self.family!r} requires a mean")
            object.__setattr__(self, "mean", float(self.mean))
            locations = (self.mean,)
        else:
            locations = ()

        if any(not math.isfinite(m) or m < 0 for m in locations):
            raise ValueError("means must be finite and nonnegative")
        if self.sigma < 0 or not math.isfinite(self.sigma):
            raise ValueError("sigma must be finite and nonnegative")
        if self.family == "exponential" and any(m <= 0 for m in locations):
            raise ValueError("exponential requires a positive mean")
        if self.family == "bernoulli":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError("bernoulli requires p in [0, 1]")
            if self.value < 0:
                raise ValueError("bernoulli value must be nonnegative")
        if self.family == "bounded_discrete":
            values = tuple(float(v) for v in self.values)
            probs = tuple(float(q) for q in self.probs)
            if not values or len(values) != len(probs):
                raise ValueError("bounded_discrete needs matching nonempty values and probs")
            if any(v < 0 or not math.isfinite(v) for v in values):
                raise ValueError("bounded_discrete values must be finite and nonnegative")
            if any(q < 0 for q in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
                raise ValueError("bounded_discrete probs must be nonnegative and sum to 1")
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "probs", probs)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def deterministic(cls, value: float) -> DistributionSpec:
        return cls("deterministic", mean=value)

    @classmethod
    def bernoulli(cls, p: float, value: float = 1.0) -> DistributionSpec:
        return cls("bernoulli", p=p, value=value)

    @classmethod
    def truncated_normal(
        cls, mean: float | None = None, sigma: float = 1.0, mean_schedule: Sequence[float] | None = None
    ) -> DistributionSpec:
        return cls("truncated_normal", mean=mean, sigma=sigma,
                   mean_schedule=None if mean_schedule is None else tuple(mean_schedule))

    @classmethod
    def poisson(cls, mean: float) -> DistributionSpec:
        return cls("poisson", mean=mean)

    @classmethod
    def exponential(cls, mean: float) -> DistributionSpec:
        return cls("exponential", mean=mean)

    @classmethod
    def bounded_discrete(cls, values: Sequence[float], probs: Sequence[float]) -> DistributionSpec:
        return cls("bounded_discrete", values=tuple(values), probs=tuple(probs))

    # -- summaries ------------------------------------------------------------

    @property
    def cycle_length(self) -> int:
        return 1 if self.mean_schedule is None else len(self.mean_schedule)

    def mean_at(self, t: int) -> float:
        """Location parameter in effect at round ``t``."""
        if self.mean_schedule is not None:
            return self.mean_schedule[t % len(self.mean_schedule)]
        return self.nominal_mean

    @property
    def nominal_mean(self) -> float:
        """Mean used by policies: the location parameter (cycle average if scheduled)."""
        if self.mean_schedule is not None:
            return float(np.mean(self.mean_schedule))
        if self.family == "bernoulli":
            return self.p * self.value
        if self.family == "bounded_discrete":
            return float(np.dot(self.values, self.probs))
        return self.mean

    @property
    def is_integer_valued(self) -> bool:
        if self.family == "poisson":
            return True
        if self.family == "bernoulli":
            return float(self.value).is_integer()
        if self.family == "bounded_discrete":
            return all(float(v).is_integer() for v in self.values)
        if self.family == "deterministic":
            return all(float(m).is_integer() for m in (self.mean_schedule or (self.mean,)))
        return False

    def support(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Atoms and probabilities for finite-support families, else ``None``."""
        if self.family == "deterministic" and self.mean_schedule is None:
            return np.array([self.mean]), np.array([1.0])
        if self.family == "bernoulli":
            atoms = np.array([0.0, self.value])
            probs = np.array([1.0 - self.p, self.p])
            keep = probs > 0
            return atoms[keep], probs[keep]
        if self.family == "bounded_discrete":
            return np.array(self.values), np.array(self.probs)
        if self.family == "truncated_normal" and self.sigma == 0 and self.mean_schedule is None:
            return np.array([self.mean]), np.array([1.0])
        return None

    @property
    def upper_bound(self) -> float:
        atoms = self.support()
        if atoms is not None:
            return float(atoms[0].max())
        if self.family == "deterministic":
            return max(self.mean_schedule)
        return math.inf

    # -- sampling -------------------------------------------------------------

    def sample(self, gen: np.random.Generator, rounds: int | np.ndarray = 0) -> np.ndarray:
        """Draw one value for every entry of ``rounds`` (round indices).

        Draws are consumed from ``gen`` in C order, so drawing a block of
        rounds at once reproduces the same values as drawing them one by one.
        """
        rounds = np.asarray(rounds)
        shape = rounds.shape
        if self.mean_schedule is not None:
            sched = np.asarray(self.mean_schedule)
            loc = sched[rounds % len(sched)]
        else:
            loc = self.mean

        fam = self.family
        if fam == "deterministic":
            return np.broadcast_to(np.asarray(loc, dtype=float), shape).copy()
        if fam == "truncated_normal":
            if self.sigma == 0:
                return np.maximum(np.broadcast_to(np.asarray(loc, dtype=float), shape), 0.0).copy()
            return np.maximum(gen.normal(loc, self.sigma, size=shape), 0.0)
        if fam == "poisson":
            return gen.poisson(loc, size=shape).astype(float)
        if fam == "exponential":
            return gen.exponential(loc, size=shape)
        if fam == "bernoulli":
            return np.where(gen.random(size=shape) < self.p, float(self.value), 0.0)
        # bounded_discrete
        cdf = np.cumsum(self.probs)
        idx = np.searchsorted(cdf, gen.random(size=shape), side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family}
        if self.family == "deterministic":
            if self.mean_schedule is not None:
                out["mean_schedule"] = list(self.mean_schedule)
            else:
                out["value"] = self.mean
        elif self.family == "bernoulli":
            out["p"] = self.p
            if self.value != 1.0:
                out["value"] = self.value
        elif self.family == "bounded_discrete":
            out["values"] = list(self.values)
            out["probs"] = list(self.probs)
        else:
            if self.mean_schedule is not None:
                out["mean_schedule"] = list(self.mean_schedule)
            else:
                out["mean"] = self.mean
            if self.family == "truncated_normal":
                out["sigma"] = self.sigma
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DistributionSpec:
        allowed = {
            "deterministic": {"value", "mean", "mean_schedule"},
            "bernoulli": {"p", "value"},
            "truncated_normal": {"mean", "sigma", "mean_schedule"},
            "poisson": {"mean", "mean_schedule"},
            "exponential": {"mean", "mean_schedule"},
            "bounded_discrete": {"values", "probs"},
        }
        data = dict(data)
        family = data.pop("family", None)
        if family not in allowed:
            raise ValueError(f"unknown or missing distribution family: {family!r}")
        unknown = set(data) - allowed[family]
        if unknown:
            raise ValueError(f"unknown keys for {family}: {sorted(unknown)}")
        if family == "deterministic" and "value" in data:
            data["mean"] = data.pop("value")
        if "mean_schedule" in data:
            data["mean_schedule"] = tuple(data["mean_schedule"])
        for key in ("values", "probs"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(family=family, **data)


@dataclass
class RngStream:
    """Counter-based random stream owned by one replication.

    Each ``(kind, index)`` substream is a Philox generator keyed by
    ``(root_seed, replication_id, kind, index)``; its counter advances with
    every draw.  Streams with the same key replay identically regardless of
    which other streams were created or in what order.
    """

    root_seed: int
    replication_id: int = 0
    _generators: dict[tuple[str, int], np.random.Generator] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def generator(self, kind: str = "supply", index: int = 0) -> np.random.Generator:
        key = (kind, index)
        gen = self._generators.get(key)
        if gen is None:
            seq = np.random.SeedSequence(
                int(self.root_seed) & (2**64 - 1),
                spawn_key=(int(self.replication_id), _STREAM_KINDS[kind], int(index)),
            )
            gen = np.random.Generator(np.random.Philox(seq))
            self._generators[key] = gen
        return gen


def sample_supply(spec: DistributionSpec, rng: RngStream, t: int, index: int = 0) -> float:
    """One budget draw for round ``t`` (resource ``index`` in multi-resource runs)."""
    return float(spec.sample(rng.generator("supply", index), t))


def sample_demand(spec: DistributionSpec, rng: RngStream, t: int, index: int = 0) -> float:
    """One agent-count draw for round ``t`` (agent type ``index``)."""
    return float(spec.sample(rng.generator("demand", index), t))


def cycle_reference(supply_schedule: Sequence[float], demand_schedule: Sequence[float]) -> float:
    """Cumulative supply over cumulative demand across one cycle."""
    if len(supply_schedule) == 0 or len(demand_schedule) == 0:
        raise ValueError("schedules must be nonempty")
    if len(supply_schedule) != len(demand_schedule):
        raise ValueError("supply and demand schedules must share a cycle length")
    total_demand = math.fsum(demand_schedule)
    if total_demand <= 0:
        raise ValueError("cumulative demand over the cycle must be positive")
    return math.fsum(supply_schedule) / total_demand
