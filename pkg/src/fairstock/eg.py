"""Fluid Eisenberg-Gale allocation for several agent types and resources.

Types ``theta`` arrive at mean rate ``mu_N[theta]`` and value a bundle
``a`` at ``w_theta . a``; resource ``k`` arrives at mean rate ``mu_B[k]``.
The fluid allocation maximizes ``sum_theta mu_N[theta] log(w_theta . a_theta)``
subject to ``sum_theta mu_N[theta] a_theta <= mu_B``, ``a >= 0``.  This is a
linear Fisher market with budgets ``mu_N`` and supplies ``mu_B``; we solve
it by proportional response and certify the answer through its KKT
conditions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np


class EgConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EgInstance:
    weights: np.ndarray
    type_means: np.ndarray
    supply_means: np.ndarray
    type_names: tuple[str, ...] | None = None
    resource_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        mu_n = np.atleast_1d(np.asarray(self.type_means, dtype=float))
        mu_b = np.atleast_1d(np.asarray(self.supply_means, dtype=float))
        if w.shape != (mu_n.shape[0], mu_b.shape[0]):
            raise ValueError(f"weights shape {w.shape} does not match ({mu_n.shape[0]}, {mu_b.shape[0]})")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and strictly positive")
        if np.any(mu_n <= 0) or np.any(mu_b <= 0):
            raise ValueError("type and supply means must be strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "type_means", mu_n)
        object.__setattr__(self, "supply_means", mu_b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def objective(self, allocations: np.ndarray) -> float:
        u = np.einsum("tk,tk->t", self.weights, np.asarray(allocations, dtype=float))
        with np.errstate(divide="ignore"):
            return float(np.dot(self.type_means, np.log(u)))

    def to_dict(self) -> dict[str, Any]:
        out = {
            "weights": self.weights.tolist(),
            "type_means": self.type_means.tolist(),
            "supply_means": self.supply_means.tolist(),
        }
        if self.type_names is not None:
            out["type_names"] = list(self.type_names)
        if self.resource_names is not None:
            out["resource_names"] = list(self.resource_names)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EgInstance:
        allowed = {"weights", "type_means", "supply_means", "type_names", "resource_names", "sigma"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown EG instance keys: {sorted(unknown)}")
        names = data.get("type_names")
        res = data.get("resource_names")
        return cls(
            np.asarray(data["weights"], dtype=float),
            np.asarray(data["type_means"], dtype=float),
            np.asarray(data["supply_means"], dtype=float),
            tuple(names) if names is not None else None,
            tuple(res) if res is not None else None,
        )


@dataclass(frozen=True)
class EgSolution:
    allocations: np.ndarray
    dual_prices: np.ndarray
    kkt_residual: float
    iterations: int = 0


@dataclass(frozen=True)
class KktReport:
    """Largest violation of each optimality condition.

    ``stationarity`` is ``max a_{theta,k} |p_k - w_{theta,k} / u_theta|``;
    since ``sum_k a_{theta,k} w_{theta,k} / u_theta = 1`` every term is on a
    budget-share scale.
    """

    primal: float
    dual: float
    stationarity: float
    complementarity: float

    @property
    def residual(self) -> float:
        return max(self.primal, self.dual, self.stationarity, self.complementarity)


def check_kkt(instance: EgInstance, solution: EgSolution | np.ndarray, prices: np.ndarray | None = None) -> KktReport:
    """Optimality certificate for a candidate allocation.

    Prices default to the solution's duals; for a bare allocation they are
    the smallest prices making every marginal-utility ratio dual feasible,
    ``p_k = max_theta w_{theta,k} / u_theta``.
    """
    if isinstance(solution, EgSolution):
        a = np.asarray(solution.allocations, dtype=float)
        if prices is None:
            prices = solution.dual_prices
    else:
        a = np.asarray(solution, dtype=float)
    if a.shape != instance.shape:
        raise ValueError(f"allocation shape {a.shape} does not match instance {instance.shape}")
    w, mu_n, mu_b = instance.weights, instance.type_means, instance.supply_means
    u = np.einsum("tk,tk->t", w, a)
    if np.any(u <= 0):
        return KktReport(np.inf, np.inf, np.inf, np.inf)
    ratio = w / u[:, None]
    p = ratio.max(axis=0) if prices is None else np.asarray(prices, dtype=float)
    used = mu_n @ a
    primal = max(float(np.max(used - mu_b)), float(np.max(-a)), 0.0)
    dual = max(float(np.max(ratio - p)), float(np.max(-p)), 0.0)
    stationarity = float(np.max(np.clip(a, 0, None) * np.abs(p - ratio)))
    complementarity = float(np.max(np.abs(p * (mu_b - used)) / mu_n.sum()))
    return KktReport(primal, dual, stationarity, complementarity)


def solve_fluid_eg(
    instance: EgInstance, tolerance: float = 1e-8, max_iter: int = 1_000_000, check_every: int = 20
) -> EgSolution:
    """Proportional-response dynamics until the KKT residual drops below ``tolerance``.

    Each type splits its budget ``mu_N[theta]`` into bids on resources;
    resources are shared in proportion to bids; each type then rebids in
    proportion to the utility each resource delivered.  Bids start
    proportional to ``w_{theta,k} mu_B[k]``.
    """
    w, mu_n, mu_b = instance.weights, instance.type_means, instance.supply_means
    value = w * mu_b
    bids = mu_n[:, None] * value / value.sum(axis=1, keepdims=True)
    for it in range(1, max_iter + 1):
        price = bids.sum(axis=0)
        x = bids / price * mu_b
        util = np.einsum("tk,tk->t", w, x)
        bids = mu_n[:, None] * w * x / util[:, None]
        if it % check_every == 0 or it == max_iter:
            sol = _package(instance, bids, it)
            if sol.kkt_residual <= tolerance:
                return sol
    raise EgConvergenceError(f"KKT residual {sol.kkt_residual:.3g} above {tolerance} after {max_iter} iterations")


def _package(instance: EgInstance, bids: np.ndarray, it: int) -> EgSolution:
    mu_b, mu_n = instance.supply_means, instance.type_means
    spend = bids.sum(axis=0)
    a = bids / spend * mu_b / mu_n[:, None]
    prices = spend / mu_b
    report = check_kkt(instance, a, prices)
    return EgSolution(a, prices, report.residual, it)


def brute_force_two_types(instance: EgInstance, step: float = 1e-3) -> np.ndarray:
    """Grid search over budget-exhausting splits for two types and two resources."""
    if instance.shape != (2, 2):
        raise ValueError("brute force supports exactly two types and two resources")
    mu_n, mu_b = instance.type_means, instance.supply_means
    frac = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    f1, f2 = np.meshgrid(frac, frac, indexing="ij")  # type-1 share of each resource
    a1 = np.stack([f1 * mu_b[0], f2 * mu_b[1]], axis=-1) / mu_n[0]
    a2 = np.stack([(1 - f1) * mu_b[0], (1 - f2) * mu_b[1]], axis=-1) / mu_n[1]
    u1 = a1 @ instance.weights[0]
    u2 = a2 @ instance.weights[1]
    with np.errstate(divide="ignore"):
        obj = mu_n[0] * np.log(u1) + mu_n[1] * np.log(u2)
    i, j = np.unravel_index(np.argmax(obj), obj.shape)
    return np.array([a1[i, j], a2[i, j]])


def load_food_bank() -> tuple[EgInstance, float]:
    """Bundled five-resource, three-type instance and its supply noise scale."""
    text = resources.files("fairstock").joinpath("data/food_bank.json").read_text()
    data = json.loads(text)
    sigma = float(data.get("sigma", 1.0))
    return EgInstance.from_dict(data), sigma


def eg_instance_from_config(data: Mapping[str, Any]) -> EgInstance:
    if data.get("fixture") == "food_bank":
        return load_food_bank()[0]
    return EgInstance.from_dict(data)
