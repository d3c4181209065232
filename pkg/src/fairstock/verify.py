"""Fast self-check suite comparing the library against exact oracles."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .analysis import (
    BirthDeathChain,
    binomial_tail_bound,
    birth_death_stationary_closed_form,
    birth_death_stationary_solve,
    check_delta_feasible,
    epoch_lower_bound,
    estimate_hitting,
    estimate_hitting_stats,
    renewal_identity,
    renewal_identity_se,
    supermartingale_mgf_check,
)
from .eg import EgInstance, brute_force_two_types, check_kkt, solve_fluid_eg
from .engine import Lanes, simulate
from .env import DistributionSpec
from .policies import PolicySpec


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def __post_init__(self) -> None:
        self.passed = bool(self.passed)
        self.residual = float(self.residual)


def _exact_tail(L: int, k: int) -> Fraction:
    return Fraction(sum(math.comb(L, j) for j in range(k, L + 1)), 2**L)


def check_birth_death() -> CheckResult:
    worst = 0.0
    for p in (0.1, 0.25, 0.4):
        for d in (0.0, 0.05, 0.1):
            for M in (4, 10, 50):
                closed = birth_death_stationary_closed_form(p, d, M)
                solved = birth_death_stationary_solve(BirthDeathChain(M, p, d))
                worst = max(worst, float(np.max(np.abs(closed - solved))))
    return CheckResult("birth_death_closed_vs_solve", worst <= 1e-10, worst, 1e-10)


def check_binomial_scan() -> CheckResult:
    failures = 0
    margin = math.inf
    for L in range(8, 201, 2):
        for t in range(1, L // 8 + 1):
            res = binomial_tail_bound(L, t)
            failures += not res.holds
            margin = min(margin, res.log_tail - math.log(res.bound))
    return CheckResult("binomial_tail_bound_scan", failures == 0, float(failures), 0.0,
                       f"smallest log margin {margin:.4f}")


def check_epoch_bound() -> CheckResult:
    c1 = epoch_lower_bound(0.2, 0.1, 10)
    c2 = epoch_lower_bound(0.6, 0.1, 10)
    c3 = epoch_lower_bound(0.5, 1 / 9, 9)
    exact = float(_exact_tail(c3.L_used, c3.L_used // 2 + c3.t))
    rel = abs(c3.V_lb - exact) / exact
    ok = (c1.case, c1.W_lb, c1.L_used) == (1, 0.5, 55) and (c2.case, c2.V_lb) == (2, 0.5) \
        and (c3.case, c3.L_used, c3.t) == (3, 648, 73) and c3.V_lb > 0 and rel == 0.0
    return CheckResult("epoch_lower_bound_cases", ok, rel, 0.0, f"case-3 tail {c3.V_lb:.6e}")


def check_renewal_formula() -> CheckResult:
    h_m, h_0 = renewal_identity(10, 8, 0.9, 0.9)
    err = max(abs(h_m - 1 / 18), abs(h_0 - 1 / 18))
    return CheckResult("renewal_identity_formula", err <= 1e-15, err, 1e-15)


def check_feasibility() -> CheckResult:
    sup = DistributionSpec.bounded_discrete([0, 10], [0.5, 0.5])
    dem = DistributionSpec.deterministic(5)
    rep = check_delta_feasible(sup, dem, 0.2)
    err = abs(rep.epsilon - 4.5) + abs(rep.delta_prob - 0.5)
    det = check_delta_feasible(DistributionSpec.deterministic(5), dem, 0.2)
    return CheckResult("drift_condition_two_point", rep.feasible and not det.feasible and err < 1e-12, err, 1e-12)


def check_mgf() -> CheckResult:
    sup = DistributionSpec.bounded_discrete([0, 2], [0.5, 0.5])
    dem = DistributionSpec.deterministic(1)
    res = supermartingale_mgf_check(sup, dem, 0.2, 1.0)
    expected = (math.exp(0.16) + math.exp(-0.24)) / 2
    err = abs(res.value - expected)
    return CheckResult("supermartingale_mgf_two_point", res.holds and err < 1e-15, err, 1e-15)


def check_eg() -> CheckResult:
    sym = EgInstance([[1.0, 2.0, 3.0]] * 3, [1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
    sol = solve_fluid_eg(sym)
    target = np.tile(sym.supply_means / sym.type_means.sum(), (3, 1))
    err_sym = float(np.max(np.abs(sol.allocations - target)))
    disjoint = EgInstance([[1.0, 0.01], [0.01, 1.0]], [1.0, 1.0], [1.0, 1.0])
    grid = brute_force_two_types(disjoint)
    err_bf = float(np.max(np.abs(solve_fluid_eg(disjoint).allocations - grid)))
    ok = sol.kkt_residual <= 1e-8 and err_sym <= 1e-8 and err_bf <= 1e-3 \
        and check_kkt(disjoint, grid).residual <= 1e-3
    return CheckResult("eg_solver", ok, max(sol.kkt_residual, err_sym, err_bf), 1e-3)


def check_gamblers_ruin(seed: int) -> CheckResult:
    sup = DistributionSpec.bounded_discrete([0, 2], [0.5, 0.5])
    dem = DistributionSpec.deterministic(1)
    pol = PolicySpec("proportional", supply_mean=1.0, demand_mean=1.0)
    est = estimate_hitting(pol, sup, dem, 10, 5, 20_000, seed)
    z = abs(est.mean_time - 25) / est.se_time
    return CheckResult("unit_walk_exit_time", z <= 3, z, 3.0, f"E[tau]={est.mean_time:.3f}+-{est.se_time:.3f}")


def check_renewal_vs_direct(seed: int) -> CheckResult:
    sup = DistributionSpec.truncated_normal(5, 1)
    dem = DistributionSpec.truncated_normal(5, 1)
    pol = PolicySpec("proportional", supply_mean=5.0, demand_mean=5.0)
    M = 20.0
    stats = estimate_hitting_stats(pol, sup, dem, M, 20_000, seed)
    h_m, h_0 = renewal_identity(stats.E_M, stats.E_0, stats.p_M, stats.p_0)
    se_m, se_0 = renewal_identity_se(stats)
    reps = 20
    lanes = Lanes(np.full(reps, M), 1.0, 1.0, M / 2, np.arange(reps))
    res = simulate(lanes, sup, dem, 50_000, seed, list(range(reps)))
    direct_m = res.upper / res.T
    direct_0 = res.lower / res.T
    zs = []
    for h, se, d in ((h_m, se_m, direct_m), (h_0, se_0, direct_0)):
        zs.append(abs(h - d.mean()) / math.hypot(se, d.std(ddof=1) / math.sqrt(reps)))
    z = max(zs)
    return CheckResult("renewal_identity_vs_direct", z <= 3, z, 3.0,
                       f"H_M renewal {h_m:.5f} direct {direct_m.mean():.5f}")


def run_suite(seed: int = 0) -> list[CheckResult]:
    checks: list[Callable[[], CheckResult]] = [
        check_birth_death,
        check_binomial_scan,
        check_epoch_bound,
        check_renewal_formula,
        check_feasibility,
        check_mgf,
        check_eg,
        lambda: check_gamblers_ruin(seed),
        lambda: check_renewal_vs_direct(seed),
    ]
    out = []
    for fn in checks:
        t0 = time.perf_counter()
        res = fn()
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out


def report(results: list[CheckResult]) -> dict:
    return {
        "passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
