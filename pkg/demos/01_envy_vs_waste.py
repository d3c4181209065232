"""How much inefficiency does a little envy buy?

A store holds at most M units.  Each round a random budget B arrives and
N agents each take the same allocation.  Below we compare three rules on
the same random draws:

* proportional: always hand out mean(B) / mean(N), so zero envy
* static: a fixed allocation that is slightly off the mean
* bang-bang: mean(B) / mean(N) -/+ delta/2 depending on whether the store
  is below or above half full, so envy is exactly delta
"""

from fairstock.env import DistributionSpec
from fairstock.harness import ExperimentConfig, fit_scaling, run_sweep
from fairstock.policies import PolicySpec

env = DistributionSpec.truncated_normal(5, 1)
M_grid = (10.0, 20.0, 40.0, 80.0)


def sweep(policy, deltas=(0.0,)):
    cfg = ExperimentConfig(env, env, policy, M_grid, deltas, T=5000, replications=30, root_seed=1)
    return run_sweep(cfg)


prop = sweep(PolicySpec("proportional"))
biased = sweep(PolicySpec("static", alpha=1.2))
bb = sweep(PolicySpec("bang_bang"), deltas=(0.3,))

print(f"{'M':>5} {'proportional':>14} {'static 1.2':>12} {'bang-bang .3':>14}")
for M in M_grid:
    print(f"{M:5.0f} {prop.row(M, 0).delta_eff_mean:14.4f} "
          f"{biased.row(M, 0).delta_eff_mean:12.4f} {bb.row(M, 0.3).delta_eff_mean:14.2e}")

# the zero-envy rule improves like 1/M ...
fit = fit_scaling(prop.select(0.0), transform="loglog")
print(f"\nproportional: log-log slope {fit.slope:.2f}")

# ... a biased static rule does not improve at all, and bang-bang decays
# exponentially in M while paying only delta in envy
print("static 1.2 envy:", biased.row(80.0, 0).delta_fair_mean)
print("bang-bang envy:", bb.row(80.0, 0.3).delta_fair_mean)
