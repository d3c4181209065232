"""Long-run time at the boundaries from short exit experiments.

Waste only happens at a full store and stockouts only at an empty one, so
the fraction of rounds spent at each boundary controls inefficiency.  That
fraction can be simulated directly, or recovered from how long a walk
started at a boundary takes to leave the interval and where it leaves.
"""

import numpy as np

from fairstock.analysis import estimate_hitting_stats, renewal_identity, renewal_identity_se
from fairstock.env import DistributionSpec
from fairstock.harness import ExperimentConfig, run_sweep
from fairstock.policies import PolicySpec

env = DistributionSpec.truncated_normal(5, 1)
M = 20.0
pol = PolicySpec("proportional").bind(supply_mean=5.0, demand_mean=5.0)

stats = estimate_hitting_stats(pol, env, env, M, replications=20_000, root_seed=3)
print(f"from full:  mean exit {stats.E_M:.1f} rounds, P(back to full) = {stats.p_M:.3f}")
print(f"from empty: mean exit {stats.E_0:.1f} rounds, P(back to empty) = {stats.p_0:.3f}")

h_m, h_0 = renewal_identity(stats.E_M, stats.E_0, stats.p_M, stats.p_0)
se_m, se_0 = renewal_identity_se(stats)

runs = run_sweep(ExperimentConfig(env, env, pol, (M,), (0.0,), T=50_000, replications=20, root_seed=3)).runs[(M, 0.0)]
direct_m = np.array([r.h_m for r in runs])
direct_0 = np.array([r.h_0 for r in runs])

print(f"\nH_M  exits {h_m:.4f} +- {se_m:.4f}   direct {direct_m.mean():.4f} +- {direct_m.std(ddof=1) / np.sqrt(20):.4f}")
print(f"H_0  exits {h_0:.4f} +- {se_0:.4f}   direct {direct_0.mean():.4f} +- {direct_0.std(ddof=1) / np.sqrt(20):.4f}")
