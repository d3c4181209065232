"""Exact oracles and Monte Carlo estimators used to cross-check simulations."""

from .binomial import (
    EpochBound,
    TailBound,
    binomial_tail_bound,
    epoch_lower_bound,
    fair_binomial_tail,
)
from .birth_death import (
    BirthDeathChain,
    birth_death_stationary_closed_form,
    birth_death_stationary_solve,
)
from .conditions import (
    FeasibilityReport,
    MgfCheck,
    check_delta_feasible,
    drift_moments,
    expected_positive_part,
    moments,
    sufficient_delta_bound,
    supermartingale_mgf_check,
)
from .hitting import (
    ExitEstimate,
    HittingBudgetExceeded,
    HittingStats,
    crossing_probability,
    estimate_hitting,
    estimate_hitting_stats,
    exit_walks,
    renewal_identity,
    renewal_identity_se,
)
