"""Fair quota allocation for soft load shedding."""

from softshed.allocators import (
    SolverConfig,
    alpha_fair,
    alpha_zero_allocate,
    equitable,
    kkt_verify,
    max_min_fair,
    percentage_equitable,
)
from softshed.metrics import (
    Level,
    SatisfactionConfig,
    TariffSchedule,
    alpha_fairness_check,
    household_revenue,
    level_distribution,
    percentile_threshold,
    satisfaction_level,
    satisfaction_report,
    satisfaction_utility,
    total_revenue,
)
from softshed.model import (
    AllocationResult,
    ConvergenceError,
    DemandProfile,
    DomainError,
    Method,
    SupplySpec,
    marginal_utility,
    utility_value,
    welfare,
)

__version__ = "0.1.0"
