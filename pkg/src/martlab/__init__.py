"""martlab: exact-arithmetic laboratory for integer martingales whose marginal
laws agree while their convergence behavior differs."""

from .exactprob import (
    HORIZON_CAP,
    Dist,
    abs_moment,
    dist_mean,
    point_mass,
    tv_distance,
    ui_tail,
    uniform_pm1,
)
from .kernels import (
    Kernel,
    alternating_kernel,
    holding_kernel,
    load_kernel_spec,
    pn_qn,
    ssrw_kernel,
    verify_martingale,
)
from .marginals import MarginalFlow, compare_flows, enumerate_paths_oracle, forward_marginals
from .excursion import (
    CouplingStrategy,
    ProbSeq,
    excursion_marginal,
    expected_event_count,
    joint_zero_count,
    nested_tail_check,
    sample_excursion_path,
)
from .delayedwalk import (
    CrossingLawDP,
    Schedule,
    build_schedule,
    crossing_law,
    occupancy_check,
    quantile,
    sample_delayed_path,
)
from .montecarlo import (
    McReport,
    SeedPlan,
    absorption_fraction,
    alternation_rate,
    empirical_marginal,
    run_paths,
)

__version__ = "0.1.0"

__all__ = [
    "HORIZON_CAP",
    "Dist",
    "abs_moment",
    "dist_mean",
    "point_mass",
    "tv_distance",
    "ui_tail",
    "uniform_pm1",
    "Kernel",
    "alternating_kernel",
    "holding_kernel",
    "load_kernel_spec",
    "pn_qn",
    "ssrw_kernel",
    "verify_martingale",
    "MarginalFlow",
    "compare_flows",
    "enumerate_paths_oracle",
    "forward_marginals",
    "CouplingStrategy",
    "ProbSeq",
    "excursion_marginal",
    "expected_event_count",
    "joint_zero_count",
    "nested_tail_check",
    "sample_excursion_path",
    "CrossingLawDP",
    "Schedule",
    "build_schedule",
    "crossing_law",
    "occupancy_check",
    "quantile",
    "sample_delayed_path",
    "McReport",
    "SeedPlan",
    "absorption_fraction",
    "alternation_rate",
    "empirical_marginal",
    "run_paths",
    "__version__",
]
