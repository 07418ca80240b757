"""One-pass streaming and online algorithms for constrained k-submodular maximization."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    Allocation,
    Budgets,
    KSubError,
    PreconditionError,
    apply_add,
    apply_swap,
    lattice_join,
    lattice_meet,
    support,
)
from .objectives import (  # noqa: E402
    AdWelfareOracle,
    MaxKCutOracle,
    ModularOracle,
    OracleHandle,
    PartitionWrapperOracle,
    check_k_submodular,
    evaluate,
    marginal,
)
from .schedules import CoefficientSchedule, KnapsackSchedule, knapsack_params  # noqa: E402
from .algorithms import (  # noqa: E402
    RunTrace,
    StreamResult,
    offline_greedy_general,
    offline_greedy_monotone,
    run_common_cardinality,
    run_knapsack_monotone,
    run_monotone_ksub,
    run_nonmon_anybudget,
    run_nonmon_ksub,
    run_partition_monotone,
    run_partition_nonmon,
)
from .verify import audit_trace, brute_force_opt, check_guarantee  # noqa: E402
