"""Network reconstruction by ridge entropy maximization, with a validation suite."""

__version__ = "0.1.0"

from .model import (
    BANK_DEFAULT_RULES,
    Category,
    CategoryRuleSet,
    FlowMatrix,
    GroupConstraint,
    Marginals,
    NodeInfo,
    ReconstructionProblem,
    SlackPolicy,
    add_slack_node,
    assemble_category_rules,
)
from .solver import (
    InfeasibleProblemError,
    SolutionReport,
    SolverConfig,
    kkt_residual,
    maxent_baseline,
    oracle_grid_search,
    solve_ridge,
)
from .metrics import (
    BinaryNetwork,
    MetricsReport,
    avg_shortest_path,
    clustering_transitivity,
    degree_assortativity,
    degree_ccdf,
    degree_preserved_randomize,
    density,
    detect_communities,
    metrics_report,
    pagerank,
    truncate_percentile,
    truncate_relative,
    truncate_to_density,
)
from .data import (
    BalanceSheetRecord,
    DataError,
    TradeDataset,
    TradeVariant,
    build_bank_problem,
    build_trade_problem,
    load_balance_sheets,
    load_trade_matrix,
    make_q2_cut,
    synthetic_trade_matrix,
)
from .evaluation import (
    DEFAULT_BETA_GRID,
    FitReport,
    beta_sweep,
    fit_report,
    loglog_fit,
    marginal_report,
    rmse,
)
from .estimators import PercentileTruncator, RidgeEntropyReconstructor

__all__ = [name for name in dir() if not name.startswith("_")]
