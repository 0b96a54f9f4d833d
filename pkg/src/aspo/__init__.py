"""Runtime orchestration of security patterns on edge gateways."""
from .catalog import Catalog, CatalogError, CostVector, SecurityPattern, load_catalog
from .context import EncoderConfig, StructuredContext, TelemetryVector, encode_context, perturb_context
from .optimizer import Portfolio, ScoringWeights, activation_order, portfolio_score, select_portfolio
from .agents import FaultInjectionBackend, MockBackend, RemoteBackend, make_backend
from .gate import GateVerdict, failsafe_portfolio, validate_plan
from .engine import DecisionTrace, EngineConfig, run_epoch, run_replay
from .stats import (
    compare_rare_events, exact_binomial_ci, fisher_exact_two_sided, ks_distance, percentiles,
    risk_and_odds_ratio, spearman_rank, summarize_run,
)

__version__ = "0.1.0"
