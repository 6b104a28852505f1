"""Symbolic binary classifiers: an RNN-guided search over closed-form
expressions with a GP inner loop, sigmoid/threshold head, class-imbalance
robust rewards and rule extraction."""

from .classify import Confusion, Metrics, confusion, metrics, predict, reward_ce, reward_f1, sigmoid
from .constopt import ConstFitReport, fit_constants, optimize_constants
from .data import Dataset, generate_synthetic, ingest, load_csv, undersample
from .expr import (
    ExprTree,
    Library,
    Token,
    complexity,
    deserialize,
    evaluate_batch,
    parse_prefix,
    render_infix,
    serialize,
    to_prefix,
    token_complexity,
)
from .featurespec import FeatureSpec, SignFact
from .gp import Candidate, GpConfig, crossover, evolve, mutate, tournament_select
from .grammar import GrammarConfig
from .pareto import ParetoPoint, elbow, pareto_front
from .policy import PolicyNet, grad_log_prob, log_prob, policy_step, sample_batch
from .rules import RuleCase, RuleSet, extract_rules, invert_threshold
from .trainer import TrainConfig, TrainResult, epsilon_quantile, risk_gradient, train

__version__ = "0.1.0"
