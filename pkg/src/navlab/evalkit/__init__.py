"""Evaluation metrics, failure taxonomy, reports and plots."""
from .metrics import FailureCategory, classify_failure, episode_success, spl, spl_term
from .plot import render_topdown
from .report import (
    REPORT_SCHEMA_VERSION,
    Agent,
    AlwaysStopAgent,
    EpisodeRow,
    EvalReport,
    OracleEvalAgent,
    PolicyAgent,
    RandomAgent,
    evaluate,
)
