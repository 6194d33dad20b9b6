"""Config-driven experiment suites, post-solve audits and the CLI."""

from .audits import AuditBundle, barrier_audit, g_diagnostics
from .config import ExperimentConfig, load_config, parse_config, resolve_field
from .runner import RunOutcome, run_audit, run_config

__all__ = ["AuditBundle", "barrier_audit", "g_diagnostics", "ExperimentConfig", "load_config",
           "parse_config", "resolve_field", "RunOutcome", "run_audit", "run_config"]
