"""Security chaos experiments against a simulated breach-and-attack C2.

The package ships four layers: a TTP catalog and scenario model, a
deterministic C2 engine behind a small HTTP API, a client for that API, and
an orchestrator that designs and runs falsifiable security experiments over
attack trees, writing reproducible reports.
"""

from .attack_tree import AttackTree, Branch, Node, export_tree, generate_attack_tree, select_branch
from .bas_core import BasServer, ClockMode, ServerConfig, start_server
from .connector import BasClient, ClockDriver, PollPolicy
from .errors import ChaosBasError, ValidationError
from .orchestrator import (
    AbortCause,
    BranchOutcome,
    BranchStatus,
    ExperimentInputs,
    ExperimentReport,
    Hypothesis,
    RunConfig,
    Verdict,
    design_experiment,
    evaluate_hypothesis,
    execute_branch,
    run_experiment,
)
from .report import generate_report, write_report_bundle
from .scenario import Scenario, load_scenario
from .ttp_catalog import Catalog, Platform, Tactic, load_catalog

__version__ = "0.1.0"

__all__ = [
    "AbortCause",
    "AttackTree",
    "BasClient",
    "BasServer",
    "Branch",
    "BranchOutcome",
    "BranchStatus",
    "Catalog",
    "ChaosBasError",
    "ClockDriver",
    "ClockMode",
    "ExperimentInputs",
    "ExperimentReport",
    "Hypothesis",
    "Node",
    "Platform",
    "PollPolicy",
    "RunConfig",
    "Scenario",
    "ServerConfig",
    "Tactic",
    "ValidationError",
    "Verdict",
    "design_experiment",
    "evaluate_hypothesis",
    "execute_branch",
    "export_tree",
    "generate_attack_tree",
    "generate_report",
    "load_catalog",
    "load_scenario",
    "run_experiment",
    "select_branch",
    "start_server",
    "write_report_bundle",
]
