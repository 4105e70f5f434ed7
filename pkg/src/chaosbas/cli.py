"""Command line front end: serve the engine, print trees, run experiments.

Exit codes: 0 when the hypothesis held (or for serve/tree), 2 when it was
refuted, 1 for infrastructure trouble, 64 for usage errors.
"""

import argparse
import logging
import os
import sys
import time

from .attack_tree import export_tree, generate_attack_tree
from .bas_core import ClockMode, ServerConfig, start_server
from .data import resolve_input_path
from .errors import ChaosBasError, UnknownBranch, ValidationError
from .orchestrator import ExperimentInputs, RunConfig, run_experiment
from .report import write_report_bundle
from .scenario import load_scenario
from .ttp_catalog import Platform, Tactic, load_catalog

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INFRASTRUCTURE = 1
EXIT_REFUTED = 2
EXIT_USAGE = 64

DEFAULT_CATALOG = "catalog/worms.json"
DEFAULT_SCENARIO = "scenarios/figure3.json"


class _Parser(argparse.ArgumentParser):
    """argparse, but usage mistakes exit with the documented code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env(name: str, fallback: str) -> str:
    return os.environ.get(f"CHAOSBAS_{name}", fallback)


def _parse_objective(text: str) -> Tactic:
    normalized = text.strip().lower().replace("-", "_")
    try:
        return Tactic(normalized)
    except ValueError:
        choices = ", ".join(t.value for t in Tactic)
        raise ValidationError("objective", f"unknown objective {text!r}; choose from: {choices}")


def _parse_platform(text: str) -> Platform:
    try:
        return Platform(text.strip().lower())
    except ValueError:
        choices = ", ".join(p.value for p in Platform)
        raise ValidationError("platform", f"unknown platform {text!r}; choose from: {choices}")


def _parse_clock(text: str) -> ClockMode:
    normalized = text.strip().lower().replace("-", "_")
    try:
        return ClockMode(normalized)
    except ValueError:
        raise ValidationError("clock", f"unknown clock mode {text!r}; choose virtual or real_time")


def build_parser() -> _Parser:
    parser = _Parser(prog="chaosbas", description="Security chaos experiments against a simulated C2.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    serve = sub.add_parser("serve", parents=[], help="run the C2 engine as an HTTP service")
    serve.add_argument("--catalog", default=_env("CATALOG", DEFAULT_CATALOG))
    serve.add_argument("--scenario", default=_env("SCENARIO", DEFAULT_SCENARIO))
    serve.add_argument("--port", type=int, default=int(_env("PORT", "8418")))
    serve.add_argument("--clock", default="virtual", help="virtual or real-time")
    serve.add_argument(
        "--realtime-factor", type=float, default=1.0,
        help="virtual seconds per wall second in real-time mode",
    )

    tree = sub.add_parser("tree", help="print the attack tree for an objective")
    tree.add_argument("--catalog", default=_env("CATALOG", DEFAULT_CATALOG))
    tree.add_argument("-o", "--objective", required=True)
    tree.add_argument("--platform", default="windows")
    tree.add_argument("--format", default="json", choices=["json", "dot"])

    run = sub.add_parser("run", help="run a full experiment and write the report bundle")
    run.add_argument("--catalog", default=_env("CATALOG", DEFAULT_CATALOG))
    run.add_argument("--scenario", default=_env("SCENARIO", DEFAULT_SCENARIO))
    run.add_argument("-t", "--target", required=True)
    run.add_argument("-a", "--agent", default=_env("AGENT", "sandcat_A"))
    run.add_argument("-n", "--parallelism", type=int, default=1)
    run.add_argument("-o", "--objective", default="lateral_movement")
    run.add_argument("--branch", default=None, help="run a single branch by profile id or index")
    run.add_argument(
        "--bas-endpoint", default=os.environ.get("CHAOSBAS_ENDPOINT"),
        help="an already-running engine; omitted means an embedded one",
    )
    run.add_argument("--out", default=_env("OUT", "report"), help="report bundle directory")
    run.add_argument("--no-figures", action="store_true")
    run.add_argument("--seed", type=int, default=int(_env("SEED", "0")))
    run.add_argument("--poll-interval", type=int, default=5)
    run.add_argument("--poll-timeout", type=int, default=300)
    run.add_argument("--clock", default="virtual", help="virtual or real-time (embedded engine only)")
    run.add_argument("--realtime-factor", type=float, default=1.0)
    return parser


def cmd_serve(args, stop_after: float | None = None) -> int:
    try:
        catalog = load_catalog(resolve_input_path(args.catalog))
        scenario = load_scenario(resolve_input_path(args.scenario))
        clock = _parse_clock(args.clock)
    except ValidationError as exc:
        print(f"chaosbas serve: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ChaosBasError) as exc:
        print(f"chaosbas serve: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    config = ServerConfig(port=args.port, clock_mode=clock, realtime_factor=args.realtime_factor)
    try:
        server = start_server(scenario, catalog, config)
    except ChaosBasError as exc:
        print(f"chaosbas serve: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    print(f"engine listening on {server.url}")
    print(f"scenario: {scenario.source_path}  catalog: {catalog.source_path}")
    print(f"clock: {clock.value}  seed agent: {config.seed_paw}")
    try:
        if stop_after is not None:
            time.sleep(stop_after)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def cmd_tree(args) -> int:
    try:
        objective = _parse_objective(args.objective)
        platform = _parse_platform(args.platform)
        catalog = load_catalog(resolve_input_path(args.catalog))
    except ValidationError as exc:
        print(f"chaosbas tree: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ChaosBasError) as exc:
        print(f"chaosbas tree: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE
    tree = generate_attack_tree(catalog, objective, platform)
    if tree.is_empty:
        print(
            f"no profiles cover objective {objective.value!r} on {platform.value}",
            file=sys.stderr,
        )
    print(export_tree(tree, args.format))
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        objective = _parse_objective(args.objective)
        clock = _parse_clock(args.clock)
    except ValidationError as exc:
        print(f"chaosbas run: {exc}", file=sys.stderr)
        return EXIT_USAGE
    inputs = ExperimentInputs(
        target=args.target,
        agent=args.agent,
        parallelism=args.parallelism,
        objective=objective,
    )
    branch = args.branch
    if branch is not None and branch.lstrip("-").isdigit():
        branch = int(branch)
    config = RunConfig(
        catalog_path=resolve_input_path(args.catalog),
        scenario_path=resolve_input_path(args.scenario),
        endpoint=args.bas_endpoint,
        seed=args.seed,
        poll_interval=args.poll_interval,
        poll_timeout=args.poll_timeout,
        clock_mode=clock,
        realtime_factor=args.realtime_factor,
        branch_filter=branch,
        render_figures=not args.no_figures,
    )
    try:
        report = run_experiment(inputs, config)
    except (ValidationError, UnknownBranch) as exc:
        print(f"chaosbas run: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ChaosBasError) as exc:
        print(f"chaosbas run: {exc}", file=sys.stderr)
        return EXIT_INFRASTRUCTURE

    written = write_report_bundle(report, args.out, figures=config.render_figures)
    print(f"verdict: hypothesis {report.hypothesis.verdict.value}")
    for outcome in report.outcomes:
        line = f"  {outcome.profile_id}: {outcome.status.value}"
        if outcome.abort_cause is not None:
            line += f" ({outcome.abort_cause.value})"
        if outcome.spawned_agent:
            line += f" implant {outcome.spawned_agent}"
        print(line)
    if report.cross_check.vacuous:
        print("  (no branches ran; the verdict is vacuous)")
    if not report.cross_check.agree:
        print("  warning: observability channels disagree; inspect the report")
    print("report bundle: " + ", ".join(sorted(written.values())))
    return EXIT_OK if report.hypothesis.verdict.value == "confirmed" else EXIT_REFUTED


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CHAOSBAS_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return cmd_serve(args)
    if args.command == "tree":
        return cmd_tree(args)
    if args.command == "run":
        return cmd_run(args)
    parser.print_help(sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
