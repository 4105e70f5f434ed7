"""Experiment lifecycle: design, steady state, branch execution, verdict.

A run drives every branch of the attack tree through the C2 API, each branch
in its own blank operation, watches environment stability while links
execute, and judges the hypothesis (every branch should fail) over two
independent observability channels.
"""

import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .attack_tree import AttackTree, Branch, generate_attack_tree, select_branch, tree_from_document, tree_to_document
from .bas_core import ClockMode, ServerConfig, start_server
from .connector import BasClient, BasState, ClockDriver, PollPolicy, TERMINAL_LINK_STATUSES
from .errors import (
    ChaosBasError,
    ConnectionError,
    DuplicateName,
    ParseError,
    PollTimeout,
    ProtocolError,
    StateUnavailable,
    ValidationError,
)
from .data import resolve_input_path
from .facts import TARGET_HOST_NAME
from .scenario import RULE_TABLE_VERSION, Scenario, load_scenario
from .ttp_catalog import Catalog, Tactic, load_catalog

logger = logging.getLogger(__name__)

REPORT_VERSION = "1"

# Keys that hold wall-clock values; stripped when comparing reports for
# reproducibility.
REPORT_TIMESTAMP_KEYS = ("generated_at", "wall_seconds")

ASSUMPTIONS = [
    "Any registered agent may receive links for any operation; operations do not fence agents.",
    "Steady state is captured once per run; leftover agents from earlier activity are flagged, not repaired.",
    "Host posture is concretized as service flags (smb_share, winrm, wmi_remote, scp) plus password strength and attacker-known SSH keys.",
    "Credential-acquisition steps are not modeled; a branch stopped for lack of credentials records that cause and goes no further.",
]


@dataclass(frozen=True)
class ExperimentInputs:
    target: str
    agent: str
    parallelism: int
    objective: Tactic


@dataclass(frozen=True)
class SteadyStateSnapshot:
    agent_paws: tuple[str, ...]
    captured_at: int


class BranchStatus(str, Enum):
    SUCCESS = "success"
    ABORTED = "aborted"


class AbortCause(str, Enum):
    MISSING_CREDENTIAL = "missing_credential"
    SERVICE_HARDENED = "service_hardened"
    SERVICE_ABSENT = "service_absent"
    MISSING_FACT = "missing_fact"
    TIMEOUT = "timeout"
    INFRASTRUCTURE = "infrastructure"
    AGENT_UNTRUSTED = "agent_untrusted"
    API_UNRESPONSIVE = "api_unresponsive"
    LINK_STUCK = "link_stuck"


class DeviationKind(str, Enum):
    API_UNRESPONSIVE = "api_unresponsive"
    AGENT_UNTRUSTED = "agent_untrusted"
    LINK_STUCK = "link_stuck"


_DEVIATION_ABORT = {
    DeviationKind.API_UNRESPONSIVE: AbortCause.API_UNRESPONSIVE,
    DeviationKind.AGENT_UNTRUSTED: AbortCause.AGENT_UNTRUSTED,
    DeviationKind.LINK_STUCK: AbortCause.LINK_STUCK,
}


@dataclass
class DeviationEvent:
    kind: DeviationKind
    detail: str
    at: int
    branch: str | None = None


@dataclass(frozen=True)
class LinkRecord:
    ability_id: str
    status: str
    failure_cause: str | None = None


@dataclass
class BranchOutcome:
    profile_id: str
    status: BranchStatus
    executed_links: list[LinkRecord]
    abort_cause: AbortCause | None = None
    spawned_agent: str | None = None


class Expectation(str, Enum):
    ALL_BRANCHES_FAIL = "all_branches_fail"


class Verdict(str, Enum):
    CONFIRMED = "confirmed"
    REFUTED = "refuted"


@dataclass
class Hypothesis:
    statement: str
    expected: Expectation
    verdict: Verdict


@dataclass
class CrossCheck:
    """Agreement between result parsing (A) and the agent-list diff (B)."""

    channel_a_refuted: bool
    channel_b_refuted: bool
    agree: bool
    vacuous: bool


@dataclass
class Experiment:
    inputs: ExperimentInputs
    tree: AttackTree
    warnings: list[str] = field(default_factory=list)
    deviations: list[DeviationEvent] = field(default_factory=list)


@dataclass
class RunConfig:
    catalog_path: str
    scenario_path: str
    endpoint: str | None = None
    seed: int = 0
    poll_interval: int = 5
    poll_timeout: int = 300
    clock_mode: ClockMode = ClockMode.VIRTUAL
    realtime_factor: float = 1.0
    branch_filter: str | None = None
    render_figures: bool = True

    def poll_policy(self) -> PollPolicy:
        driver = (
            ClockDriver.ADVANCE_VIRTUAL
            if self.clock_mode == ClockMode.VIRTUAL
            else ClockDriver.WALL_CLOCK
        )
        return PollPolicy(interval=self.poll_interval, timeout=self.poll_timeout, driver=driver)


@dataclass
class ExperimentReport:
    report_version: str
    inputs: ExperimentInputs
    config: RunConfig
    steady_state: SteadyStateSnapshot
    tree: AttackTree
    selected_branches: list[str]
    outcomes: list[BranchOutcome]
    hypothesis: Hypothesis
    cross_check: CrossCheck
    post_agent_paws: list[str]
    deviations: list[DeviationEvent]
    warnings: list[str]
    assumptions: list[str]
    rule_table_version: str
    catalog_version: str
    seed: int
    timings: dict


# ---------------------------------------------------------------------------
# Design and steady state
# ---------------------------------------------------------------------------


def derive_target_list(scenario: Scenario) -> list[str]:
    """Hosts an experiment may aim at: everything but the C2 and the seed box."""
    return sorted(
        name for name in scenario.hosts
        if name not in (scenario.c2_address, scenario.seed_agent_host)
    )


def design_experiment(
    inputs: ExperimentInputs,
    state: BasState,
    catalog: Catalog,
    scenario: Scenario,
    objective_list: list[Tactic] | None = None,
) -> Experiment:
    targets = derive_target_list(scenario)
    if inputs.target not in targets:
        raise ValidationError("target", f"target {inputs.target!r} not in {targets}")
    if inputs.agent not in state.agent_paws:
        raise ValidationError("agent", f"agent {inputs.agent!r} not registered")
    if (
        not isinstance(inputs.parallelism, int)
        or isinstance(inputs.parallelism, bool)
        or inputs.parallelism < 1
    ):
        raise ValidationError("parallelism", "parallelism must be a positive integer")
    objectives = objective_list if objective_list is not None else list(Tactic)
    if inputs.objective not in objectives:
        raise ValidationError("objective", f"objective {inputs.objective!r} not offered")
    warnings = []
    if len(state.agents) > 1:
        warnings.append(
            f"steady state contains {len(state.agents)} agents; environment may be dirty"
        )
    platform = scenario.hosts[inputs.target].platform
    tree = generate_attack_tree(catalog, inputs.objective, platform)
    return Experiment(inputs=inputs, tree=tree, warnings=warnings)


def capture_steady_state(client: BasClient) -> SteadyStateSnapshot:
    agents, now = client.list_agents()
    return SteadyStateSnapshot(
        agent_paws=tuple(sorted(a["paw"] for a in agents)), captured_at=now
    )


def seed_facts(inputs: ExperimentInputs) -> dict[str, str]:
    return {TARGET_HOST_NAME: inputs.target}


# ---------------------------------------------------------------------------
# Continuous validation
# ---------------------------------------------------------------------------


def continuous_validate(
    client: BasClient, agent_paw: str, inflight: list[tuple[str, str]] = ()
) -> list[DeviationEvent]:
    """Stability checks run after every link completion.

    Checks that the API answers, the experiment's agent is registered and
    trusted, and no in-flight link sits in collecting past its executor
    timeout. Returns the deviations found right now (usually none).
    """
    try:
        agents, now = client.list_agents()
    except (ConnectionError, ProtocolError) as exc:
        return [DeviationEvent(DeviationKind.API_UNRESPONSIVE, str(exc), at=-1)]
    events = []
    by_paw = {a["paw"]: a for a in agents}
    if agent_paw not in by_paw:
        events.append(
            DeviationEvent(
                DeviationKind.AGENT_UNTRUSTED, f"agent {agent_paw} no longer registered", now
            )
        )
    elif not by_paw[agent_paw].get("trusted", False):
        events.append(
            DeviationEvent(
                DeviationKind.AGENT_UNTRUSTED, f"agent {agent_paw} lost trusted status", now
            )
        )
    for op_id, link_id in inflight:
        try:
            link = client.get_link_result(op_id, link_id)
        except ChaosBasError:
            continue
        if (
            link.get("status") == "collecting"
            and link.get("now", 0) - link.get("created_at", 0) > link.get("executor_timeout", 0)
        ):
            events.append(
                DeviationEvent(
                    DeviationKind.LINK_STUCK,
                    f"link {link_id} collecting past its executor timeout",
                    at=int(link.get("now", 0)),
                )
            )
    return events


def _cause_for_link(status: str, failure_cause: str | None) -> AbortCause:
    if status == "failed" and failure_cause:
        return AbortCause(failure_cause)
    if status == "timeout":
        return AbortCause.TIMEOUT
    return AbortCause.INFRASTRUCTURE


# ---------------------------------------------------------------------------
# Branch execution
# ---------------------------------------------------------------------------


def execute_branch(
    client: BasClient,
    branch: Branch,
    agent_paw: str,
    operation_id: str,
    facts: dict[str, str],
    policy: PollPolicy,
    experiment: Experiment | None = None,
) -> BranchOutcome:
    """Run one branch's nodes strictly in order, stopping at the first failure.

    Produced facts flow into later nodes. When an experiment is given, the
    continuous validator runs after every link completion and a deviation
    tears the branch's operation down.
    """
    facts = dict(facts)
    records: list[LinkRecord] = []
    spawned: str | None = None
    abort: AbortCause | None = None
    for node in branch.nodes:
        try:
            link = client.execute_ability(operation_id, agent_paw, node.ability_id, facts)
            outcome = client.await_result(operation_id, link["id"], policy)
        except PollTimeout:
            records.append(LinkRecord(node.ability_id, "timeout"))
            abort = AbortCause.TIMEOUT
            break
        except ConnectionError:
            records.append(LinkRecord(node.ability_id, "error"))
            abort = AbortCause.INFRASTRUCTURE
            break
        result = outcome.result or {}
        cause = result.get("failure_cause")
        records.append(LinkRecord(node.ability_id, outcome.status, cause))

        deviations: list[DeviationEvent] = []
        if experiment is not None:
            deviations = continuous_validate(client, agent_paw)
            for event in deviations:
                event.branch = branch.profile_id
            experiment.deviations.extend(deviations)
            if deviations:
                try:
                    client.teardown_operation(operation_id)
                except ChaosBasError:
                    logger.warning("teardown after deviation failed for %s", operation_id)

        if outcome.status != "success":
            abort = _cause_for_link(outcome.status, cause)
            break
        facts.update(result.get("produced_facts") or {})
        if result.get("agent_spawned") and spawned is None:
            spawned = result["agent_spawned"]
        if deviations:
            abort = _DEVIATION_ABORT[deviations[0].kind]
            break
    return BranchOutcome(
        profile_id=branch.profile_id,
        status=BranchStatus.SUCCESS if abort is None else BranchStatus.ABORTED,
        executed_links=records,
        abort_cause=abort,
        spawned_agent=spawned,
    )


@dataclass
class _BranchRun:
    branch: Branch
    operation_id: str
    facts: dict[str, str]
    node_idx: int = 0
    awaiting: str | None = None
    awaiting_base: int | None = None
    records: list[LinkRecord] = field(default_factory=list)
    spawned: str | None = None
    abort: AbortCause | None = None
    done: bool = False

    def outcome(self) -> BranchOutcome:
        return BranchOutcome(
            profile_id=self.branch.profile_id,
            status=BranchStatus.SUCCESS if self.abort is None else BranchStatus.ABORTED,
            executed_links=self.records,
            abort_cause=self.abort,
            spawned_agent=self.spawned,
        )


def _wave_submit(client: BasClient, run: _BranchRun, agent_paw: str) -> None:
    node = run.branch.nodes[run.node_idx]
    try:
        link = client.execute_ability(run.operation_id, agent_paw, node.ability_id, run.facts)
    except ConnectionError:
        run.records.append(LinkRecord(node.ability_id, "error"))
        run.abort = AbortCause.INFRASTRUCTURE
        run.done = True
        return
    run.awaiting = link["id"]
    run.awaiting_base = int(link["created_at"])


def _run_wave(
    client: BasClient,
    runs: list[_BranchRun],
    agent_paw: str,
    policy: PollPolicy,
    experiment: Experiment | None,
) -> None:
    """Drive several branches at once, each in its own operation.

    Branches are multiplexed in a fixed round-robin order over the shared
    clock, so wave runs are reproducible and equivalent to the same branches
    polled by independent runners.
    """
    for run in runs:
        _wave_submit(client, run, agent_paw)
    while any(not r.done for r in runs):
        for run in [r for r in runs if not r.done]:
            link = client.get_link_result(run.operation_id, run.awaiting)
            now = int(link.get("now", 0))
            if link["status"] in TERMINAL_LINK_STATUSES:
                _wave_handle_terminal(client, runs, run, link, agent_paw, experiment)
            elif now - run.awaiting_base >= policy.timeout:
                node = run.branch.nodes[run.node_idx]
                run.records.append(LinkRecord(node.ability_id, "timeout"))
                run.abort = AbortCause.TIMEOUT
                run.done = True
        if any(not r.done for r in runs):
            if policy.driver == ClockDriver.ADVANCE_VIRTUAL:
                client.advance_clock(policy.interval)
            else:
                time.sleep(policy.interval)


def _wave_handle_terminal(
    client: BasClient,
    runs: list[_BranchRun],
    run: _BranchRun,
    link: dict,
    agent_paw: str,
    experiment: Experiment | None,
) -> None:
    node = run.branch.nodes[run.node_idx]
    result = link.get("result") or {}
    cause = result.get("failure_cause")
    run.records.append(LinkRecord(node.ability_id, link["status"], cause))

    deviations: list[DeviationEvent] = []
    if experiment is not None:
        inflight = [
            (r.operation_id, r.awaiting)
            for r in runs
            if r is not run and not r.done and r.awaiting
        ]
        deviations = continuous_validate(client, agent_paw, inflight)
        if deviations:
            _wave_apply_deviations(client, runs, run, deviations, experiment)
            if run.done:
                return

    if link["status"] != "success":
        run.abort = _cause_for_link(link["status"], cause)
        run.done = True
        return
    run.facts.update(result.get("produced_facts") or {})
    if result.get("agent_spawned") and run.spawned is None:
        run.spawned = result["agent_spawned"]
    run.node_idx += 1
    if run.node_idx >= len(run.branch.nodes):
        run.done = True
        run.awaiting = None
        return
    _wave_submit(client, run, agent_paw)


def _wave_apply_deviations(
    client: BasClient,
    runs: list[_BranchRun],
    completing: _BranchRun,
    deviations: list[DeviationEvent],
    experiment: Experiment,
) -> None:
    """Attribute each deviation to a branch, tear it down, and stop it."""
    by_link = {r.awaiting: r for r in runs if r.awaiting and not r.done}
    for event in deviations:
        victim = completing
        if event.kind == DeviationKind.LINK_STUCK:
            for link_id, candidate in by_link.items():
                if link_id in event.detail:
                    victim = candidate
                    break
        event.branch = victim.branch.profile_id
        experiment.deviations.append(event)
        if not victim.done:
            try:
                client.teardown_operation(victim.operation_id)
            except ChaosBasError:
                logger.warning("teardown after deviation failed for %s", victim.operation_id)
            victim.abort = _DEVIATION_ABORT[event.kind]
            victim.done = True


# ---------------------------------------------------------------------------
# Hypothesis
# ---------------------------------------------------------------------------


def evaluate_hypothesis(
    inputs: ExperimentInputs,
    steady: SteadyStateSnapshot,
    outcomes: list[BranchOutcome],
    post_agent_paws: list[str] | None,
) -> tuple[Hypothesis, CrossCheck]:
    """Judge the hypothesis over both observability channels.

    Channel A parses branch results (any implanted agent refutes); channel B
    diffs the live agent list, taken before teardown, against the steady
    state. The verdict is channel A's; channel B is the cross-check.
    """
    if post_agent_paws is None:
        raise StateUnavailable("no post-run agent snapshot to evaluate against")
    channel_a = any(o.spawned_agent for o in outcomes)
    channel_b = set(post_agent_paws) > set(steady.agent_paws)
    statement = (
        f"With the environment's controls in place, every {inputs.objective.value} "
        f"branch against {inputs.target} should fail"
    )
    hypothesis = Hypothesis(
        statement=statement,
        expected=Expectation.ALL_BRANCHES_FAIL,
        verdict=Verdict.REFUTED if channel_a else Verdict.CONFIRMED,
    )
    cross = CrossCheck(
        channel_a_refuted=channel_a,
        channel_b_refuted=channel_b,
        agree=channel_a == channel_b,
        vacuous=not outcomes,
    )
    if not cross.agree:
        logger.warning(
            "observability channels disagree: results say %s, agent diff says %s",
            channel_a, channel_b,
        )
    return hypothesis, cross


# ---------------------------------------------------------------------------
# Whole runs
# ---------------------------------------------------------------------------


def _chunks(items: list, size: int) -> list[list]:
    return [items[i : i + size] for i in range(0, len(items), size)]


def _create_operation(client: BasClient, base_name: str) -> str:
    name = base_name
    attempt = 1
    while True:
        try:
            return client.create_blank_operation(name)
        except DuplicateName:
            attempt += 1
            name = f"{base_name}-{attempt}"


def run_experiment(inputs: ExperimentInputs, config: RunConfig) -> ExperimentReport:
    """Full experiment: design, steady state, all branches, verdict, teardown."""
    wall_start = time.monotonic()
    catalog = load_catalog(resolve_input_path(config.catalog_path))
    scenario = load_scenario(resolve_input_path(config.scenario_path))
    server = None
    if config.endpoint is None:
        server = start_server(
            scenario,
            catalog,
            ServerConfig(clock_mode=config.clock_mode, realtime_factor=config.realtime_factor),
        )
        endpoint = server.url
    else:
        endpoint = config.endpoint
    client = BasClient(endpoint)
    created_ops: list[str] = []
    try:
        state = client.fetch_state()
        experiment = design_experiment(inputs, state, catalog, scenario)
        selected = list(experiment.tree.branches)
        if config.branch_filter is not None:
            selected = [select_branch(experiment.tree, config.branch_filter)]
        steady = capture_steady_state(client)
        policy = config.poll_policy()
        base_facts = seed_facts(inputs)

        outcomes: list[BranchOutcome] = []
        for wave in _chunks(selected, inputs.parallelism):
            if len(wave) == 1:
                branch = wave[0]
                op_id = _create_operation(client, f"sce-{branch.profile_id}")
                created_ops.append(op_id)
                outcomes.append(
                    execute_branch(
                        client, branch, inputs.agent, op_id, base_facts, policy, experiment
                    )
                )
            else:
                runs = []
                for branch in wave:
                    op_id = _create_operation(client, f"sce-{branch.profile_id}")
                    created_ops.append(op_id)
                    runs.append(_BranchRun(branch, op_id, dict(base_facts)))
                _run_wave(client, runs, inputs.agent, policy, experiment)
                outcomes.extend(run.outcome() for run in runs)

        post_agents, post_now = client.list_agents()
        post_paws = sorted(a["paw"] for a in post_agents)
        hypothesis, cross = evaluate_hypothesis(inputs, steady, outcomes, post_paws)
    finally:
        for op_id in created_ops:
            try:
                client.teardown_operation(op_id)
            except ChaosBasError as exc:
                logger.warning("teardown of %s failed: %s", op_id, exc)
        client.close()
        if server is not None:
            server.stop()

    return ExperimentReport(
        report_version=REPORT_VERSION,
        inputs=inputs,
        config=config,
        steady_state=steady,
        tree=experiment.tree,
        selected_branches=[b.profile_id for b in selected],
        outcomes=outcomes,
        hypothesis=hypothesis,
        cross_check=cross,
        post_agent_paws=post_paws,
        deviations=experiment.deviations,
        warnings=experiment.warnings,
        assumptions=list(ASSUMPTIONS),
        rule_table_version=RULE_TABLE_VERSION,
        catalog_version=experiment.tree.catalog_version,
        seed=config.seed,
        timings={
            "virtual_started": steady.captured_at,
            "virtual_finished": post_now,
            "wall_seconds": round(time.monotonic() - wall_start, 3),
            "generated_at": datetime.now(timezone.utc).isoformat(),
        },
    )


# ---------------------------------------------------------------------------
# Report document round-trip
# ---------------------------------------------------------------------------


def report_to_document(report: ExperimentReport) -> dict:
    return {
        "report_version": report.report_version,
        "inputs": {
            "target": report.inputs.target,
            "agent": report.inputs.agent,
            "parallelism": report.inputs.parallelism,
            "objective": report.inputs.objective.value,
        },
        "config": {
            "catalog_path": report.config.catalog_path,
            "scenario_path": report.config.scenario_path,
            "endpoint": report.config.endpoint,
            "seed": report.config.seed,
            "poll_interval": report.config.poll_interval,
            "poll_timeout": report.config.poll_timeout,
            "clock_mode": report.config.clock_mode.value,
            "realtime_factor": report.config.realtime_factor,
            "branch_filter": report.config.branch_filter,
            "render_figures": report.config.render_figures,
        },
        "steady_state": {
            "agent_paws": list(report.steady_state.agent_paws),
            "captured_at": report.steady_state.captured_at,
        },
        "tree": tree_to_document(report.tree),
        "selected_branches": list(report.selected_branches),
        "outcomes": [
            {
                "profile_id": o.profile_id,
                "status": o.status.value,
                "abort_cause": o.abort_cause.value if o.abort_cause else None,
                "spawned_agent": o.spawned_agent,
                "executed_links": [
                    {
                        "ability_id": r.ability_id,
                        "status": r.status,
                        "failure_cause": r.failure_cause,
                    }
                    for r in o.executed_links
                ],
            }
            for o in report.outcomes
        ],
        "hypothesis": {
            "statement": report.hypothesis.statement,
            "expected": report.hypothesis.expected.value,
            "verdict": report.hypothesis.verdict.value,
        },
        "cross_check": {
            "channel_a_refuted": report.cross_check.channel_a_refuted,
            "channel_b_refuted": report.cross_check.channel_b_refuted,
            "agree": report.cross_check.agree,
            "vacuous": report.cross_check.vacuous,
        },
        "post_agent_paws": list(report.post_agent_paws),
        "deviations": [
            {"kind": d.kind.value, "detail": d.detail, "at": d.at, "branch": d.branch}
            for d in report.deviations
        ],
        "warnings": list(report.warnings),
        "assumptions": list(report.assumptions),
        "rule_table_version": report.rule_table_version,
        "catalog_version": report.catalog_version,
        "seed": report.seed,
        "timings": dict(report.timings),
    }


def report_from_document(doc: dict) -> ExperimentReport:
    try:
        inputs = ExperimentInputs(
            target=str(doc["inputs"]["target"]),
            agent=str(doc["inputs"]["agent"]),
            parallelism=int(doc["inputs"]["parallelism"]),
            objective=Tactic(doc["inputs"]["objective"]),
        )
        cfg = doc["config"]
        config = RunConfig(
            catalog_path=str(cfg["catalog_path"]),
            scenario_path=str(cfg["scenario_path"]),
            endpoint=cfg.get("endpoint"),
            seed=int(cfg.get("seed", 0)),
            poll_interval=int(cfg.get("poll_interval", 5)),
            poll_timeout=int(cfg.get("poll_timeout", 300)),
            clock_mode=ClockMode(cfg.get("clock_mode", "virtual")),
            realtime_factor=float(cfg.get("realtime_factor", 1.0)),
            branch_filter=cfg.get("branch_filter"),
            render_figures=bool(cfg.get("render_figures", True)),
        )
        outcomes = [
            BranchOutcome(
                profile_id=str(o["profile_id"]),
                status=BranchStatus(o["status"]),
                executed_links=[
                    LinkRecord(
                        ability_id=str(r["ability_id"]),
                        status=str(r["status"]),
                        failure_cause=r.get("failure_cause"),
                    )
                    for r in o["executed_links"]
                ],
                abort_cause=AbortCause(o["abort_cause"]) if o.get("abort_cause") else None,
                spawned_agent=o.get("spawned_agent"),
            )
            for o in doc["outcomes"]
        ]
        return ExperimentReport(
            report_version=str(doc["report_version"]),
            inputs=inputs,
            config=config,
            steady_state=SteadyStateSnapshot(
                agent_paws=tuple(doc["steady_state"]["agent_paws"]),
                captured_at=int(doc["steady_state"]["captured_at"]),
            ),
            tree=tree_from_document(doc["tree"]),
            selected_branches=[str(b) for b in doc["selected_branches"]],
            outcomes=outcomes,
            hypothesis=Hypothesis(
                statement=str(doc["hypothesis"]["statement"]),
                expected=Expectation(doc["hypothesis"]["expected"]),
                verdict=Verdict(doc["hypothesis"]["verdict"]),
            ),
            cross_check=CrossCheck(
                channel_a_refuted=bool(doc["cross_check"]["channel_a_refuted"]),
                channel_b_refuted=bool(doc["cross_check"]["channel_b_refuted"]),
                agree=bool(doc["cross_check"]["agree"]),
                vacuous=bool(doc["cross_check"]["vacuous"]),
            ),
            post_agent_paws=[str(p) for p in doc["post_agent_paws"]],
            deviations=[
                DeviationEvent(
                    kind=DeviationKind(d["kind"]),
                    detail=str(d["detail"]),
                    at=int(d["at"]),
                    branch=d.get("branch"),
                )
                for d in doc["deviations"]
            ],
            warnings=[str(w) for w in doc["warnings"]],
            assumptions=[str(a) for a in doc["assumptions"]],
            rule_table_version=str(doc["rule_table_version"]),
            catalog_version=str(doc["catalog_version"]),
            seed=int(doc["seed"]),
            timings=dict(doc["timings"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed report document: {exc}") from None


def generate_report(report: ExperimentReport, fmt: str = "json") -> str:
    """Render a report as canonical JSON or as Markdown."""
    from . import report as rendering

    return rendering.generate_report(report, fmt)
