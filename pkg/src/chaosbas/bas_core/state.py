"""C2 server state machine.

All time is integer virtual seconds on a monotone clock owned by this module.
Agents beacon on a schedule; a link is fetched at one beacon and completed at
the next (two-beacon execution). A single lock serializes every mutation, and
an append-only event log records each state change so that two runs with the
same inputs produce byte-identical logs.
"""

import copy
import logging
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from ..errors import (
    DuplicateName,
    InvalidConfig,
    OperationFinished,
    RealTimeMode,
    UncoveredRule,
    UnknownAbility,
    UnknownAgent,
    UnknownLink,
    UnknownOperation,
)
from ..facts import REMOTE_HOST_FQDN, TARGET_HOST_NAME, missing_facts, render_template
from ..scenario import (
    FailureCause,
    HostModel,
    Scenario,
    evaluate_outcome,
    host_for_fqdn,
    is_covered,
)
from ..ttp_catalog import (
    ActionKind,
    Catalog,
    Executor,
    ability_to_dict,
    profile_to_dict,
    resolve_executor,
)

logger = logging.getLogger(__name__)


class ClockMode(str, Enum):
    VIRTUAL = "virtual"
    REAL_TIME = "real_time"


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 0
    clock_mode: ClockMode = ClockMode.VIRTUAL
    beacon_period: int = 10
    trusted_timeout: int = 90
    seed_paw: str = "sandcat_A"
    # Virtual seconds per wall second when running in real-time mode.
    realtime_factor: float = 1.0


class LinkStatus(str, Enum):
    QUEUED = "queued"
    COLLECTING = "collecting"
    SUCCESS = "success"
    FAILED = "failed"
    TIMEOUT = "timeout"
    DISCARDED = "discarded"


TERMINAL_STATUSES = {
    LinkStatus.SUCCESS,
    LinkStatus.FAILED,
    LinkStatus.TIMEOUT,
    LinkStatus.DISCARDED,
}


class OperationState(str, Enum):
    RUNNING = "running"
    FINISHED = "finished"


@dataclass
class Agent:
    paw: str
    host: str
    platform: str
    beacon_period: int
    trusted_timeout: int
    last_seen: int
    next_beacon_at: int
    trusted: bool = True
    pending: deque = field(default_factory=deque)
    collecting: str | None = None
    spawned_by: str | None = None  # operation id, None for the seed agent


@dataclass
class LinkResult:
    stdout: str = ""
    produced_facts: dict[str, str] = field(default_factory=dict)
    failure_cause: FailureCause | None = None
    agent_spawned: str | None = None

    def to_dict(self) -> dict:
        return {
            "stdout": self.stdout,
            "produced_facts": dict(sorted(self.produced_facts.items())),
            "failure_cause": self.failure_cause.value if self.failure_cause else None,
            "agent_spawned": self.agent_spawned,
        }


@dataclass
class Link:
    id: str
    operation_id: str
    paw: str
    ability_id: str
    executor: Executor
    command: str
    facts: dict[str, str]
    status: LinkStatus
    created_at: int
    decided_at: int | None = None
    result: LinkResult | None = None


@dataclass
class Operation:
    id: str
    name: str
    state: OperationState
    created_at: int
    link_ids: list[str] = field(default_factory=list)


def _letters(n: int) -> str:
    """0 -> A, 25 -> Z, 26 -> AA, in spawn order."""
    n += 1
    out = ""
    while n:
        n -= 1
        out = chr(65 + n % 26) + out
        n //= 26
    return out


class CoreState:
    """Single owner of all mutable server state."""

    def __init__(self, scenario: Scenario, catalog: Catalog, config: ServerConfig):
        self._lock = threading.RLock()
        self.scenario = copy.deepcopy(scenario)
        self.catalog = catalog
        self.config = config
        self._now = 0
        self._op_seq = 0
        self._link_seq = 0
        self._agent_seq = 0
        self.agents: dict[str, Agent] = {}
        self.operations: dict[str, Operation] = {}
        self.links: dict[str, Link] = {}
        self.events: list[str] = []
        self._log("server_started", scenario=self.scenario.seed_agent_host)
        self._register_agent(
            paw=config.seed_paw,
            host=self.scenario.seed_agent_host,
            spawned_by=None,
        )

    # -- plumbing -----------------------------------------------------------

    @property
    def now(self) -> int:
        with self._lock:
            return self._now

    def _log(self, kind: str, **kv) -> None:
        parts = [f"t={self._now}", kind]
        parts += [f"{k}={v}" for k, v in kv.items()]
        self.events.append(" ".join(parts))

    def _register_agent(self, paw: str, host: str, spawned_by: str | None) -> Agent:
        host_model = self.scenario.hosts[host]
        agent = Agent(
            paw=paw,
            host=host,
            platform=host_model.platform.value,
            beacon_period=self.config.beacon_period,
            trusted_timeout=self.config.trusted_timeout,
            last_seen=self._now,
            next_beacon_at=self._now + self.config.beacon_period,
            spawned_by=spawned_by,
        )
        self.agents[paw] = agent
        host_model.compromised = True
        self._agent_seq += 1
        self._log("agent_registered", paw=paw, host=host, platform=agent.platform)
        return agent

    # -- operations ---------------------------------------------------------

    def create_operation(self, name: str) -> dict:
        with self._lock:
            if not name or not isinstance(name, str):
                raise InvalidConfig("operation name must be a non-empty string")
            if any(op.name == name for op in self.operations.values()):
                raise DuplicateName(f"operation name {name!r} already in use")
            self._op_seq += 1
            op = Operation(
                id=f"op-{self._op_seq}",
                name=name,
                state=OperationState.RUNNING,
                created_at=self._now,
            )
            self.operations[op.id] = op
            self._log("operation_created", id=op.id, name=name)
            return self.operation_to_dict(op)

    def operation_to_dict(self, op: Operation) -> dict:
        return {
            "id": op.id,
            "name": op.name,
            "state": op.state.value,
            "created_at": op.created_at,
            "links": list(op.link_ids),
        }

    def _get_operation(self, op_id: str) -> Operation:
        op = self.operations.get(op_id)
        if op is None:
            raise UnknownOperation(f"no operation {op_id!r}")
        return op

    # -- links --------------------------------------------------------------

    def add_potential_link(
        self, op_id: str, paw: str, ability_id: str, facts: dict[str, str]
    ) -> dict:
        with self._lock:
            op = self._get_operation(op_id)
            if op.state == OperationState.FINISHED:
                raise OperationFinished(f"operation {op_id} is finished")
            agent = self.agents.get(paw)
            if agent is None:
                raise UnknownAgent(f"no agent {paw!r}")
            ability = self.catalog.abilities.get(ability_id)
            if ability is None:
                raise UnknownAbility(f"no ability {ability_id!r}")
            executor = resolve_executor(ability, self.scenario.hosts[agent.host].platform)
            if not is_covered(executor.channel, executor.action):
                raise UncoveredRule(
                    f"ability {ability_id}: no outcome rule for "
                    f"{executor.channel.value}/{executor.action.value}"
                )
            if not isinstance(facts, dict):
                raise InvalidConfig("facts must be an object of string values")
            facts = {str(k): str(v) for k, v in facts.items()}

            self._link_seq += 1
            link_id = f"link-{self._link_seq}"
            missing = missing_facts(executor.command, facts)
            if missing:
                link = Link(
                    id=link_id,
                    operation_id=op_id,
                    paw=paw,
                    ability_id=ability_id,
                    executor=executor,
                    command=executor.command,
                    facts=facts,
                    status=LinkStatus.FAILED,
                    created_at=self._now,
                    decided_at=self._now,
                    result=LinkResult(
                        stdout="missing fact(s): " + ", ".join(missing),
                        failure_cause=FailureCause.MISSING_FACT,
                    ),
                )
                self.links[link_id] = link
                op.link_ids.append(link_id)
                self._log(
                    "link_failed_render", id=link_id, op=op_id, paw=paw,
                    ability=ability_id, missing=",".join(missing),
                )
                return self.link_to_dict(link)

            link = Link(
                id=link_id,
                operation_id=op_id,
                paw=paw,
                ability_id=ability_id,
                executor=executor,
                command=render_template(executor.command, facts),
                facts=facts,
                status=LinkStatus.QUEUED,
                created_at=self._now,
            )
            self.links[link_id] = link
            op.link_ids.append(link_id)
            agent.pending.append(link_id)
            self._log("link_queued", id=link_id, op=op_id, paw=paw, ability=ability_id)
            return self.link_to_dict(link)

    def link_to_dict(self, link: Link) -> dict:
        return {
            "id": link.id,
            "operation_id": link.operation_id,
            "paw": link.paw,
            "ability_id": link.ability_id,
            "command": link.command,
            "status": link.status.value,
            "created_at": link.created_at,
            "decided_at": link.decided_at,
            "executor_timeout": link.executor.timeout,
            "result": link.result.to_dict() if link.result else None,
        }

    def get_link_result(self, op_id: str, link_id: str) -> dict:
        with self._lock:
            op = self._get_operation(op_id)
            if link_id not in op.link_ids:
                raise UnknownLink(f"operation {op_id} has no link {link_id!r}")
            link = self.links[link_id]
            out = self.link_to_dict(link)
            out["now"] = self._now
            return out

    # -- beacons and the clock ----------------------------------------------

    def agent_beacon(self, paw: str) -> list[dict]:
        """One agent check-in: report the collecting link, fetch the next one."""
        with self._lock:
            agent = self.agents.get(paw)
            if agent is None:
                raise UnknownAgent(f"no agent {paw!r}")
            return self._beacon(agent)

    def _beacon(self, agent: Agent) -> list[dict]:
        gap = self._now - agent.last_seen
        if gap > agent.trusted_timeout and agent.trusted:
            agent.trusted = False
            self._log("agent_untrusted", paw=agent.paw, gap=gap)

        completed = None
        if agent.collecting is not None:
            link = self.links[agent.collecting]
            self._complete_link(link, agent)
            completed = link.id
            agent.collecting = None

        instructions: list[dict] = []
        while agent.pending:
            link_id = agent.pending.popleft()
            link = self.links[link_id]
            if link.status != LinkStatus.QUEUED:
                continue  # defensively skip anything discarded under us
            link.status = LinkStatus.COLLECTING
            agent.collecting = link_id
            instructions.append({"link_id": link_id, "command": link.command})
            break

        agent.last_seen = self._now
        agent.next_beacon_at = self._now + agent.beacon_period
        self._log(
            "beacon", paw=agent.paw,
            completed=completed or "-",
            fetched=instructions[0]["link_id"] if instructions else "-",
        )
        return instructions

    def _complete_link(self, link: Link, agent: Agent) -> None:
        ability = self.catalog.abilities[link.ability_id]
        operation = self.operations[link.operation_id]
        target = self._resolve_target(link.facts, agent, link.executor.action)
        if target is None:
            link.result = LinkResult(
                stdout="no target host resolvable from facts",
                failure_cause=FailureCause.MISSING_FACT,
            )
            link.status = LinkStatus.FAILED
        else:
            outcome = evaluate_outcome(
                link.executor.channel, link.executor.action, target, link.facts
            )
            if outcome.success:
                produced = {
                    k: v for k, v in outcome.produced.items() if k in ability.produces
                }
                spawned = None
                if (
                    link.executor.action == ActionKind.START_PROCESS
                    and operation.state == OperationState.RUNNING
                ):
                    # A started process is the implanted agent taking hold.
                    spawned = self._spawn_agent(target, link)
                link.result = LinkResult(
                    stdout=outcome.stdout,
                    produced_facts=produced,
                    agent_spawned=spawned,
                )
                link.status = LinkStatus.SUCCESS
            else:
                link.result = LinkResult(stdout=outcome.stdout, failure_cause=outcome.cause)
                link.status = LinkStatus.FAILED
        link.decided_at = self._now
        self._log(
            "link_completed",
            id=link.id,
            status=link.status.value,
            cause=link.result.failure_cause.value if link.result.failure_cause else "-",
            spawned=link.result.agent_spawned or "-",
        )

    def _resolve_target(
        self, facts: dict[str, str], agent: Agent, action: ActionKind
    ) -> HostModel | None:
        fqdn = facts.get(REMOTE_HOST_FQDN)
        if fqdn:
            host = host_for_fqdn(self.scenario, fqdn)
            if host is not None:
                return host
        name = facts.get(TARGET_HOST_NAME)
        if name and name in self.scenario.hosts:
            return self.scenario.hosts[name]
        if action == ActionKind.DISCOVER:
            # A survey with no named target scans the neighborhood: first
            # host by name that is neither the agent's own box nor the C2.
            candidates = sorted(
                n for n in self.scenario.hosts
                if n != agent.host and n != self.scenario.c2_address
            )
            if candidates:
                return self.scenario.hosts[candidates[0]]
            return self.scenario.hosts[agent.host]
        return None

    def _spawn_agent(self, target: HostModel, link: Link) -> str:
        paw = "sandcat_" + _letters(self._agent_seq)
        agent = self._register_agent(paw=paw, host=target.name, spawned_by=link.operation_id)
        agent.beacon_period = self.config.beacon_period
        return paw

    def advance_clock(self, delta: int) -> int:
        with self._lock:
            if self.config.clock_mode != ClockMode.VIRTUAL:
                raise RealTimeMode("clock advance is only available in virtual mode")
            if not isinstance(delta, int) or isinstance(delta, bool) or delta < 0:
                raise InvalidConfig("delta must be a non-negative integer")
            if delta == 0:
                return self._now
            return self._advance_to(self._now + delta)

    def _advance_to(self, target: int) -> int:
        """Step the clock to ``target``, firing due beacons and link timeouts.

        Events are processed in chronological order; at one instant, beacons
        fire first in paw order, then queued-link timeouts in link order.
        """
        with self._lock:
            while True:
                next_t = None
                for paw in sorted(self.agents):
                    t = self.agents[paw].next_beacon_at
                    if t <= target and (next_t is None or t < next_t):
                        next_t = t
                for link in self.links.values():
                    if link.status == LinkStatus.QUEUED:
                        t = link.created_at + link.executor.timeout
                        if t <= target and (next_t is None or t < next_t):
                            next_t = t
                if next_t is None:
                    break
                self._now = max(self._now, next_t)
                self._refresh_trusted()
                for paw in sorted(self.agents):
                    agent = self.agents[paw]
                    if agent.next_beacon_at <= self._now:
                        self._beacon(agent)
                for link_id in sorted(self.links, key=lambda i: int(i.split("-")[1])):
                    link = self.links[link_id]
                    if (
                        link.status == LinkStatus.QUEUED
                        and link.created_at + link.executor.timeout <= self._now
                    ):
                        link.status = LinkStatus.TIMEOUT
                        link.decided_at = self._now
                        agent = self.agents.get(link.paw)
                        if agent and link_id in agent.pending:
                            agent.pending.remove(link_id)
                        self._log("link_timeout", id=link_id)
            self._now = target
            self._refresh_trusted()
            return self._now

    def _refresh_trusted(self) -> None:
        # Trust is lost when the beacon gap exceeds the timeout and is not
        # regained by later beacons; an operator decision would be needed.
        for paw in sorted(self.agents):
            agent = self.agents[paw]
            if agent.trusted and self._now - agent.last_seen > agent.trusted_timeout:
                agent.trusted = False
                self._log("agent_untrusted", paw=paw, gap=self._now - agent.last_seen)

    # -- snapshots ----------------------------------------------------------

    def agent_to_dict(self, agent: Agent) -> dict:
        return {
            "paw": agent.paw,
            "host": agent.host,
            "platform": agent.platform,
            "beacon_period": agent.beacon_period,
            "trusted": agent.trusted,
            "last_seen": agent.last_seen,
        }

    def list_agents(self) -> list[dict]:
        with self._lock:
            return [self.agent_to_dict(self.agents[p]) for p in sorted(self.agents)]

    def list_abilities(self) -> list[dict]:
        with self._lock:
            return [ability_to_dict(a) for _, a in sorted(self.catalog.abilities.items())]

    def list_adversaries(self) -> list[dict]:
        with self._lock:
            return [profile_to_dict(p) for _, p in sorted(self.catalog.profiles.items())]

    def configure_agent(self, paw: str, beacon_period) -> dict:
        with self._lock:
            agent = self.agents.get(paw)
            if agent is None:
                raise UnknownAgent(f"no agent {paw!r}")
            if (
                not isinstance(beacon_period, int)
                or isinstance(beacon_period, bool)
                or beacon_period < 1
            ):
                raise InvalidConfig("beacon_period must be a positive integer")
            # The pending wake-up keeps its old schedule; later sleeps use the
            # new period.
            agent.beacon_period = beacon_period
            self._log("agent_configured", paw=paw, beacon_period=beacon_period)
            return self.agent_to_dict(agent)

    # -- teardown -----------------------------------------------------------

    def teardown_operation(self, op_id: str) -> dict:
        with self._lock:
            op = self._get_operation(op_id)
            if op.state == OperationState.FINISHED:
                return {
                    "operation_id": op_id,
                    "already_finished": True,
                    "links_discarded": 0,
                    "agents_deregistered": [],
                    "hosts_reset": [],
                }
            op.state = OperationState.FINISHED
            discarded = 0
            for link_id in op.link_ids:
                link = self.links[link_id]
                if link.status == LinkStatus.QUEUED:
                    link.status = LinkStatus.DISCARDED
                    link.decided_at = self._now
                    agent = self.agents.get(link.paw)
                    if agent and link_id in agent.pending:
                        agent.pending.remove(link_id)
                    discarded += 1
            deregistered = [
                paw for paw in sorted(self.agents)
                if self.agents[paw].spawned_by == op_id
            ]
            for paw in deregistered:
                del self.agents[paw]
            hosts_reset = []
            occupied = {a.host for a in self.agents.values()}
            for name in sorted(self.scenario.hosts):
                host = self.scenario.hosts[name]
                if host.compromised and name not in occupied:
                    host.compromised = False
                    hosts_reset.append(name)
            self._log(
                "operation_finished", id=op_id, discarded=discarded,
                deregistered=",".join(deregistered) or "-",
            )
            return {
                "operation_id": op_id,
                "already_finished": False,
                "links_discarded": discarded,
                "agents_deregistered": deregistered,
                "hosts_reset": hosts_reset,
            }
