"""Engine state machine: beacons, links, spawns, timeouts, teardown, clock."""

import random

import pytest

from chaosbas.bas_core import ClockMode, ServerConfig
from chaosbas.bas_core.state import CoreState, LinkStatus
from chaosbas.errors import (
    DuplicateName,
    InvalidConfig,
    OperationFinished,
    RealTimeMode,
    UncoveredRule,
    UnknownAbility,
    UnknownAgent,
    UnknownOperation,
)
from chaosbas.ttp_catalog import catalog_from_document

TARGET_FACTS = {"target.host.name": "Windows10_A"}


@pytest.fixture
def core(figure3_scenario, worms_catalog):
    return CoreState(figure3_scenario, worms_catalog, ServerConfig())


def _submit(core, op_id, ability, facts=TARGET_FACTS, paw="sandcat_A"):
    return core.add_potential_link(op_id, paw, ability, dict(facts))


def test_seed_agent_registered_at_start(core):
    agents = core.list_agents()
    assert len(agents) == 1
    agent = agents[0]
    assert agent["paw"] == "sandcat_A"
    assert agent["host"] == "windows10-source"
    assert agent["platform"] == "windows"
    assert agent["trusted"] is True
    assert core.now == 0


def test_operation_lifecycle_and_names(core):
    op = core.create_operation("first")
    assert op["id"] == "op-1"
    assert op["state"] == "running"
    assert op["links"] == []
    with pytest.raises(DuplicateName):
        core.create_operation("first")
    with pytest.raises(InvalidConfig):
        core.create_operation("")
    assert core.create_operation("second")["id"] == "op-2"


def test_submit_validations(core):
    op = core.create_operation("val")["id"]
    with pytest.raises(UnknownOperation):
        _submit(core, "op-99", "ability.net.survey")
    with pytest.raises(UnknownAgent):
        core.add_potential_link(op, "ghost", "ability.net.survey", {})
    with pytest.raises(UnknownAbility):
        _submit(core, op, "ability.not.there")
    core.teardown_operation(op)
    with pytest.raises(OperationFinished):
        _submit(core, op, "ability.net.survey")


def test_uncovered_rule_rejected_at_submit(figure3_scenario, worms_catalog):
    doc = {
        "abilities": [
            {
                "id": "ability.odd.pair",
                "name": "Start a process over SMB",
                "tactic": "execution",
                "technique_id": "T0000",
                "executors": [
                    {
                        "platform": "windows",
                        "channel": "smb",
                        "action": "start_process",
                        "command": "whoami",
                        "timeout": 60,
                    }
                ],
                "requires": [],
                "produces": [],
            }
        ],
        "profiles": [
            {
                "id": "odd",
                "name": "Odd",
                "objectives": ["execution"],
                "abilities": ["ability.odd.pair"],
            }
        ],
    }
    core = CoreState(figure3_scenario, catalog_from_document(doc), ServerConfig())
    op = core.create_operation("odd")["id"]
    with pytest.raises(UncoveredRule):
        core.add_potential_link(op, "sandcat_A", "ability.odd.pair", {})


def test_link_with_missing_placeholder_is_born_failed(core):
    op = core.create_operation("render")["id"]
    link = _submit(core, op, "ability.smb.copy", facts={})
    assert link["status"] == "failed"
    assert link["result"]["failure_cause"] == "missing_fact"
    assert "remote.host.fqdn" in link["result"]["stdout"]
    assert link["decided_at"] == link["created_at"] == 0
    # it was never handed to the agent, so beacons do not touch it
    core.advance_clock(30)
    assert core.get_link_result(op, link["id"])["status"] == "failed"


def test_two_beacon_execution_trace(core):
    op = core.create_operation("trace")["id"]
    link = _submit(core, op, "ability.net.survey")
    link_id = link["id"]
    assert link["status"] == "queued"
    core.advance_clock(9)
    assert core.get_link_result(op, link_id)["status"] == "queued"
    core.advance_clock(1)  # first beacon at t=10 picks the command up
    assert core.get_link_result(op, link_id)["status"] == "collecting"
    core.advance_clock(9)
    assert core.get_link_result(op, link_id)["status"] == "collecting"
    core.advance_clock(1)  # second beacon at t=20 brings the result home
    done = core.get_link_result(op, link_id)
    assert done["status"] == "success"
    assert done["decided_at"] == 20
    assert done["result"]["produced_facts"] == {
        "remote.host.ip": "192.168.56.102",
        "remote.host.fqdn": "windows10-a.lab.local",
    }


def test_one_instruction_per_beacon(core):
    op = core.create_operation("queue")["id"]
    ids = [_submit(core, op, "ability.net.survey")["id"] for _ in range(3)]
    core.advance_clock(10)
    statuses = [core.get_link_result(op, i)["status"] for i in ids]
    assert statuses == ["collecting", "queued", "queued"]
    core.advance_clock(10)
    statuses = [core.get_link_result(op, i)["status"] for i in ids]
    assert statuses == ["success", "collecting", "queued"]


def _run_worm1(core, op):
    """Drive survey, SMB copy, WMI start to completion; returns the last link."""
    facts = dict(TARGET_FACTS)
    last = None
    for ability in ("ability.net.survey", "ability.smb.copy", "ability.wmi.start"):
        link = _submit(core, op, ability, facts=facts)
        core.advance_clock(20)
        last = core.get_link_result(op, link["id"])
        assert last["status"] == "success", (ability, last)
        facts.update(last["result"]["produced_facts"])
    return last


def test_successful_start_process_spawns_agent(core):
    op = core.create_operation("worm1")["id"]
    last = _run_worm1(core, op)
    assert last["result"]["agent_spawned"] == "sandcat_B"
    paws = [a["paw"] for a in core.list_agents()]
    assert paws == ["sandcat_A", "sandcat_B"]
    spawned = core.agents["sandcat_B"]
    assert spawned.host == "Windows10_A"
    assert spawned.spawned_by == op
    assert core.scenario.hosts["Windows10_A"].compromised


def test_spawn_paws_follow_spawn_order(core):
    op1 = core.create_operation("first")["id"]
    _run_worm1(core, op1)
    op2 = core.create_operation("second")["id"]
    last = _run_worm1(core, op2)
    assert last["result"]["agent_spawned"] == "sandcat_C"


def test_spawn_suppressed_when_operation_finished(core):
    op = core.create_operation("late")["id"]
    facts = dict(TARGET_FACTS)
    for ability in ("ability.net.survey", "ability.smb.copy"):
        link = _submit(core, op, ability, facts=facts)
        core.advance_clock(20)
        facts.update(core.get_link_result(op, link["id"])["result"]["produced_facts"])
    link = _submit(core, op, "ability.wmi.start", facts=facts)
    core.advance_clock(10)  # collecting now; the agent holds the command
    assert core.get_link_result(op, link["id"])["status"] == "collecting"
    core.teardown_operation(op)
    core.advance_clock(10)  # the in-flight command still reports back
    done = core.get_link_result(op, link["id"])
    assert done["status"] == "success"
    # but a finished operation gets no implant out of it
    assert done["result"]["agent_spawned"] is None
    assert [a["paw"] for a in core.list_agents()] == ["sandcat_A"]


def test_queued_link_times_out_without_beacons(core):
    op = core.create_operation("timeout")["id"]
    ids = [_submit(core, op, "ability.net.survey")["id"] for _ in range(3)]
    core.advance_clock(10)  # fetch first link
    core.configure_agent("sandcat_A", 300)  # pending wake-up at t=20 unchanged
    core.advance_clock(10)  # t=20: completes first, fetches second, sleeps 300
    assert core.get_link_result(op, ids[2])["status"] == "queued"
    core.advance_clock(39)  # t=59, one second before the executor timeout
    assert core.get_link_result(op, ids[2])["status"] == "queued"
    core.advance_clock(1)  # t=60 == created_at + timeout
    third = core.get_link_result(op, ids[2])
    assert third["status"] == "timeout"
    assert third["decided_at"] == 60
    assert third["result"] is None
    # the second link is still out with the agent, untouched
    assert core.get_link_result(op, ids[1])["status"] == "collecting"


def test_trust_is_lost_after_silence_and_never_returns(core):
    core.configure_agent("sandcat_A", 300)
    core.advance_clock(10)  # pending wake-up fires; next beacon at t=310
    assert core.list_agents()[0]["trusted"] is True
    core.advance_clock(90)  # t=100, gap is 90, still within the window
    assert core.list_agents()[0]["trusted"] is True
    core.advance_clock(1)  # t=101, gap 91 exceeds the 90s trust window
    assert core.list_agents()[0]["trusted"] is False
    core.advance_clock(300)  # beacons resume at t=310, trust does not
    assert core.list_agents()[0]["trusted"] is False


def test_teardown_discards_queue_and_restores_environment(core):
    op = core.create_operation("cleanup")["id"]
    _run_worm1(core, op)  # implants sandcat_B on Windows10_A
    queued = _submit(core, op, "ability.net.survey")["id"]
    summary = core.teardown_operation(op)
    assert summary["already_finished"] is False
    assert summary["links_discarded"] == 1
    assert summary["agents_deregistered"] == ["sandcat_B"]
    assert summary["hosts_reset"] == ["Windows10_A"]
    assert core.get_link_result(op, queued)["status"] == "discarded"
    assert [a["paw"] for a in core.list_agents()] == ["sandcat_A"]
    assert not core.scenario.hosts["Windows10_A"].compromised
    again = core.teardown_operation(op)
    assert again["already_finished"] is True
    assert again["links_discarded"] == 0
    assert again["agents_deregistered"] == []


def test_advance_clock_validation(core):
    assert core.advance_clock(0) == 0
    with pytest.raises(InvalidConfig):
        core.advance_clock(-1)
    with pytest.raises(InvalidConfig):
        core.advance_clock(True)
    with pytest.raises(InvalidConfig):
        core.advance_clock(2.5)


def test_advance_clock_refused_in_real_time(figure3_scenario, worms_catalog):
    core = CoreState(
        figure3_scenario, worms_catalog, ServerConfig(clock_mode=ClockMode.REAL_TIME)
    )
    with pytest.raises(RealTimeMode):
        core.advance_clock(5)


def test_scenario_state_is_private_to_the_engine(figure3_scenario, worms_catalog):
    core = CoreState(figure3_scenario, worms_catalog, ServerConfig())
    op = core.create_operation("isolation")["id"]
    _run_worm1(core, op)
    # the engine compromised its own copy, not the caller's scenario
    assert core.scenario.hosts["Windows10_A"].compromised
    assert not figure3_scenario.hosts["Windows10_A"].compromised


def _scripted_events(scenario, catalog):
    core = CoreState(scenario, catalog, ServerConfig())
    op = core.create_operation("script")["id"]
    _submit(core, op, "ability.net.survey")
    _submit(core, op, "ability.smb.copy", facts={})
    core.advance_clock(25)
    _submit(core, op, "ability.smb.copy",
            facts={"remote.host.fqdn": "windows10-a.lab.local"})
    core.advance_clock(40)
    core.teardown_operation(op)
    core.advance_clock(100)
    return core.events


def test_event_log_is_identical_across_runs(figure3_scenario, worms_catalog):
    first = _scripted_events(figure3_scenario, worms_catalog)
    second = _scripted_events(figure3_scenario, worms_catalog)
    assert first == second
    assert any(line.startswith("t=0 server_started") for line in first)


# ---------------------------------------------------------------------------
# Randomized interleavings: only declared transitions, conserved agents
# ---------------------------------------------------------------------------

# One clock advance may span several beacons, so a sampled link can cross
# more than one edge between checks; what must hold is reachability along
# declared edges (and terminal states never move again).
_REACHABLE = {
    LinkStatus.QUEUED: {
        LinkStatus.COLLECTING, LinkStatus.TIMEOUT, LinkStatus.DISCARDED,
        LinkStatus.SUCCESS, LinkStatus.FAILED,
    },
    LinkStatus.COLLECTING: {LinkStatus.SUCCESS, LinkStatus.FAILED},
    LinkStatus.SUCCESS: set(),
    LinkStatus.FAILED: set(),
    LinkStatus.TIMEOUT: set(),
    LinkStatus.DISCARDED: set(),
}
_BORN = {LinkStatus.QUEUED, LinkStatus.FAILED}
_TERMINAL_WITH_RESULT = {LinkStatus.SUCCESS, LinkStatus.FAILED}


def _check_invariants(core, prev_status):
    for link_id, link in core.links.items():
        before = prev_status.get(link_id)
        if before is None:
            assert link.status in _BORN, f"{link_id} born {link.status}"
        elif before != link.status:
            assert link.status in _REACHABLE[before], (
                f"{link_id} moved {before} -> {link.status}"
            )
        prev_status[link_id] = link.status
        has_result = link.result is not None
        assert has_result == (link.status in _TERMINAL_WITH_RESULT), (
            f"{link_id} {link.status} result presence {has_result}"
        )
    collecting_by_paw = {}
    for link in core.links.values():
        if link.status == LinkStatus.COLLECTING:
            collecting_by_paw[link.paw] = collecting_by_paw.get(link.paw, 0) + 1
    assert all(n == 1 for n in collecting_by_paw.values())
    for agent in core.agents.values():
        for pending_id in agent.pending:
            assert core.links[pending_id].status == LinkStatus.QUEUED


def test_random_interleavings_respect_the_state_machine(figure3_scenario, worms_catalog):
    for seed in range(20):
        rng = random.Random(1000 + seed)
        core = CoreState(figure3_scenario, worms_catalog, ServerConfig())
        ops = []
        prev_status = {}
        spawned_ever = set()
        deregistered_ever = set()
        for step in range(40):
            action = rng.choice(["op", "submit", "submit", "advance", "advance",
                                 "teardown", "configure"])
            if action == "op":
                ops.append(core.create_operation(f"fuzz-{seed}-{len(ops)}")["id"])
            elif action == "submit" and ops:
                facts = rng.choice(
                    [{}, {"target.host.name": rng.choice(sorted(core.scenario.hosts))}]
                )
                try:
                    core.add_potential_link(
                        rng.choice(ops),
                        rng.choice(sorted(core.agents)),
                        rng.choice(sorted(core.catalog.abilities)),
                        facts,
                    )
                except OperationFinished:
                    pass
            elif action == "advance":
                core.advance_clock(rng.randint(0, 37))
            elif action == "teardown" and ops:
                summary = core.teardown_operation(rng.choice(ops))
                deregistered_ever.update(summary["agents_deregistered"])
            elif action == "configure":
                core.configure_agent(rng.choice(sorted(core.agents)), rng.randint(1, 50))
            for paw, agent in core.agents.items():
                if agent.spawned_by is not None:
                    spawned_ever.add(paw)
            _check_invariants(core, prev_status)
        assert set(core.agents) == ({"sandcat_A"} | spawned_ever) - deregistered_ever
