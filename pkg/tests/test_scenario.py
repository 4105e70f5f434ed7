"""Scenario parsing and the outcome rule table."""

import copy
import json

import pytest

from chaosbas.errors import IntegrityError, ParseError, UncoveredRule, UnknownName
from chaosbas.scenario import (
    DROPPED_PAYLOAD_PATH,
    CredentialStore,
    FailureCause,
    HostModel,
    PasswordStrength,
    ScpState,
    ServiceFlags,
    SmbShareState,
    WinRmState,
    WmiRemoteState,
    covered_pairs,
    evaluate_outcome,
    host_for_fqdn,
    is_covered,
    resolve_fqdn,
    resolve_ip,
    scenario_from_document,
)
from chaosbas.ttp_catalog import ActionKind, Channel, Platform
from conftest import FIGURE3_SCENARIO


def _doc():
    return json.loads(open(FIGURE3_SCENARIO).read())


def make_host(smb="absent", winrm="absent", wmi="disabled", scp="absent",
              password="strong", keys=False):
    return HostModel(
        name="box",
        fqdn="box.lab.local",
        ip="10.0.0.9",
        platform=Platform.WINDOWS,
        services=ServiceFlags(
            smb_share=SmbShareState(smb),
            winrm=WinRmState(winrm),
            wmi_remote=WmiRemoteState(wmi),
            scp=ScpState(scp),
        ),
        credentials=CredentialStore(
            password_strength=PasswordStrength(password),
            ssh_keys_known_to_attacker=keys,
        ),
    )


# -- parsing ----------------------------------------------------------------


def test_figure3_loads(figure3_scenario):
    assert sorted(figure3_scenario.hosts) == [
        "Windows10_A", "caldera-server", "dns-server", "windows10-source",
    ]
    assert figure3_scenario.c2_address == "caldera-server"
    assert figure3_scenario.seed_agent_host == "windows10-source"
    # only the box carrying the seed agent starts compromised
    assert figure3_scenario.hosts["windows10-source"].compromised
    assert not figure3_scenario.hosts["Windows10_A"].compromised
    target = figure3_scenario.hosts["Windows10_A"]
    assert target.services.smb_share == SmbShareState.WORLD_WRITABLE
    assert target.services.winrm == WinRmState.MISCONFIGURED
    assert target.services.wmi_remote == WmiRemoteState.ENABLED
    assert target.services.scp == ScpState.ABSENT
    assert target.credentials.password_strength == PasswordStrength.WEAK


def test_name_resolution(figure3_scenario):
    assert resolve_fqdn(figure3_scenario, "windows10-a.lab.local") == "192.168.56.102"
    assert resolve_ip(figure3_scenario, "192.168.56.102") == "windows10-a.lab.local"
    assert host_for_fqdn(figure3_scenario, "dns.lab.local").name == "dns-server"
    with pytest.raises(UnknownName):
        resolve_fqdn(figure3_scenario, "ghost.lab.local")


def test_missing_dns_record_rejected():
    doc = _doc()
    del doc["dns"]["windows10-a.lab.local"]
    with pytest.raises(IntegrityError, match="no record"):
        scenario_from_document(doc)


def test_mismatched_dns_record_rejected():
    doc = _doc()
    doc["dns"]["windows10-a.lab.local"] = "192.168.56.99"
    with pytest.raises(IntegrityError, match="dns record"):
        scenario_from_document(doc)


def test_duplicate_fqdn_rejected():
    doc = _doc()
    doc["hosts"]["dns-server"]["fqdn"] = "windows10-a.lab.local"
    with pytest.raises(IntegrityError, match="share fqdn"):
        scenario_from_document(doc)


def test_duplicate_ip_rejected():
    doc = _doc()
    doc["hosts"]["dns-server"]["ip"] = "192.168.56.102"
    with pytest.raises(IntegrityError, match="share ip"):
        scenario_from_document(doc)


def test_unknown_c2_host_rejected():
    doc = _doc()
    doc["c2_address"] = "not-a-host"
    with pytest.raises(IntegrityError, match="c2_address"):
        scenario_from_document(doc)


def test_unknown_service_state_rejected():
    doc = _doc()
    doc["hosts"]["dns-server"]["services"]["smb_share"] = "wide_open"
    with pytest.raises(ParseError, match="SmbShareState"):
        scenario_from_document(doc)


def test_missing_document_key_rejected():
    doc = _doc()
    del doc["dns"]
    with pytest.raises(ParseError, match="dns"):
        scenario_from_document(doc)


# -- rule table -------------------------------------------------------------

FACTS = {"remote.host.fqdn": "box.lab.local", "file.dropped.path": DROPPED_PAYLOAD_PATH}


def test_rule_table_covers_expected_pairs():
    pairs = covered_pairs()
    assert (Channel.LOCAL, ActionKind.DISCOVER) in pairs
    assert (Channel.SMB, ActionKind.COPY_FILE) in pairs
    assert (Channel.WMI, ActionKind.START_PROCESS) in pairs
    assert (Channel.WINRM, ActionKind.START_PROCESS) in pairs
    assert (Channel.SCP, ActionKind.COPY_FILE) in pairs
    assert len(pairs) == 5
    assert not is_covered(Channel.SMB, ActionKind.START_PROCESS)
    with pytest.raises(UncoveredRule):
        evaluate_outcome(Channel.SMB, ActionKind.START_PROCESS, make_host(), FACTS)


def test_discover_always_succeeds_and_produces_identity():
    host = make_host()
    outcome = evaluate_outcome(Channel.LOCAL, ActionKind.DISCOVER, host, {})
    assert outcome.success
    assert outcome.produced == {
        "remote.host.ip": "10.0.0.9",
        "remote.host.fqdn": "box.lab.local",
    }


def test_smb_copy_rules():
    ok = evaluate_outcome(
        Channel.SMB, ActionKind.COPY_FILE, make_host(smb="world_writable"), FACTS
    )
    assert ok.success and ok.produced == {"file.dropped.path": DROPPED_PAYLOAD_PATH}
    hardened = evaluate_outcome(
        Channel.SMB, ActionKind.COPY_FILE, make_host(smb="hardened"), FACTS
    )
    assert not hardened.success and hardened.cause == FailureCause.SERVICE_HARDENED
    absent = evaluate_outcome(Channel.SMB, ActionKind.COPY_FILE, make_host(smb="absent"), FACTS)
    assert not absent.success and absent.cause == FailureCause.SERVICE_ABSENT


def test_wmi_start_rules():
    ok = evaluate_outcome(
        Channel.WMI, ActionKind.START_PROCESS, make_host(wmi="enabled", password="weak"), FACTS
    )
    assert ok.success
    disabled = evaluate_outcome(
        Channel.WMI, ActionKind.START_PROCESS, make_host(wmi="disabled", password="weak"), FACTS
    )
    assert disabled.cause == FailureCause.SERVICE_ABSENT
    no_fact = evaluate_outcome(
        Channel.WMI, ActionKind.START_PROCESS, make_host(wmi="enabled", password="weak"), {}
    )
    assert no_fact.cause == FailureCause.MISSING_FACT
    strong = evaluate_outcome(
        Channel.WMI, ActionKind.START_PROCESS, make_host(wmi="enabled", password="strong"), FACTS
    )
    assert strong.cause == FailureCause.MISSING_CREDENTIAL
    # a disabled service wins over a missing fact, which wins over credentials
    both = evaluate_outcome(
        Channel.WMI, ActionKind.START_PROCESS, make_host(wmi="disabled", password="strong"), {}
    )
    assert both.cause == FailureCause.SERVICE_ABSENT


def test_winrm_start_rules():
    ok = evaluate_outcome(
        Channel.WINRM, ActionKind.START_PROCESS, make_host(winrm="misconfigured"), FACTS
    )
    assert ok.success
    hardened = evaluate_outcome(
        Channel.WINRM, ActionKind.START_PROCESS, make_host(winrm="hardened"), FACTS
    )
    assert hardened.cause == FailureCause.SERVICE_HARDENED
    absent = evaluate_outcome(
        Channel.WINRM, ActionKind.START_PROCESS, make_host(winrm="absent"), FACTS
    )
    assert absent.cause == FailureCause.SERVICE_ABSENT


def test_scp_copy_requires_credentials_before_anything_else():
    # no password fact and no known keys: stopped for credentials even when
    # the service does not listen at all
    no_creds = evaluate_outcome(
        Channel.SCP, ActionKind.COPY_FILE, make_host(scp="absent"), FACTS
    )
    assert no_creds.cause == FailureCause.MISSING_CREDENTIAL
    # known keys but nothing listening: now the absence shows
    keys_absent = evaluate_outcome(
        Channel.SCP, ActionKind.COPY_FILE, make_host(scp="absent", keys=True), FACTS
    )
    assert keys_absent.cause == FailureCause.SERVICE_ABSENT
    # keys and a listener
    ok = evaluate_outcome(
        Channel.SCP, ActionKind.COPY_FILE, make_host(scp="key_only", keys=True), FACTS
    )
    assert ok.success and ok.produced == {"file.dropped.path": DROPPED_PAYLOAD_PATH}
    # a harvested password fact also counts as a credential
    with_pw = evaluate_outcome(
        Channel.SCP, ActionKind.COPY_FILE, make_host(scp="password_enabled"),
        dict(FACTS, **{"host.user.password": "hunter2"}),
    )
    assert with_pw.success


def test_figure3_target_outcomes(figure3_scenario):
    """The lateral movement picture on the unhardened target, frozen."""
    target = figure3_scenario.hosts["Windows10_A"]
    facts = {"remote.host.fqdn": target.fqdn, "file.dropped.path": DROPPED_PAYLOAD_PATH}
    assert evaluate_outcome(Channel.SMB, ActionKind.COPY_FILE, target, facts).success
    assert evaluate_outcome(Channel.WMI, ActionKind.START_PROCESS, target, facts).success
    assert evaluate_outcome(Channel.WINRM, ActionKind.START_PROCESS, target, facts).success
    scp = evaluate_outcome(Channel.SCP, ActionKind.COPY_FILE, target, facts)
    assert not scp.success and scp.cause == FailureCause.MISSING_CREDENTIAL


def test_hardened_target_outcomes(hardened_scenario):
    target = hardened_scenario.hosts["Windows10_A"]
    facts = {"remote.host.fqdn": target.fqdn, "file.dropped.path": DROPPED_PAYLOAD_PATH}
    for channel, action, cause in [
        (Channel.SMB, ActionKind.COPY_FILE, FailureCause.SERVICE_HARDENED),
        (Channel.WMI, ActionKind.START_PROCESS, FailureCause.SERVICE_ABSENT),
        (Channel.WINRM, ActionKind.START_PROCESS, FailureCause.SERVICE_HARDENED),
        (Channel.SCP, ActionKind.COPY_FILE, FailureCause.MISSING_CREDENTIAL),
    ]:
        outcome = evaluate_outcome(channel, action, target, facts)
        assert not outcome.success
        assert outcome.cause == cause


def test_rules_are_pure():
    host = make_host(smb="world_writable")
    before = copy.deepcopy(host)
    facts = dict(FACTS)
    evaluate_outcome(Channel.SMB, ActionKind.COPY_FILE, host, facts)
    assert host == before
    assert facts == FACTS


def test_stdout_is_deterministic():
    a = evaluate_outcome(Channel.SMB, ActionKind.COPY_FILE, make_host(smb="absent"), FACTS)
    b = evaluate_outcome(Channel.SMB, ActionKind.COPY_FILE, make_host(smb="absent"), FACTS)
    assert a.stdout == b.stdout != ""
