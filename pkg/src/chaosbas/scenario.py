"""Simulated network scenario and the declarative outcome rule table.

A scenario is a small set of hosts with service flags and credential posture,
plus a DNS map. Whether an attack step succeeds is decided here, by a total
rule table keyed on (channel, action kind): the scenario is the oracle, no
commands ever run anywhere.
"""

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import IntegrityError, ParseError, UncoveredRule, UnknownName
from .facts import FILE_DROPPED_PATH, HOST_USER_PASSWORD, REMOTE_HOST_FQDN, REMOTE_HOST_IP
from .ttp_catalog import ActionKind, Channel, Platform

logger = logging.getLogger(__name__)

RULE_TABLE_VERSION = "rules-v1"

# Path the simulated payload lands at after a successful copy step.
DROPPED_PAYLOAD_PATH = "C:\\Users\\Public\\sandcat.exe"


class SmbShareState(str, Enum):
    ABSENT = "absent"
    HARDENED = "hardened"
    WORLD_WRITABLE = "world_writable"


class WinRmState(str, Enum):
    ABSENT = "absent"
    HARDENED = "hardened"
    MISCONFIGURED = "misconfigured"


class WmiRemoteState(str, Enum):
    DISABLED = "disabled"
    ENABLED = "enabled"


class ScpState(str, Enum):
    ABSENT = "absent"
    KEY_ONLY = "key_only"
    PASSWORD_ENABLED = "password_enabled"


class PasswordStrength(str, Enum):
    NONE = "none"
    WEAK = "weak"
    STRONG = "strong"


class FailureCause(str, Enum):
    MISSING_CREDENTIAL = "missing_credential"
    SERVICE_HARDENED = "service_hardened"
    SERVICE_ABSENT = "service_absent"
    MISSING_FACT = "missing_fact"


@dataclass(frozen=True)
class ServiceFlags:
    smb_share: SmbShareState
    winrm: WinRmState
    wmi_remote: WmiRemoteState
    scp: ScpState


@dataclass(frozen=True)
class CredentialStore:
    password_strength: PasswordStrength
    ssh_keys_known_to_attacker: bool


@dataclass
class HostModel:
    name: str
    fqdn: str
    ip: str
    platform: Platform
    services: ServiceFlags
    credentials: CredentialStore
    compromised: bool = False


@dataclass
class Scenario:
    hosts: dict[str, HostModel]
    dns: dict[str, str]
    c2_address: str
    seed_agent_host: str
    source_path: str = field(compare=False, default="")


@dataclass(frozen=True)
class Outcome:
    """Verdict of one simulated attack step."""

    success: bool
    produced: dict[str, str] = field(default_factory=dict)
    cause: FailureCause | None = None
    stdout: str = ""


def _enum(cls, raw, where: str):
    try:
        return cls(raw)
    except ValueError:
        raise ParseError(f"{where}: unknown {cls.__name__} value {raw!r}") from None


def _parse_host(name: str, raw: dict) -> HostModel:
    try:
        services = raw["services"]
        creds = raw["credentials"]
        return HostModel(
            name=name,
            fqdn=str(raw["fqdn"]),
            ip=str(raw["ip"]),
            platform=_enum(Platform, raw["platform"], f"host {name}"),
            services=ServiceFlags(
                smb_share=_enum(SmbShareState, services["smb_share"], f"host {name}"),
                winrm=_enum(WinRmState, services["winrm"], f"host {name}"),
                wmi_remote=_enum(WmiRemoteState, services["wmi_remote"], f"host {name}"),
                scp=_enum(ScpState, services["scp"], f"host {name}"),
            ),
            credentials=CredentialStore(
                password_strength=_enum(
                    PasswordStrength, creds["password_strength"], f"host {name}"
                ),
                ssh_keys_known_to_attacker=bool(creds["ssh_keys_known_to_attacker"]),
            ),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"host {name}: malformed entry ({exc})") from None


def scenario_from_document(doc: dict, source_path: str = "") -> Scenario:
    if not isinstance(doc, dict):
        raise ParseError("scenario document must be an object")
    for key in ("hosts", "dns", "c2_address", "seed_agent_host"):
        if key not in doc:
            raise ParseError(f"scenario document missing key {key!r}")
    hosts = {
        str(name): _parse_host(str(name), raw) for name, raw in sorted(doc["hosts"].items())
    }
    if not hosts:
        raise IntegrityError("scenario needs at least one host")
    dns = {str(k): str(v) for k, v in sorted(doc["dns"].items())}
    scenario = Scenario(
        hosts=hosts,
        dns=dns,
        c2_address=str(doc["c2_address"]),
        seed_agent_host=str(doc["seed_agent_host"]),
        source_path=source_path,
    )
    _check_scenario(scenario)
    scenario.hosts[scenario.seed_agent_host].compromised = True
    return scenario


def _check_scenario(scenario: Scenario) -> None:
    seen_fqdn: dict[str, str] = {}
    seen_ip: dict[str, str] = {}
    for host in scenario.hosts.values():
        if host.fqdn in seen_fqdn:
            raise IntegrityError(f"hosts {seen_fqdn[host.fqdn]} and {host.name} share fqdn")
        if host.ip in seen_ip:
            raise IntegrityError(f"hosts {seen_ip[host.ip]} and {host.name} share ip")
        seen_fqdn[host.fqdn] = host.name
        seen_ip[host.ip] = host.name
        record = scenario.dns.get(host.fqdn)
        if record is None:
            raise IntegrityError(f"dns map has no record for {host.fqdn}")
        if record != host.ip:
            raise IntegrityError(f"dns record for {host.fqdn} is {record}, host says {host.ip}")
    for ref, what in ((scenario.c2_address, "c2_address"), (scenario.seed_agent_host, "seed_agent_host")):
        if ref not in scenario.hosts:
            raise IntegrityError(f"{what} {ref!r} is not a host name")


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario {path} is not valid JSON: {exc}") from None
    return scenario_from_document(doc, source_path=str(path))


def host_to_dict(host: HostModel) -> dict:
    return {
        "fqdn": host.fqdn,
        "ip": host.ip,
        "platform": host.platform.value,
        "services": {
            "smb_share": host.services.smb_share.value,
            "winrm": host.services.winrm.value,
            "wmi_remote": host.services.wmi_remote.value,
            "scp": host.services.scp.value,
        },
        "credentials": {
            "password_strength": host.credentials.password_strength.value,
            "ssh_keys_known_to_attacker": host.credentials.ssh_keys_known_to_attacker,
        },
    }


def scenario_to_document(scenario: Scenario) -> dict:
    return {
        "hosts": {name: host_to_dict(h) for name, h in sorted(scenario.hosts.items())},
        "dns": dict(sorted(scenario.dns.items())),
        "c2_address": scenario.c2_address,
        "seed_agent_host": scenario.seed_agent_host,
    }


def resolve_fqdn(scenario: Scenario, fqdn: str) -> str:
    """Forward DNS lookup within the scenario."""
    try:
        return scenario.dns[fqdn]
    except KeyError:
        raise UnknownName(f"no dns record for {fqdn!r}") from None


def resolve_ip(scenario: Scenario, ip: str) -> str:
    """Reverse DNS lookup within the scenario (first match in sorted record order)."""
    for fqdn, record_ip in scenario.dns.items():
        if record_ip == ip:
            return fqdn
    raise UnknownName(f"no reverse dns record for {ip!r}")


def host_for_fqdn(scenario: Scenario, fqdn: str) -> HostModel | None:
    for host in scenario.hosts.values():
        if host.fqdn == fqdn:
            return host
    return None


# ---------------------------------------------------------------------------
# Outcome rules
#
# Each rule decides one (channel, action) pair. Rules are pure: same flags,
# credentials and facts always give the same Outcome. Failure causes are
# assigned in a fixed priority per rule, documented inline, so that outcomes
# are reproducible and reports can attribute every stop to one cause.
# ---------------------------------------------------------------------------


def _rule_local_discover(target: HostModel, facts: dict[str, str]) -> Outcome:
    # Network survey of the reachable neighborhood. Always succeeds.
    produced = {REMOTE_HOST_IP: target.ip, REMOTE_HOST_FQDN: target.fqdn}
    return Outcome(True, produced, stdout=f"{target.ip}  {target.fqdn}  dynamic")


def _rule_smb_copy(target: HostModel, facts: dict[str, str]) -> Outcome:
    # Priority: absent share, then hardened share, then success.
    state = target.services.smb_share
    if state == SmbShareState.ABSENT:
        return Outcome(False, cause=FailureCause.SERVICE_ABSENT, stdout="The network path was not found.")
    if state == SmbShareState.HARDENED:
        return Outcome(False, cause=FailureCause.SERVICE_HARDENED, stdout="Access is denied.")
    return Outcome(
        True, {FILE_DROPPED_PATH: DROPPED_PAYLOAD_PATH}, stdout="        1 file(s) copied."
    )


def _rule_wmi_start(target: HostModel, facts: dict[str, str]) -> Outcome:
    # Priority: service disabled, then missing host name, then credentials.
    if target.services.wmi_remote == WmiRemoteState.DISABLED:
        return Outcome(False, cause=FailureCause.SERVICE_ABSENT, stdout="The RPC server is unavailable.")
    if REMOTE_HOST_FQDN not in facts:
        return Outcome(
            False, cause=FailureCause.MISSING_FACT,
            stdout=f"required fact unavailable: {REMOTE_HOST_FQDN}",
        )
    if target.credentials.password_strength != PasswordStrength.WEAK:
        return Outcome(False, cause=FailureCause.MISSING_CREDENTIAL, stdout="Access is denied.")
    return Outcome(True, stdout="ProcessId = 4242;\nReturnValue = 0;")


def _rule_winrm_start(target: HostModel, facts: dict[str, str]) -> Outcome:
    # Priority: absent listener, then hardened listener, then success.
    state = target.services.winrm
    if state == WinRmState.ABSENT:
        return Outcome(False, cause=FailureCause.SERVICE_ABSENT, stdout="The client cannot connect.")
    if state == WinRmState.HARDENED:
        return Outcome(False, cause=FailureCause.SERVICE_HARDENED, stdout="Access is denied.")
    return Outcome(True, stdout="remote process started")


def _rule_scp_copy(target: HostModel, facts: dict[str, str]) -> Outcome:
    # Credential check comes first: an attacker with nothing to authenticate
    # with is stopped for lack of credentials whether or not the service
    # listens, which is how the stop is attributed in reports.
    has_credential = (
        HOST_USER_PASSWORD in facts or target.credentials.ssh_keys_known_to_attacker
    )
    if not has_credential:
        return Outcome(False, cause=FailureCause.MISSING_CREDENTIAL, stdout="Permission denied (publickey,password).")
    if target.services.scp == ScpState.ABSENT:
        return Outcome(False, cause=FailureCause.SERVICE_ABSENT, stdout="Connection refused")
    return Outcome(
        True, {FILE_DROPPED_PATH: DROPPED_PAYLOAD_PATH}, stdout="sandcat.exe        100%"
    )


_RULES = {
    (Channel.LOCAL, ActionKind.DISCOVER): _rule_local_discover,
    (Channel.SMB, ActionKind.COPY_FILE): _rule_smb_copy,
    (Channel.WMI, ActionKind.START_PROCESS): _rule_wmi_start,
    (Channel.WINRM, ActionKind.START_PROCESS): _rule_winrm_start,
    (Channel.SCP, ActionKind.COPY_FILE): _rule_scp_copy,
}


def covered_pairs() -> list[tuple[Channel, ActionKind]]:
    return sorted(_RULES.keys(), key=lambda p: (p[0].value, p[1].value))


def is_covered(channel: Channel, action: ActionKind) -> bool:
    return (channel, action) in _RULES


def evaluate_outcome(
    channel: Channel, action: ActionKind, target: HostModel, facts: dict[str, str]
) -> Outcome:
    """Decide one attack step against one host. Pure, no side effects."""
    rule = _RULES.get((channel, action))
    if rule is None:
        raise UncoveredRule(
            f"no outcome rule for channel={channel.value} action={action.value}"
        )
    return rule(target, facts)
