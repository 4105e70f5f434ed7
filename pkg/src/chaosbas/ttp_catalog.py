"""Ability and adversary-profile catalog.

The catalog is a single JSON document with two top-level keys, ``abilities``
and ``profiles``. Abilities describe a single technique with one executor per
platform; profiles are ordered ability sequences with a set of objectives.
The catalog is immutable after load.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import IntegrityError, NoExecutorForPlatform, ParseError
from .facts import is_valid_fact_name, placeholders

logger = logging.getLogger(__name__)


class Tactic(str, Enum):
    DISCOVERY = "discovery"
    LATERAL_MOVEMENT = "lateral_movement"
    EXECUTION = "execution"
    EXFILTRATION = "exfiltration"
    PRIVILEGE_ESCALATION = "privilege_escalation"
    COLLECTION = "collection"


class Platform(str, Enum):
    WINDOWS = "windows"
    LINUX = "linux"


class Channel(str, Enum):
    """Transport an executor uses to act on a remote (or local) host."""

    SMB = "smb"
    WINRM = "winrm"
    WMI = "wmi"
    SCP = "scp"
    SSH = "ssh"
    LOCAL = "local"


class ActionKind(str, Enum):
    """What kind of act an executor performs, for outcome evaluation."""

    DISCOVER = "discover"
    COPY_FILE = "copy_file"
    START_PROCESS = "start_process"


class FactSource(str, Enum):
    PRIOR_ABILITY = "prior_ability"
    SCENARIO = "scenario"


@dataclass(frozen=True)
class FactRequirement:
    fact: str
    source: FactSource


@dataclass(frozen=True)
class Executor:
    """Binds an ability to a platform: the command it runs and how."""

    platform: Platform
    channel: Channel
    action: ActionKind
    command: str
    timeout: int


@dataclass(frozen=True)
class Ability:
    id: str
    name: str
    tactic: Tactic
    technique_id: str
    executors: tuple[Executor, ...]
    requires: tuple[FactRequirement, ...]
    produces: tuple[str, ...]


@dataclass(frozen=True)
class AdversaryProfile:
    id: str
    name: str
    objectives: frozenset[Tactic]
    ability_ids: tuple[str, ...]


@dataclass(frozen=True)
class Catalog:
    abilities: dict[str, Ability]
    profiles: dict[str, AdversaryProfile]
    source_path: str = field(compare=False, default="")


def _enum(cls, raw, where: str):
    try:
        return cls(raw)
    except ValueError:
        raise ParseError(f"{where}: unknown {cls.__name__} value {raw!r}") from None


def _parse_executor(raw: dict, ability_id: str) -> Executor:
    if not isinstance(raw, dict):
        raise ParseError(f"ability {ability_id}: executor must be an object")
    try:
        timeout = int(raw["timeout"])
        ex = Executor(
            platform=_enum(Platform, raw["platform"], f"ability {ability_id}"),
            channel=_enum(Channel, raw["channel"], f"ability {ability_id}"),
            action=_enum(ActionKind, raw["action"], f"ability {ability_id}"),
            command=str(raw["command"]),
            timeout=timeout,
        )
    except KeyError as exc:
        raise ParseError(f"ability {ability_id}: executor missing field {exc}") from None
    if ex.timeout <= 0:
        raise IntegrityError(f"ability {ability_id}: executor timeout must be positive")
    return ex


def _parse_ability(raw: dict) -> Ability:
    if not isinstance(raw, dict) or "id" not in raw:
        raise ParseError("ability entry missing id")
    aid = str(raw["id"])
    try:
        executors = tuple(_parse_executor(e, aid) for e in raw["executors"])
        requires = tuple(
            FactRequirement(str(r["fact"]), _enum(FactSource, r["source"], f"ability {aid}"))
            for r in raw.get("requires", [])
        )
        ability = Ability(
            id=aid,
            name=str(raw["name"]),
            tactic=_enum(Tactic, raw["tactic"], f"ability {aid}"),
            technique_id=str(raw["technique_id"]),
            executors=executors,
            requires=requires,
            produces=tuple(str(p) for p in raw.get("produces", [])),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"ability {aid}: malformed entry ({exc})") from None
    _check_ability(ability)
    return ability


def _check_ability(ability: Ability) -> None:
    if not ability.executors:
        raise IntegrityError(f"ability {ability.id}: needs at least one executor")
    for fact in [r.fact for r in ability.requires] + list(ability.produces):
        if not is_valid_fact_name(fact):
            raise IntegrityError(f"ability {ability.id}: bad fact name {fact!r}")
    declared = {r.fact for r in ability.requires}
    for ex in ability.executors:
        for name in placeholders(ex.command):
            if name not in declared:
                raise IntegrityError(
                    f"ability {ability.id}: placeholder #{{{name}}} not in requires"
                )


def _parse_profile(raw: dict) -> AdversaryProfile:
    if not isinstance(raw, dict) or "id" not in raw:
        raise ParseError("profile entry missing id")
    pid = str(raw["id"])
    try:
        profile = AdversaryProfile(
            id=pid,
            name=str(raw["name"]),
            objectives=frozenset(_enum(Tactic, o, f"profile {pid}") for o in raw["objectives"]),
            ability_ids=tuple(str(a) for a in raw["abilities"]),
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"profile {pid}: malformed entry ({exc})") from None
    if not profile.ability_ids:
        raise IntegrityError(f"profile {pid}: ability list must not be empty")
    return profile


def catalog_from_document(doc: dict, source_path: str = "") -> Catalog:
    """Build and validate a Catalog from an already-parsed JSON document."""
    if not isinstance(doc, dict) or "abilities" not in doc or "profiles" not in doc:
        raise ParseError("catalog document needs top-level 'abilities' and 'profiles'")
    abilities: dict[str, Ability] = {}
    for raw in doc["abilities"]:
        ability = _parse_ability(raw)
        if ability.id in abilities:
            raise IntegrityError(f"duplicate ability id {ability.id}")
        abilities[ability.id] = ability
    profiles: dict[str, AdversaryProfile] = {}
    for raw in doc["profiles"]:
        profile = _parse_profile(raw)
        if profile.id in profiles:
            raise IntegrityError(f"duplicate profile id {profile.id}")
        for aid in profile.ability_ids:
            if aid not in abilities:
                raise IntegrityError(f"profile {profile.id}: unknown ability {aid}")
        profiles[profile.id] = profile
    catalog = Catalog(
        abilities=dict(sorted(abilities.items())),
        profiles=dict(sorted(profiles.items())),
        source_path=source_path,
    )
    logger.debug(
        "catalog loaded: %d abilities, %d profiles", len(abilities), len(profiles)
    )
    return catalog


def load_catalog(path: str | Path) -> Catalog:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ParseError(f"cannot read catalog {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog {path} is not valid JSON: {exc}") from None
    return catalog_from_document(doc, source_path=str(path))


def executor_to_dict(ex: Executor) -> dict:
    return {
        "platform": ex.platform.value,
        "channel": ex.channel.value,
        "action": ex.action.value,
        "command": ex.command,
        "timeout": ex.timeout,
    }


def ability_to_dict(ability: Ability) -> dict:
    return {
        "id": ability.id,
        "name": ability.name,
        "tactic": ability.tactic.value,
        "technique_id": ability.technique_id,
        "requires": [{"fact": r.fact, "source": r.source.value} for r in ability.requires],
        "produces": list(ability.produces),
        "executors": [executor_to_dict(e) for e in ability.executors],
    }


def profile_to_dict(profile: AdversaryProfile) -> dict:
    return {
        "id": profile.id,
        "name": profile.name,
        "objectives": sorted(o.value for o in profile.objectives),
        "abilities": list(profile.ability_ids),
    }


def catalog_to_document(catalog: Catalog) -> dict:
    return {
        "abilities": [ability_to_dict(a) for a in catalog.abilities.values()],
        "profiles": [profile_to_dict(p) for p in catalog.profiles.values()],
    }


def catalog_version(catalog: Catalog) -> str:
    """Stable content hash, embedded in trees and reports for replay checks."""
    canonical = json.dumps(catalog_to_document(catalog), sort_keys=True)
    return "sha256:" + hashlib.sha256(canonical.encode()).hexdigest()[:12]


def profiles_for_objective(
    catalog: Catalog, objective: Tactic, platform: Platform
) -> list[AdversaryProfile]:
    """Profiles pursuing ``objective`` whose every ability can run on ``platform``.

    Result is ordered by profile id and is a pure function of the arguments.
    """
    out = []
    for profile in catalog.profiles.values():
        if objective not in profile.objectives:
            continue
        runnable = all(
            any(ex.platform == platform for ex in catalog.abilities[aid].executors)
            for aid in profile.ability_ids
        )
        if runnable:
            out.append(profile)
    return out


def resolve_executor(ability: Ability, platform: Platform) -> Executor:
    """First executor matching the platform, in declaration order."""
    for ex in ability.executors:
        if ex.platform == platform:
            return ex
    raise NoExecutorForPlatform(f"ability {ability.id} has no executor for {platform.value}")
