"""Fact names and command-template placeholders.

Facts are lowercase dotted names (``remote.host.fqdn``); command templates
reference them as ``#{fact.name}``.
"""

import re

FACT_NAME_RE = re.compile(r"^[a-z0-9_]+(\.[a-z0-9_]+)*$")
PLACEHOLDER_RE = re.compile(r"#\{([^{}]+)\}")

# Well-known fact names used by the shipped catalog and the outcome rules.
TARGET_HOST_NAME = "target.host.name"
REMOTE_HOST_IP = "remote.host.ip"
REMOTE_HOST_FQDN = "remote.host.fqdn"
FILE_DROPPED_PATH = "file.dropped.path"
HOST_USER_PASSWORD = "host.user.password"


def is_valid_fact_name(name: str) -> bool:
    return bool(FACT_NAME_RE.match(name))


def placeholders(template: str) -> list[str]:
    """All placeholder names in a command template, in order of appearance."""
    return PLACEHOLDER_RE.findall(template)


def missing_facts(template: str, facts: dict[str, str]) -> list[str]:
    """Placeholder names that have no value in ``facts`` (deduplicated, ordered)."""
    seen = []
    for name in placeholders(template):
        if name not in facts and name not in seen:
            seen.append(name)
    return seen


def render_template(template: str, facts: dict[str, str]) -> str:
    """Substitute every placeholder; callers must check missing_facts first."""
    return PLACEHOLDER_RE.sub(lambda m: str(facts.get(m.group(1), m.group(0))), template)
