"""Attack tree generation and export.

The tree has the objective at the root and one branch per matching adversary
profile; branch nodes are the profile's abilities in order, with the channel
each would use on the chosen platform. Node ids are stable:
``<profile_id>/<ordinal>``.
"""

import json
import time
from dataclasses import dataclass, field

from .errors import ParseError, UnknownBranch
from .ttp_catalog import (
    Catalog,
    Channel,
    Platform,
    Tactic,
    catalog_version,
    profiles_for_objective,
    resolve_executor,
)


@dataclass(frozen=True)
class Node:
    ability_id: str
    technique_id: str
    tactic: Tactic
    channel: Channel


@dataclass(frozen=True)
class Branch:
    profile_id: str
    profile_name: str
    nodes: tuple[Node, ...]


@dataclass(frozen=True)
class AttackTree:
    objective: Tactic
    platform: Platform
    branches: tuple[Branch, ...]
    catalog_version: str
    generated_at: int = field(compare=False, default=0)

    @property
    def is_empty(self) -> bool:
        return not self.branches


def generate_attack_tree(catalog: Catalog, objective: Tactic, platform: Platform) -> AttackTree:
    """Pure projection of the catalog onto one objective and platform."""
    branches = []
    for profile in profiles_for_objective(catalog, objective, platform):
        nodes = []
        for aid in profile.ability_ids:
            ability = catalog.abilities[aid]
            executor = resolve_executor(ability, platform)
            nodes.append(
                Node(
                    ability_id=aid,
                    technique_id=ability.technique_id,
                    tactic=ability.tactic,
                    channel=executor.channel,
                )
            )
        branches.append(
            Branch(profile_id=profile.id, profile_name=profile.name, nodes=tuple(nodes))
        )
    return AttackTree(
        objective=objective,
        platform=platform,
        branches=tuple(branches),
        catalog_version=catalog_version(catalog),
        generated_at=int(time.time()),
    )


def tree_to_document(tree: AttackTree) -> dict:
    return {
        "objective": tree.objective.value,
        "platform": tree.platform.value,
        "empty": tree.is_empty,
        "catalog_version": tree.catalog_version,
        "generated_at": tree.generated_at,
        "branches": [
            {
                "profile_id": b.profile_id,
                "profile_name": b.profile_name,
                "nodes": [
                    {
                        "id": f"{b.profile_id}/{i}",
                        "ability_id": n.ability_id,
                        "technique_id": n.technique_id,
                        "tactic": n.tactic.value,
                        "channel": n.channel.value,
                    }
                    for i, n in enumerate(b.nodes)
                ],
            }
            for b in tree.branches
        ],
    }


def tree_from_document(doc: dict) -> AttackTree:
    try:
        branches = tuple(
            Branch(
                profile_id=str(b["profile_id"]),
                profile_name=str(b["profile_name"]),
                nodes=tuple(
                    Node(
                        ability_id=str(n["ability_id"]),
                        technique_id=str(n["technique_id"]),
                        tactic=Tactic(n["tactic"]),
                        channel=Channel(n["channel"]),
                    )
                    for n in b["nodes"]
                ),
            )
            for b in doc["branches"]
        )
        return AttackTree(
            objective=Tactic(doc["objective"]),
            platform=Platform(doc["platform"]),
            branches=branches,
            catalog_version=str(doc["catalog_version"]),
            generated_at=int(doc.get("generated_at", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed attack tree document: {exc}") from None


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_tree(tree: AttackTree, fmt: str = "json") -> str:
    """Serialize the tree; fmt is "json" or "dot"."""
    if fmt == "json":
        return json.dumps(tree_to_document(tree), indent=2, sort_keys=True)
    if fmt == "dot":
        lines = ["digraph attack_tree {", "  rankdir=TB;"]
        root = f"objective: {tree.objective.value}"
        lines.append(f'  "root" [label="{_dot_escape(root)}", shape=box];')
        for branch in tree.branches:
            prev = "root"
            for i, node in enumerate(branch.nodes):
                node_id = f"{branch.profile_id}/{i}"
                label = f"{node.ability_id}\\n{node.technique_id} via {node.channel.value}"
                lines.append(f'  "{_dot_escape(node_id)}" [label="{_dot_escape(label)}"];')
                lines.append(f'  "{_dot_escape(prev)}" -> "{_dot_escape(node_id)}";')
                prev = node_id
        lines.append("}")
        return "\n".join(lines) + "\n"
    raise ParseError(f"unknown tree export format {fmt!r}")


def select_branch(tree: AttackTree, selector: str | int) -> Branch:
    """Pick a branch by profile id or by zero-based index."""
    if isinstance(selector, int):
        if 0 <= selector < len(tree.branches):
            return tree.branches[selector]
        raise UnknownBranch(f"branch index {selector} out of range")
    for branch in tree.branches:
        if branch.profile_id == selector:
            return branch
    raise UnknownBranch(f"no branch for profile {selector!r}")
