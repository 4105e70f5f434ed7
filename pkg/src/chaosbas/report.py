"""Report rendering: canonical JSON, Markdown, CSV rows, and figures.

The JSON form is the machine-readable record and is byte-stable for a given
seed and configuration once the wall-clock fields are stripped. Markdown is
the human summary, the CSV holds one row per attack-tree node, and the two
PNG figures visualize the tree and the branch outcomes.
"""

import copy
import csv
import io
import json
import logging
import os

from .errors import ParseError
from .orchestrator import (
    REPORT_TIMESTAMP_KEYS,
    AbortCause,
    BranchStatus,
    ExperimentReport,
    report_to_document,
)
from .ttp_catalog import Channel

logger = logging.getLogger(__name__)

# Remediation text keyed by why a branch stopped.
_ABORT_REMEDIATIONS = {
    AbortCause.MISSING_CREDENTIAL: (
        "Branch stopped for lack of credentials; enforce a strong credential "
        "policy so this remains true (rotation, no shared local passwords)."
    ),
    AbortCause.SERVICE_HARDENED: "Service hardening held; keep the current configuration under change control.",
    AbortCause.SERVICE_ABSENT: "The probed service is not exposed; no action needed.",
    AbortCause.MISSING_FACT: "The attack could not find its target; keep discovery surfaces (DNS, ARP) minimal.",
    AbortCause.TIMEOUT: "A link never came back inside its window; check agent beacon health before trusting this result.",
    AbortCause.INFRASTRUCTURE: "The C2 API failed mid-branch; re-run once the infrastructure is stable.",
    AbortCause.AGENT_UNTRUSTED: "The experiment agent lost trust mid-run; re-run with a healthy beacon before drawing conclusions.",
    AbortCause.API_UNRESPONSIVE: "The C2 API stopped answering; re-run once the infrastructure is stable.",
    AbortCause.LINK_STUCK: "A link sat in collecting past its executor timeout; investigate the agent before re-running.",
}

# Remediation text keyed by the channel a *successful* hostile link used.
_SUCCESS_REMEDIATIONS = {
    Channel.SMB: "Restrict SMB share permissions; a world-writable share let a payload land.",
    Channel.WMI: "Remote WMI executed a payload; enforce a strong credential policy and restrict WMI to administrative subnets.",
    Channel.WINRM: "Harden the WinRM configuration; the current settings allowed remote execution.",
    Channel.SCP: "SCP accepted attacker credentials or keys; rotate credentials and audit authorized_keys.",
    Channel.SSH: "SSH accepted attacker credentials or keys; rotate credentials and audit authorized_keys.",
    Channel.LOCAL: "Local discovery succeeded, as expected for a compromised host; minimize what a single host can enumerate.",
}


def _strip_timestamps(node):
    if isinstance(node, dict):
        return {
            key: _strip_timestamps(value)
            for key, value in node.items()
            if key not in REPORT_TIMESTAMP_KEYS
        }
    if isinstance(node, list):
        return [_strip_timestamps(item) for item in node]
    return node


def comparable_document(doc: dict) -> dict:
    """Deep copy of a report document with wall-clock fields removed.

    Timestamp keys are dropped wherever they appear (the run timings and the
    tree's generation stamp); everything left is seed-deterministic.
    """
    return _strip_timestamps(copy.deepcopy(doc))


def report_json(report: ExperimentReport) -> str:
    return json.dumps(report_to_document(report), indent=2, sort_keys=True) + "\n"


def _node_channel_index(report: ExperimentReport) -> dict[str, Channel]:
    index: dict[str, Channel] = {}
    for branch in report.tree.branches:
        for node in branch.nodes:
            index.setdefault(node.ability_id, node.channel)
    return index


def remediations_for(report: ExperimentReport) -> list[str]:
    """Deduplicated, ordered remediation list derived from the outcomes."""
    channel_of = _node_channel_index(report)
    items: list[str] = []
    for outcome in report.outcomes:
        for record in outcome.executed_links:
            if record.status != "success":
                continue
            channel = channel_of.get(record.ability_id)
            if channel is None or channel == Channel.LOCAL:
                continue
            text = _SUCCESS_REMEDIATIONS[channel]
            if text not in items:
                items.append(text)
        if outcome.abort_cause is not None:
            text = _ABORT_REMEDIATIONS[outcome.abort_cause]
            if text not in items:
                items.append(text)
    return items


def report_markdown(report: ExperimentReport) -> str:
    doc_lines: list[str] = []
    add = doc_lines.append
    verdict = report.hypothesis.verdict.value
    add("# Security chaos experiment report")
    add("")
    add(f"**Verdict: hypothesis {verdict}.** {report.hypothesis.statement}.")
    add("")
    add("## Inputs")
    add("")
    add("| field | value |")
    add("| --- | --- |")
    add(f"| target | {report.inputs.target} |")
    add(f"| agent | {report.inputs.agent} |")
    add(f"| parallelism | {report.inputs.parallelism} |")
    add(f"| objective | {report.inputs.objective.value} |")
    add(f"| scenario | {report.config.scenario_path} |")
    add(f"| catalog | {report.config.catalog_path} ({report.catalog_version}) |")
    add(f"| rule table | {report.rule_table_version} |")
    add(f"| seed | {report.seed} |")
    add("")
    add("## Steady state")
    add("")
    add(
        f"Captured at t={report.steady_state.captured_at} with agents: "
        + (", ".join(report.steady_state.agent_paws) or "(none)")
        + "."
    )
    add(f"Agents after the run, before teardown: {', '.join(report.post_agent_paws) or '(none)'}.")
    add("")
    add("## Branch outcomes")
    add("")
    if report.cross_check.vacuous:
        add(
            "No branches were available for this objective and platform, so the "
            "verdict is vacuous: nothing was tested, nothing was refuted."
        )
        add("")
    for outcome in report.outcomes:
        branch = next(
            (b for b in report.tree.branches if b.profile_id == outcome.profile_id), None
        )
        name = branch.profile_name if branch else outcome.profile_id
        headline = outcome.status.value
        if outcome.abort_cause is not None:
            headline += f" ({outcome.abort_cause.value})"
        add(f"### {name}: {headline}")
        add("")
        add("| step | ability | status | failure cause |")
        add("| --- | --- | --- | --- |")
        for i, record in enumerate(outcome.executed_links, start=1):
            add(
                f"| {i} | {record.ability_id} | {record.status} | "
                f"{record.failure_cause or ''} |"
            )
        if outcome.spawned_agent:
            add("")
            add(f"Implanted agent observed: `{outcome.spawned_agent}`.")
        add("")
    add("## Observability cross-check")
    add("")
    add(
        f"Result parsing refuted: {report.cross_check.channel_a_refuted}. "
        f"Agent-list diff refuted: {report.cross_check.channel_b_refuted}. "
        f"Channels agree: {report.cross_check.agree}."
    )
    add("")
    if report.deviations:
        add("## Deviations")
        add("")
        for event in report.deviations:
            where = f" (branch {event.branch})" if event.branch else ""
            add(f"- t={event.at} {event.kind.value}{where}: {event.detail}")
        add("")
    if report.warnings:
        add("## Warnings")
        add("")
        for warning in report.warnings:
            add(f"- {warning}")
        add("")
    add("## Remediations")
    add("")
    remediations = remediations_for(report)
    if remediations:
        for item in remediations:
            add(f"- {item}")
    else:
        add("- None required; every branch failed without observing a weakness.")
    add("")
    add("## Assumptions")
    add("")
    for assumption in report.assumptions:
        add(f"- {assumption}")
    add("")
    add(
        f"_Virtual time {report.timings.get('virtual_started')} to "
        f"{report.timings.get('virtual_finished')}; report version {report.report_version}._"
    )
    add("")
    return "\n".join(doc_lines)


def generate_report(report: ExperimentReport, fmt: str = "json") -> str:
    if fmt == "json":
        return report_json(report)
    if fmt == "markdown":
        return report_markdown(report)
    raise ParseError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _node_statuses(report: ExperimentReport) -> dict[str, list[tuple[str, str | None]]]:
    """Per-branch (status, failure_cause) for every tree node, executed or not."""
    by_profile = {o.profile_id: o for o in report.outcomes}
    table: dict[str, list[tuple[str, str | None]]] = {}
    for branch in report.tree.branches:
        outcome = by_profile.get(branch.profile_id)
        rows = []
        for i, _node in enumerate(branch.nodes):
            if outcome is not None and i < len(outcome.executed_links):
                record = outcome.executed_links[i]
                rows.append((record.status, record.failure_cause))
            else:
                rows.append(("not_run", None))
        table[branch.profile_id] = rows
    return table


def branches_csv(report: ExperimentReport) -> str:
    """One row per attack-tree node with its executed status."""
    statuses = _node_statuses(report)
    by_profile = {o.profile_id: o for o in report.outcomes}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        [
            "profile_id",
            "profile_name",
            "step",
            "ability_id",
            "technique_id",
            "channel",
            "status",
            "failure_cause",
            "branch_status",
            "abort_cause",
            "spawned_agent",
        ]
    )
    for branch in report.tree.branches:
        outcome = by_profile.get(branch.profile_id)
        for i, node in enumerate(branch.nodes):
            status, cause = statuses[branch.profile_id][i]
            writer.writerow(
                [
                    branch.profile_id,
                    branch.profile_name,
                    i + 1,
                    node.ability_id,
                    node.technique_id,
                    node.channel.value,
                    status,
                    cause or "",
                    outcome.status.value if outcome else "not_run",
                    outcome.abort_cause.value if outcome and outcome.abort_cause else "",
                    outcome.spawned_agent or "" if outcome else "",
                ]
            )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------

_STATUS_COLORS = {
    "success": "#2e7d32",
    "failed": "#c62828",
    "timeout": "#ef6c00",
    "discarded": "#6a1b9a",
    "error": "#ef6c00",
    "not_run": "#9e9e9e",
}
_ROOT_COLOR = "#1565c0"


def render_figures(report: ExperimentReport, outdir: str) -> list[str]:
    """Write attack_tree.png and branch_outcomes.png; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.patches as mpatches
    import matplotlib.pyplot as plt

    paths = []
    statuses = _node_statuses(report)
    branches = report.tree.branches

    # Attack tree: root on top, one column of nodes per branch.
    n_branches = max(len(branches), 1)
    depth = max((len(b.nodes) for b in branches), default=1)
    fig, ax = plt.subplots(figsize=(max(3.0 * n_branches, 6), 1.6 * (depth + 2)))
    ax.axis("off")
    root_xy = ((n_branches - 1) / 2.0, 0.0)
    ax.annotate(
        f"objective:\n{report.tree.objective.value}",
        root_xy,
        ha="center",
        va="center",
        fontsize=10,
        color="white",
        bbox={"boxstyle": "round,pad=0.4", "facecolor": _ROOT_COLOR, "edgecolor": "none"},
    )
    for bi, branch in enumerate(branches):
        prev = root_xy
        for ni, node in enumerate(branch.nodes):
            xy = (float(bi), -(ni + 1.0))
            status, _cause = statuses[branch.profile_id][ni]
            color = _STATUS_COLORS.get(status, _STATUS_COLORS["not_run"])
            ax.plot(
                [prev[0], xy[0]], [prev[1] - 0.18, xy[1] + 0.22],
                color="#777777", linewidth=1.0, zorder=1,
            )
            label = f"{node.ability_id}\n{node.technique_id} via {node.channel.value}"
            ax.annotate(
                label, xy, ha="center", va="center", fontsize=8, color="white", zorder=2,
                bbox={"boxstyle": "round,pad=0.32", "facecolor": color, "edgecolor": "none"},
            )
            prev = xy
        ax.annotate(
            branch.profile_name,
            (float(bi), -(len(branch.nodes) + 0.85)),
            ha="center", va="center", fontsize=8, style="italic", color="#444444",
        )
    ax.set_xlim(-0.8, n_branches - 0.2)
    ax.set_ylim(-(depth + 1.5), 0.8)
    legend_patches = [
        mpatches.Patch(color=color, label=status)
        for status, color in _STATUS_COLORS.items()
        if status != "error"
    ]
    ax.legend(handles=legend_patches, loc="upper right", fontsize=7, framealpha=0.9)
    fig.suptitle(f"Attack tree: {report.tree.objective.value} on {report.tree.platform.value}")
    tree_path = os.path.join(outdir, "attack_tree.png")
    fig.savefig(tree_path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    paths.append(tree_path)

    # Branch outcomes: executed depth per branch, colored by where it ended.
    fig, ax = plt.subplots(figsize=(max(1.8 * n_branches, 5), 4.2))
    labels = [b.profile_id for b in branches]
    by_profile = {o.profile_id: o for o in report.outcomes}
    heights = []
    colors = []
    for branch in branches:
        outcome = by_profile.get(branch.profile_id)
        heights.append(len(outcome.executed_links) if outcome else 0)
        if outcome is None:
            colors.append(_STATUS_COLORS["not_run"])
        elif outcome.status == BranchStatus.SUCCESS:
            colors.append(_STATUS_COLORS["success"])
        else:
            colors.append(_STATUS_COLORS["failed"])
    bars = ax.bar(labels, heights, color=colors)
    for bar, branch in zip(bars, branches):
        outcome = by_profile.get(branch.profile_id)
        note = ""
        if outcome is None:
            note = "not run"
        elif outcome.abort_cause is not None:
            note = outcome.abort_cause.value
        elif outcome.spawned_agent:
            note = f"implant {outcome.spawned_agent}"
        if note:
            ax.annotate(
                note,
                (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                textcoords="offset points", xytext=(0, 4),
                ha="center", fontsize=8,
            )
        ax.axhline(
            len(branch.nodes), color="#bbbbbb", linewidth=0.8, linestyle=":", zorder=0
        )
    ax.set_ylabel("links executed")
    ax.set_title(
        f"Branch outcomes (hypothesis {report.hypothesis.verdict.value}); "
        "green ran to completion, red stopped early"
    )
    ax.set_ylim(0, depth + 1)
    fig.tight_layout()
    outcomes_path = os.path.join(outdir, "branch_outcomes.png")
    fig.savefig(outcomes_path, dpi=110)
    plt.close(fig)
    paths.append(outcomes_path)
    return paths


def write_report_bundle(
    report: ExperimentReport, outdir: str, figures: bool = True
) -> dict[str, str]:
    """Write report.json, report.md, branches.csv, and optionally the figures."""
    os.makedirs(outdir, exist_ok=True)
    written = {}
    json_path = os.path.join(outdir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report_json(report))
    written["json"] = json_path
    md_path = os.path.join(outdir, "report.md")
    with open(md_path, "w", encoding="utf-8") as fh:
        fh.write(report_markdown(report))
    written["markdown"] = md_path
    csv_path = os.path.join(outdir, "branches.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(branches_csv(report))
    written["csv"] = csv_path
    if figures:
        try:
            for path in render_figures(report, outdir):
                key = os.path.splitext(os.path.basename(path))[0]
                written[key] = path
        except ImportError as exc:
            logger.warning("figure rendering unavailable: %s", exc)
    return written
