"""Rendering and comparison of assessments.

Matrices follow the assessment-table shape: one table per node plus one
for the platform scope, thirty guideline rows by six phase columns, with
glyphs for the five cell statuses. Output is a pure function of the
assessment (and catalog names), so equal assessments render to identical
bytes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .catalog import (
    Phase,
    RuleSet,
    THREAT_SYMBOLS,
    ThreatType,
    default_ruleset,
    phase_sort_key,
)
from .engine import (
    Assessment,
    CellStatus,
    Provenance,
    SYSTEM_SCOPE,
    assessment_to_json,
    scope_sort_key,
)
from .errors import ReportError
from .model import Channel, SystemModel

__all__ = [
    "RenderFormat",
    "STATUS_GLYPHS",
    "CellChange",
    "DiffReport",
    "render_assessment",
    "render_dfd",
    "diff",
    "render_diff",
]


class RenderFormat(Enum):
    ANSI = "ansi"
    MARKDOWN = "md"
    JSON = "json"
    DOT = "dot"


STATUS_GLYPHS = {
    CellStatus.NOT_APPLICABLE: "◻",       # white medium square
    CellStatus.FULLY_SUPPORTED: "◼",      # black medium square
    CellStatus.PARTIALLY_SUPPORTED: "◧",  # half-filled square
    CellStatus.NOT_SUPPORTED: "✗",        # ballot x
    CellStatus.UNASSESSED: "?",
}

_ANSI_COLORS = {
    CellStatus.FULLY_SUPPORTED: "\x1b[32m",
    CellStatus.PARTIALLY_SUPPORTED: "\x1b[33m",
    CellStatus.NOT_SUPPORTED: "\x1b[31m",
    CellStatus.NOT_APPLICABLE: "\x1b[90m",
}
_RESET = "\x1b[0m"

_PHASES = sorted(Phase, key=phase_sort_key)
_PHASE_HEADERS = [p.value.upper() for p in _PHASES]


def _glyph(status: CellStatus, color: bool) -> str:
    glyph = STATUS_GLYPHS[status]
    code = _ANSI_COLORS.get(status)
    if color and code:
        return f"{code}{glyph}{_RESET}"
    return glyph


def _scope_title(scope: str) -> str:
    return "System scope" if scope == SYSTEM_SCOPE else f"Node {scope}"


def _cell_grid(assessment: Assessment):
    grid: dict[str, dict[tuple[int, Phase], object]] = {}
    for cell in assessment.cells:
        grid.setdefault(cell.node, {})[(cell.guideline, cell.phase)] = cell
    return grid


def _gap_cells(assessment: Assessment, ruleset: RuleSet):
    gaps = [
        c
        for c in assessment.cells
        if c.status not in (CellStatus.NOT_APPLICABLE, CellStatus.FULLY_SUPPORTED)
    ]
    gaps.sort(
        key=lambda c: (
            -len(ruleset.guideline(c.guideline).threats),
            c.guideline,
            scope_sort_key(c.node),
            phase_sort_key(c.phase),
        )
    )
    return gaps


def _threat_label(threats) -> str:
    if not threats:
        return "-"
    return "".join(
        THREAT_SYMBOLS[t] for t in sorted(threats, key=lambda t: t.value)
    )


def _exposure_text(stat) -> str:
    return f"{stat.exposure:.2f} ({stat.mitigated}/{stat.applicable})"


def _render_markdown(assessment: Assessment, ruleset: RuleSet) -> str:
    grid = _cell_grid(assessment)
    lines = [f"# Assessment: {assessment.model}", ""]
    lines.append(f"model hash: `{assessment.model_hash}`")
    lines.append(f"ruleset: {assessment.ruleset_version}")
    for scope in sorted(grid, key=scope_sort_key):
        lines.append("")
        lines.append(f"## {_scope_title(scope)}")
        lines.append("")
        lines.append("| id | guideline | " + " | ".join(_PHASE_HEADERS) + " |")
        lines.append("| --: | :-- |" + " :-: |" * len(_PHASES))
        for guideline in ruleset.guidelines:
            row = [str(guideline.id), guideline.name]
            for phase in _PHASES:
                cell = grid[scope][(guideline.id, phase)]
                row.append(STATUS_GLYPHS[cell.status])
            lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    lines.append("## Threat exposure")
    lines.append("")
    sym_su = THREAT_SYMBOLS[ThreatType.SECONDARY_USAGE]
    sym_ua = THREAT_SYMBOLS[ThreatType.UNAUTHORIZED_ACCESS]
    lines.append(f"| scope | secondary usage ({sym_su}) | unauthorized access ({sym_ua}) |")
    lines.append("| :-- | :-- | :-- |")
    for scope in sorted(assessment.summary, key=scope_sort_key):
        per = assessment.summary[scope]
        lines.append(
            f"| {scope} | {_exposure_text(per[ThreatType.SECONDARY_USAGE])} "
            f"| {_exposure_text(per[ThreatType.UNAUTHORIZED_ACCESS])} |"
        )
    lines.append("")
    lines.append("## Gaps")
    lines.append("")
    gaps = _gap_cells(assessment, ruleset)
    if not gaps:
        lines.append("none: every applicable cell is fully supported")
    else:
        lines.append("Applicable cells not fully supported, worst first:")
        lines.append("")
        for cell in gaps:
            threats = _threat_label(ruleset.guideline(cell.guideline).threats)
            detail = cell.note or (cell.evidence[0] if cell.evidence else "")
            suffix = f" — {detail}" if detail else ""
            lines.append(
                f"- {cell.node} g{cell.guideline} {cell.phase.value}: "
                f"{cell.status.value} [{threats}]{suffix}"
            )
    return "\n".join(lines) + "\n"


def _render_ansi(assessment: Assessment, ruleset: RuleSet, color: bool) -> str:
    grid = _cell_grid(assessment)
    name_width = max(len(g.name) for g in ruleset.guidelines) + 2
    lines = [f"Assessment: {assessment.model}"]
    lines.append(f"model hash: {assessment.model_hash}")
    lines.append(f"ruleset: {assessment.ruleset_version}")
    for scope in sorted(grid, key=scope_sort_key):
        lines.append("")
        title = _scope_title(scope)
        lines.append(title)
        lines.append("-" * len(title))
        header = " id  " + "guideline".ljust(name_width)
        header += "".join(h.center(5) for h in _PHASE_HEADERS)
        lines.append(header)
        for guideline in ruleset.guidelines:
            row = f"{guideline.id:>3}  " + guideline.name.ljust(name_width)
            for phase in _PHASES:
                cell = grid[scope][(guideline.id, phase)]
                plain = STATUS_GLYPHS[cell.status]
                pad = 5 - len(plain)
                left = pad // 2
                row += " " * left + _glyph(cell.status, color) + " " * (pad - left)
            lines.append(row.rstrip())
    lines.append("")
    lines.append("Threat exposure")
    sym_su = THREAT_SYMBOLS[ThreatType.SECONDARY_USAGE]
    sym_ua = THREAT_SYMBOLS[ThreatType.UNAUTHORIZED_ACCESS]
    lines.append(
        "  "
        + "scope".ljust(18)
        + f"{sym_su} secondary usage".ljust(24)
        + f"{sym_ua} unauthorized access"
    )
    for scope in sorted(assessment.summary, key=scope_sort_key):
        per = assessment.summary[scope]
        lines.append(
            "  "
            + scope.ljust(18)
            + _exposure_text(per[ThreatType.SECONDARY_USAGE]).ljust(24)
            + _exposure_text(per[ThreatType.UNAUTHORIZED_ACCESS])
        )
    lines.append("")
    gaps = _gap_cells(assessment, ruleset)
    lines.append("Gaps (applicable cells not fully supported, worst first)")
    if not gaps:
        lines.append("  none: every applicable cell is fully supported")
    for cell in gaps:
        threats = _threat_label(ruleset.guideline(cell.guideline).threats)
        detail = cell.note or (cell.evidence[0] if cell.evidence else "")
        suffix = f" — {detail}" if detail else ""
        lines.append(
            f"  {cell.node} g{cell.guideline} {cell.phase.value}: "
            f"{cell.status.value} [{threats}]{suffix}"
        )
    return "\n".join(lines) + "\n"


def render_assessment(
    assessment: Assessment,
    fmt: RenderFormat,
    ruleset: RuleSet | None = None,
    *,
    color: bool | None = None,
) -> str:
    """Render an assessment. DOT applies to models, not assessments."""
    if fmt is RenderFormat.DOT:
        raise ReportError(
            "dot renders data-flow diagrams of models, not assessments",
            code="FORMAT_MISMATCH",
        )
    rs = ruleset or default_ruleset()
    if fmt is RenderFormat.JSON:
        return assessment_to_json(assessment)
    if fmt is RenderFormat.MARKDOWN:
        return _render_markdown(assessment, rs)
    return _render_ansi(assessment, rs, color=(color if color is not None else True))


# ---------------------------------------------------------------------------
# Data-flow diagram
# ---------------------------------------------------------------------------


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot_label(*parts: str) -> str:
    # multi-line label: escaped parts joined with DOT's \n line breaks
    escaped = (p.replace("\\", "\\\\").replace('"', '\\"') for p in parts)
    return '"' + "\\n".join(escaped) + '"'


def render_dfd(model: SystemModel) -> str:
    """DOT digraph of the model: one graph node per model node, one edge
    per flow. Plaintext edges are dashed red; encrypted edges solid."""
    lines = [f"digraph {_dot_quote(model.name)} {{", "  rankdir=LR;"]
    for node in sorted(model.nodes, key=lambda n: n.id):
        phases = ", ".join(p.value for p in sorted(node.phases, key=phase_sort_key))
        label = _dot_label(node.id, f"[{node.category.value}]", phases)
        lines.append(f"  {_dot_quote(node.id)} [label={label}, shape=box];")
    flows = sorted(
        model.flows, key=lambda f: (f.src, f.dst, f.channel.value, sorted(f.data))
    )
    for flow in flows:
        items = ", ".join(sorted(flow.data)) if flow.data else "(no data)"
        style = (
            "style=dashed, color=red"
            if flow.channel is Channel.PLAINTEXT
            else "style=solid"
        )
        lines.append(
            f"  {_dot_quote(flow.src)} -> {_dot_quote(flow.dst)} "
            f"[label={_dot_label(f'{items} ({flow.channel.value})')}, {style}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Diff
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellChange:
    node: str
    guideline: int
    phase: Phase
    old_status: CellStatus
    old_provenance: Provenance
    new_status: CellStatus
    new_provenance: Provenance


@dataclass(frozen=True)
class DiffReport:
    left_model: str
    left_hash: str
    right_model: str
    right_hash: str
    changed: tuple[CellChange, ...]
    added_nodes: tuple[str, ...]
    removed_nodes: tuple[str, ...]

    @property
    def is_empty(self) -> bool:
        return not (self.changed or self.added_nodes or self.removed_nodes)


def diff(a: Assessment, b: Assessment) -> DiffReport:
    """Cell-level delta between two assessments of the same ruleset version."""
    if a.ruleset_version != b.ruleset_version:
        raise ReportError(
            f"assessments use different ruleset versions "
            f"({a.ruleset_version} vs {b.ruleset_version})",
            code="RULESET_MISMATCH",
        )
    scopes_a = {c.node for c in a.cells}
    scopes_b = {c.node for c in b.cells}
    common = scopes_a & scopes_b
    left = {(c.node, c.guideline, c.phase): c for c in a.cells if c.node in common}
    right = {(c.node, c.guideline, c.phase): c for c in b.cells if c.node in common}
    changed = []
    for key in sorted(left, key=lambda k: (scope_sort_key(k[0]), k[1], phase_sort_key(k[2]))):
        old = left[key]
        new = right.get(key)
        if new is None:
            continue
        if (old.status, old.provenance) != (new.status, new.provenance):
            changed.append(
                CellChange(
                    node=key[0],
                    guideline=key[1],
                    phase=key[2],
                    old_status=old.status,
                    old_provenance=old.provenance,
                    new_status=new.status,
                    new_provenance=new.provenance,
                )
            )
    return DiffReport(
        left_model=a.model,
        left_hash=a.model_hash,
        right_model=b.model,
        right_hash=b.model_hash,
        changed=tuple(changed),
        added_nodes=tuple(sorted(scopes_b - scopes_a)),
        removed_nodes=tuple(sorted(scopes_a - scopes_b)),
    )


def render_diff(report: DiffReport) -> str:
    lines = [
        f"left:  {report.left_model} {report.left_hash[:12]}",
        f"right: {report.right_model} {report.right_hash[:12]}",
    ]
    if report.is_empty:
        lines.append("no differences")
        return "\n".join(lines) + "\n"
    if report.added_nodes:
        lines.append("added nodes: " + ", ".join(report.added_nodes))
    if report.removed_nodes:
        lines.append("removed nodes: " + ", ".join(report.removed_nodes))
    lines.append(f"changed cells: {len(report.changed)}")
    for ch in report.changed:
        lines.append(
            f"  {ch.node} g{ch.guideline} {ch.phase.value}: "
            f"{ch.old_status.value}/{ch.old_provenance.value} -> "
            f"{ch.new_status.value}/{ch.new_provenance.value}"
        )
    return "\n".join(lines) + "\n"
