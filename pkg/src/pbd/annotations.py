"""Assessor annotation files (.pba): parsing and merge into assessments.

One record per line:

    assess <node|system> g<ID> <phase> <status> by "<assessor>" on <date>: "<note>"

with status one of full, partial, none. Manual judgments land with MANUAL
provenance; overriding an auto-checked cell keeps the engine's result in
the evidence (``auto:<status>``) so disagreements stay visible.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass, field

from .catalog import CheckKind, Phase, RuleSet, default_ruleset
from .engine import (
    Assessment,
    AssessmentCell,
    CellStatus,
    Provenance,
    SYSTEM_SCOPE,
    threat_exposure,
)
from .errors import MergeError, ParseError

__all__ = ["Annotation", "AnnotationSet", "parse_annotations", "merge"]

_STATUS_WORDS = {
    "full": CellStatus.FULLY_SUPPORTED,
    "partial": CellStatus.PARTIALLY_SUPPORTED,
    "none": CellStatus.NOT_SUPPORTED,
}

_RECORD_RE = re.compile(
    r"^assess\s+(?P<node>[A-Za-z_][A-Za-z0-9_-]*)\s+g(?P<id>\d+)\s+"
    r"(?P<phase>cda|dpp|dpa|ds|dd|dem)\s+(?P<status>full|partial|none)\s+"
    r'by\s+"(?P<assessor>(?:[^"\\]|\\.)*)"\s+on\s+(?P<date>\d{4}-\d{2}-\d{2})\s*'
    r':\s*"(?P<note>(?:[^"\\]|\\.)*)"\s*(?:#.*)?$'
)


def _unescape(text: str) -> str:
    return text.replace('\\"', '"').replace("\\\\", "\\")


@dataclass(frozen=True)
class Annotation:
    node: str  # node id, or SYSTEM
    guideline: int
    phase: Phase
    status: CellStatus
    note: str
    assessor: str
    date: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AnnotationSet:
    annotations: tuple[Annotation, ...] = ()

    def __len__(self) -> int:
        return len(self.annotations)

    def __iter__(self):
        return iter(self.annotations)


def parse_annotations(text: str) -> AnnotationSet:
    """Parse an annotation file. At most one record per target cell."""
    annotations: list[Annotation] = []
    targets: dict[tuple[str, int, Phase], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _RECORD_RE.match(line)
        if m is None:
            raise ParseError(
                "malformed record; expected: assess <node|system> g<ID> <phase> "
                '<full|partial|none> by "<assessor>" on <YYYY-MM-DD>: "<note>"',
                lineno,
            )
        node = m.group("node")
        if node == "system":
            node = SYSTEM_SCOPE
        guideline = int(m.group("id"))
        if not 1 <= guideline <= 30:
            raise ParseError(f"guideline id {guideline} out of range 1..30", lineno)
        try:
            datetime.date.fromisoformat(m.group("date"))
        except ValueError:
            raise ParseError(f"invalid date {m.group('date')!r}", lineno) from None
        note = _unescape(m.group("note"))
        if not note.strip():
            raise ParseError("note must not be empty", lineno)
        phase = Phase(m.group("phase"))
        key = (node, guideline, phase)
        if key in targets:
            raise ParseError(
                f"duplicate annotation for {node} g{guideline} {phase.value} "
                f"(first at line {targets[key]})",
                lineno,
                code="DUPLICATE_TARGET",
            )
        targets[key] = lineno
        annotations.append(
            Annotation(
                node=node,
                guideline=guideline,
                phase=phase,
                status=_STATUS_WORDS[m.group("status")],
                note=note,
                assessor=_unescape(m.group("assessor")),
                date=m.group("date"),
                line=lineno,
            )
        )
    return AnnotationSet(tuple(annotations))


def _merge_cell(cell: AssessmentCell, ann: Annotation, check: CheckKind) -> AssessmentCell:
    marker = (f"assessor:{ann.assessor}", f"date:{ann.date}")
    if check is CheckKind.MANUAL:
        return AssessmentCell(
            node=cell.node,
            guideline=cell.guideline,
            phase=cell.phase,
            status=ann.status,
            provenance=Provenance.MANUAL,
            note=ann.note,
            evidence=marker,
        )
    # Overriding an auto check: keep the engine's status and evidence around.
    if cell.provenance is Provenance.MANUAL_OVERRIDE:
        auto_entry = cell.evidence[0]
        auto_evidence = cell.evidence[3:]
    else:
        auto_entry = f"auto:{cell.status.value}"
        auto_evidence = cell.evidence
    return AssessmentCell(
        node=cell.node,
        guideline=cell.guideline,
        phase=cell.phase,
        status=ann.status,
        provenance=Provenance.MANUAL_OVERRIDE,
        note=ann.note,
        evidence=(auto_entry, *marker, *auto_evidence),
    )


def merge(
    assessment: Assessment,
    annotations: AnnotationSet,
    ruleset: RuleSet | None = None,
) -> Assessment:
    """Apply assessor annotations to an assessment.

    Only annotated cells change; the threat-exposure summary is recomputed.
    Annotations must target applicable cells that exist in the assessment.
    """
    rs = ruleset or default_ruleset()
    index = {(c.node, c.guideline, c.phase): i for i, c in enumerate(assessment.cells)}
    cells = list(assessment.cells)
    for ann in annotations:
        key = (ann.node, ann.guideline, ann.phase)
        if key not in index:
            raise MergeError(
                f"no cell for {ann.node} g{ann.guideline} {ann.phase.value} "
                f"(annotation line {ann.line})",
                code="UNKNOWN_TARGET",
            )
        cell = cells[index[key]]
        if cell.status is CellStatus.NOT_APPLICABLE:
            raise MergeError(
                f"cell {ann.node} g{ann.guideline} {ann.phase.value} is not applicable "
                f"(annotation line {ann.line})",
                code="TARGET_NOT_APPLICABLE",
            )
        check = rs.guideline(ann.guideline).check
        cells[index[key]] = _merge_cell(cell, ann, check)
    merged = Assessment(
        model=assessment.model,
        model_hash=assessment.model_hash,
        ruleset_version=assessment.ruleset_version,
        cells=tuple(cells),
        summary={},
    )
    return Assessment(
        model=merged.model,
        model_hash=merged.model_hash,
        ruleset_version=merged.ruleset_version,
        cells=merged.cells,
        summary=threat_exposure(merged, rs),
    )
