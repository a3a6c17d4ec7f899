"""Assessment engine: attribute propagation and automatic guideline checks.

``propagate`` walks the flow graph in topological order and tracks, for
every node, phase, and data item, an attribute vector (kind, personal,
granularity, at-rest encryption, arrival channel). Declared capabilities
transform the vector at the phases they cover; fan-in of the same item over
several paths merges attribute-wise to the most exposed value, so the
assessment never understates exposure.

``auto_assess`` fills the complete (nodes + SYSTEM) x 30 guidelines x 6
phases cell grid: applicability comes from the catalog matrix and the
node's utilised phases, auto-checkable guidelines are evaluated against
declarations and propagated attributes, and judgment-based guidelines are
left unassessed for a human assessor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

from .catalog import (
    CAPABILITY_REGISTRY,
    CapabilityKind,
    CheckKind,
    PIPELINE_PHASES,
    Phase,
    RuleSet,
    ThreatType,
    default_ruleset,
    kind_sort_key,
    phase_sort_key,
)
from .errors import EngineError, PbdError
from .model import (
    Channel,
    DataKind,
    Granularity,
    Node,
    SystemModel,
    is_iso_duration,
    model_hash,
)

__all__ = [
    "DataAttributes",
    "FlowState",
    "CellStatus",
    "Provenance",
    "AssessmentCell",
    "ThreatStat",
    "Assessment",
    "SYSTEM_SCOPE",
    "propagate",
    "auto_assess",
    "threat_exposure",
    "assessment_to_json",
    "assessment_from_json",
    "scope_sort_key",
    "status_rank",
]

SYSTEM_SCOPE = "SYSTEM"

# Exposure orderings: lower index = more exposed. Fan-in merges take the
# most exposed value per attribute.
_KIND_EXPOSURE = {DataKind.RAW: 0, DataKind.SECONDARY: 1, DataKind.AGGREGATE: 2}
_GRAN_EXPOSURE = {Granularity.FINE: 0, Granularity.MEDIUM: 1, Granularity.COARSE: 2}
_CHANNEL_EXPOSURE = {
    Channel.PLAINTEXT: 0,
    Channel.LINK_ENCRYPTED: 1,
    Channel.TLS: 2,
    Channel.ONION: 3,
    Channel.LOCAL: 4,
}

_AGG_KINDS = {
    CapabilityKind.AGG_KNOWLEDGE,
    CapabilityKind.AGG_GEOGRAPHY,
    CapabilityKind.AGG_CHAIN,
    CapabilityKind.AGG_TIME_PERIOD,
    CapabilityKind.AGG_CATEGORY,
}


@dataclass(frozen=True)
class DataAttributes:
    """Attribute vector of one data item at one node and phase.

    ``channel_in`` is the channel the item arrived on (Channel.LOCAL for
    locally acquired data).
    """

    kind: DataKind
    personal: bool
    granularity: Granularity
    encrypted_at_rest: bool = False
    channel_in: Channel = Channel.LOCAL


FlowState = dict[tuple[str, Phase, str], DataAttributes]


def merge_attributes(a: DataAttributes, b: DataAttributes) -> DataAttributes:
    """Attribute-wise most-exposed merge (raw, personal, fine, plaintext win)."""
    return DataAttributes(
        kind=min(a.kind, b.kind, key=_KIND_EXPOSURE.get),
        personal=a.personal or b.personal,
        granularity=min(a.granularity, b.granularity, key=_GRAN_EXPOSURE.get),
        encrypted_at_rest=a.encrypted_at_rest and b.encrypted_at_rest,
        channel_in=min(a.channel_in, b.channel_in, key=_CHANNEL_EXPOSURE.get),
    )


def _lower_granularity(current: Granularity, target: str | None) -> Granularity:
    if target in (g.value for g in Granularity):
        goal = Granularity(target)
        if _GRAN_EXPOSURE[goal] > _GRAN_EXPOSURE[current]:
            return goal
        return current  # never raise granularity
    steps = [Granularity.FINE, Granularity.MEDIUM, Granularity.COARSE]
    idx = steps.index(current)
    return steps[min(idx + 1, len(steps) - 1)]


def apply_phase_transforms(
    attrs: DataAttributes, node: Node, phase: Phase
) -> DataAttributes:
    """Apply one node's capability effects for one pipeline phase.

    Effects, applied in capability-kind order: secondary-context-conversion
    (at dpp) turns raw into secondary; any agg-* capability aggregates and
    coarsens; granularity-reduction lowers one step, or to its ``to`` target;
    anonymize clears the personal flag; encrypt-rest (at ds) marks the
    node's stored copy encrypted.
    """
    for cap in sorted(node.capabilities, key=lambda c: kind_sort_key(c.kind)):
        if phase not in cap.at_phases:
            continue
        if cap.kind is CapabilityKind.SECONDARY_CONTEXT_CONVERSION and phase is Phase.DPP:
            if attrs.kind is DataKind.RAW:
                attrs = replace(attrs, kind=DataKind.SECONDARY)
        elif cap.kind in _AGG_KINDS:
            attrs = replace(attrs, kind=DataKind.AGGREGATE, granularity=Granularity.COARSE)
        elif cap.kind is CapabilityKind.GRANULARITY_REDUCTION:
            attrs = replace(
                attrs, granularity=_lower_granularity(attrs.granularity, cap.params.get("to"))
            )
        elif cap.kind is CapabilityKind.ANONYMIZE:
            if attrs.personal:
                attrs = replace(attrs, personal=False)
        elif cap.kind is CapabilityKind.ENCRYPT_REST and phase is Phase.DS:
            if not attrs.encrypted_at_rest:
                attrs = replace(attrs, encrypted_at_rest=True)
    return attrs


def _topological_order(model: SystemModel) -> list[Node]:
    indegree = {n.id: 0 for n in model.nodes}
    edges = {(f.src, f.dst) for f in model.flows}
    for _src, dst in edges:
        indegree[dst] += 1
    by_id = {n.id: n for n in model.nodes}
    ready = sorted(nid for nid, deg in indegree.items() if deg == 0)
    order: list[Node] = []
    while ready:
        nid = ready.pop(0)
        order.append(by_id[nid])
        for src, dst in sorted(edges):
            if src == nid:
                indegree[dst] -= 1
                if indegree[dst] == 0:
                    ready.append(dst)
        ready.sort()
    if len(order) != len(model.nodes):
        raise EngineError(
            "model contains a flow cycle; run validation first", code="CYCLE"
        )
    return order


def propagate(model: SystemModel, ruleset: RuleSet | None = None) -> FlowState:
    """Compute the attribute vector of every data item at every node and
    utilised pipeline phase it reaches. The model must be free of
    validation errors."""
    del ruleset  # propagation depends only on the model; kept for symmetry
    state: FlowState = {}
    inbound: dict[str, list] = {n.id: [] for n in model.nodes}
    for flow in model.flows:
        if flow.dst in inbound:
            inbound[flow.dst].append(flow)

    for node in _topological_order(model):
        entries: dict[str, DataAttributes] = {}
        for item in node.data:
            entries[item.name] = DataAttributes(
                kind=item.kind,
                personal=item.personal,
                granularity=item.granularity,
                encrypted_at_rest=False,
                channel_in=Channel.LOCAL,
            )
        for flow in inbound[node.id]:
            for name in sorted(flow.data):
                exit_attrs = state.get((flow.src, Phase.DD, name))
                if exit_attrs is None:
                    raise EngineError(
                        f"data item '{name}' never reaches flow source '{flow.src}'",
                        code="UNREACHABLE_DATA",
                    )
                arriving = replace(
                    exit_attrs, channel_in=flow.channel, encrypted_at_rest=False
                )
                if name in entries:
                    entries[name] = merge_attributes(entries[name], arriving)
                else:
                    entries[name] = arriving
        for name, attrs in entries.items():
            for phase in PIPELINE_PHASES:
                if phase not in node.phases:
                    continue
                attrs = apply_phase_transforms(attrs, node, phase)
                state[(node.id, phase, name)] = attrs
    return state


# ---------------------------------------------------------------------------
# Assessment
# ---------------------------------------------------------------------------


class CellStatus(Enum):
    NOT_APPLICABLE = "not_applicable"
    FULLY_SUPPORTED = "fully_supported"
    PARTIALLY_SUPPORTED = "partially_supported"
    NOT_SUPPORTED = "not_supported"
    UNASSESSED = "unassessed"


class Provenance(Enum):
    AUTO = "auto"
    MANUAL = "manual"
    MANUAL_OVERRIDE = "manual_override"


_STATUS_RANK = {
    CellStatus.NOT_SUPPORTED: 0,
    CellStatus.PARTIALLY_SUPPORTED: 1,
    CellStatus.FULLY_SUPPORTED: 2,
}


def status_rank(status: CellStatus) -> int | None:
    """Support ordering not_supported < partially < fully; None for the
    statuses outside that order (n/a, unassessed)."""
    return _STATUS_RANK.get(status)


@dataclass(frozen=True)
class AssessmentCell:
    node: str  # node id, or SYSTEM for the platform scope
    guideline: int
    phase: Phase
    status: CellStatus
    provenance: Provenance = Provenance.AUTO
    note: str | None = None
    evidence: tuple[str, ...] = ()


@dataclass(frozen=True)
class ThreatStat:
    applicable: int
    mitigated: int

    @property
    def exposure(self) -> float:
        if self.applicable == 0:
            return 0.0
        return 1.0 - self.mitigated / self.applicable


Summary = dict[str, dict[ThreatType, ThreatStat]]


@dataclass(frozen=True)
class Assessment:
    model: str
    model_hash: str
    ruleset_version: str
    cells: tuple[AssessmentCell, ...]
    summary: Summary

    def cell(self, node: str, guideline: int, phase: Phase) -> AssessmentCell | None:
        key = (scope_sort_key(node), guideline, phase_sort_key(phase))
        lo, hi = 0, len(self.cells)
        while lo < hi:
            mid = (lo + hi) // 2
            c = self.cells[mid]
            ckey = (scope_sort_key(c.node), c.guideline, phase_sort_key(c.phase))
            if ckey < key:
                lo = mid + 1
            elif ckey > key:
                hi = mid
            else:
                return c
        return None

    @property
    def node_ids(self) -> list[str]:
        seen: list[str] = []
        for cell in self.cells:
            if cell.node != SYSTEM_SCOPE and (not seen or seen[-1] != cell.node):
                if cell.node not in seen:
                    seen.append(cell.node)
        return seen


def scope_sort_key(scope: str) -> tuple[int, str]:
    """Node ids in lexicographic order; the SYSTEM row sorts last."""
    return (1, "") if scope == SYSTEM_SCOPE else (0, scope)


class _NodeFacts:
    """Bundled per-node inputs for the check predicates."""

    def __init__(self, model: SystemModel, node: Node, state: FlowState, upstream: set[str]):
        self.node = node
        self.outbound = [f for f in model.flows if f.src == node.id]
        self.upstream_caps = {
            cap.kind
            for other in model.nodes
            if other.id in upstream
            for cap in other.capabilities
        }
        reaching = sorted({name for (nid, _ph, name) in state if nid == node.id})
        self.items_at = {
            phase: {
                name: state[(node.id, phase, name)]
                for name in reaching
                if (node.id, phase, name) in state
            }
            for phase in PIPELINE_PHASES
        }
        out_names = sorted({name for f in self.outbound for name in f.data})
        self.outbound_items = {
            name: state[(node.id, Phase.DD, name)]
            for name in out_names
            if (node.id, Phase.DD, name) in state
        }

    def covering(self, kind: CapabilityKind, phase: Phase) -> list:
        return [
            c for c in self.node.capabilities if c.kind is kind and phase in c.at_phases
        ]

    def declared(self, kind: CapabilityKind) -> bool:
        return any(c.kind is kind for c in self.node.capabilities)


_Check = tuple[CellStatus, tuple[str, ...]]


def _full(*evidence: str) -> _Check:
    return (CellStatus.FULLY_SUPPORTED, evidence)


def _partial(*evidence: str) -> _Check:
    return (CellStatus.PARTIALLY_SUPPORTED, evidence)


def _not(*evidence: str) -> _Check:
    return (CellStatus.NOT_SUPPORTED, evidence)


def _check_coverage(facts: _NodeFacts, kind: CapabilityKind, phase: Phase) -> _Check:
    if facts.covering(kind, phase):
        return _full(f"{kind.value} declared at {phase.value}")
    return _not(f"{kind.value} not declared at {phase.value}")


def _evaluate_auto(facts: _NodeFacts, guideline_id: int, phase: Phase) -> _Check:
    """The normative auto-check for one guideline at one cell."""
    if guideline_id == 1:
        caps = facts.covering(CapabilityKind.MINIMIZE_ACQUISITION, phase)
        if not caps:
            return _not(f"minimize-acquisition not declared at {phase.value}")
        declared_params = {k for c in caps for k in c.params}
        missing = sorted({"types", "duration", "frequency"} - declared_params)
        if missing:
            return _partial("minimize-acquisition missing params: " + ", ".join(missing))
        return _full("minimize-acquisition declared with types, duration, frequency")

    if guideline_id == 3:
        if not facts.outbound_items:
            return _full("no outbound data")
        raw = sorted(n for n, a in facts.outbound_items.items() if a.kind is DataKind.RAW)
        if not raw:
            return _full("no raw data leaves")
        if facts.declared(CapabilityKind.SECONDARY_CONTEXT_CONVERSION):
            return _partial("raw items still leave: " + ", ".join(raw))
        return _not("raw items leave: " + ", ".join(raw))

    if guideline_id == 5:
        return _check_coverage(facts, CapabilityKind.STORAGE_MINIMIZATION, phase)

    if guideline_id == 6:
        caps = facts.covering(CapabilityKind.RETENTION_LIMIT, phase)
        if not caps:
            return _not(f"retention-limit not declared at {phase.value}")
        periods = [c.params.get("period") for c in caps]
        valid = [p for p in periods if p and is_iso_duration(p)]
        if valid:
            return _full(f"retention limited to {sorted(valid)[0]}")
        return _partial("retention-limit declared without a valid period")

    if guideline_id == 7:
        if not facts.outbound:
            return _full("no outbound flows")
        plain = sorted(f.dst for f in facts.outbound if f.channel is not Channel.ONION)
        if not plain:
            return _full("all outbound channels=onion")
        if facts.declared(CapabilityKind.HIDDEN_ROUTING) or len(plain) < len(facts.outbound):
            return _partial("flows without onion routing to: " + ", ".join(plain))
        return _not("no onion routing on outbound flows to: " + ", ".join(plain))

    if guideline_id == 8:
        if Phase.DD not in facts.node.phases:
            return _full("no dissemination phase")
        personal = sorted(
            name for name, attrs in facts.items_at[Phase.DD].items() if attrs.personal
        )
        if not personal:
            return _full("no personal data at dissemination")
        anonymizes = facts.declared(CapabilityKind.ANONYMIZE) or (
            CapabilityKind.ANONYMIZE in facts.upstream_caps
        )
        if anonymizes:
            return _partial("personal items remain at dissemination: " + ", ".join(personal))
        return _not("personal items at dissemination: " + ", ".join(personal))

    if guideline_id == 9:
        if not facts.outbound:
            return _full("no outbound flows")
        plain = sorted(f.dst for f in facts.outbound if f.channel is Channel.PLAINTEXT)
        if not plain:
            channels = sorted({f.channel.value for f in facts.outbound})
            return _full("all outbound channels=" + ",".join(channels))
        if facts.declared(CapabilityKind.ENCRYPT_TRANSIT) or len(plain) < len(facts.outbound):
            return _partial("plaintext flows to: " + ", ".join(plain))
        return _not("all outbound flows plaintext, to: " + ", ".join(plain))

    if guideline_id == 10:
        return _check_coverage(facts, CapabilityKind.ENCRYPTED_PROCESSING, phase)

    if guideline_id == 11:
        stored = facts.items_at[Phase.DS]
        if not stored:
            return _full("no stored data")
        unencrypted = sorted(n for n, a in stored.items() if not a.encrypted_at_rest)
        if not unencrypted:
            return _full("all stored items encrypted at rest")
        if facts.declared(CapabilityKind.ENCRYPT_REST):
            return _partial("stored items not encrypted at rest: " + ", ".join(unencrypted))
        return _not("stored items not encrypted at rest: " + ", ".join(unencrypted))

    if guideline_id == 12:
        if not facts.outbound_items:
            return _full("no outbound data")
        worst = min(
            (a.granularity for a in facts.outbound_items.values()),
            key=_GRAN_EXPOSURE.get,
        )
        listing = ", ".join(
            f"{name}={attrs.granularity.value}"
            for name, attrs in sorted(facts.outbound_items.items())
        )
        if worst is Granularity.COARSE:
            return _full("all outbound granularity=coarse")
        if worst is Granularity.MEDIUM:
            return _partial("outbound granularity only reduced to medium: " + listing)
        return _not("fine-grained items leave: " + listing)

    if guideline_id == 13:
        return _check_coverage(facts, CapabilityKind.QUERY_ANSWERING, phase)
    if guideline_id == 14:
        return _check_coverage(facts, CapabilityKind.QUERY_RATE_LIMIT, phase)
    if guideline_id == 15:
        return _check_coverage(facts, CapabilityKind.DISTRIBUTED_PROCESSING, phase)
    if guideline_id == 16:
        return _check_coverage(facts, CapabilityKind.DISTRIBUTED_STORAGE, phase)
    if 17 <= guideline_id <= 21:
        kind = list(CapabilityKind)[guideline_id - 1]
        return _check_coverage(facts, kind, phase)
    if guideline_id == 24:
        return _check_coverage(facts, CapabilityKind.LOGGING, phase)

    raise EngineError(f"no auto check defined for guideline {guideline_id}")


def _upstream_map(model: SystemModel) -> dict[str, set[str]]:
    preds: dict[str, set[str]] = {n.id: set() for n in model.nodes}
    for flow in model.flows:
        if flow.src in preds and flow.dst in preds:
            preds[flow.dst].add(flow.src)
    result: dict[str, set[str]] = {}

    def ancestors(nid: str) -> set[str]:
        if nid in result:
            return result[nid]
        result[nid] = set()  # DAG assumed; cycle would already have failed
        acc: set[str] = set()
        for p in preds[nid]:
            acc.add(p)
            acc |= ancestors(p)
        result[nid] = acc
        return acc

    for n in model.nodes:
        ancestors(n.id)
    return result


def auto_assess(
    model: SystemModel, ruleset: RuleSet | None = None, state: FlowState | None = None
) -> Assessment:
    """Fill the complete assessment grid for a valid model."""
    rs = ruleset or default_ruleset()
    if state is None:
        state = propagate(model, rs)
    upstream = _upstream_map(model)
    demonstrated = {cap.kind for cap in model.demonstrate}

    cells: list[AssessmentCell] = []
    for node in sorted(model.nodes, key=lambda n: n.id):
        facts = _NodeFacts(model, node, state, upstream[node.id])
        for guideline in rs.guidelines:
            for phase in Phase:
                applicable = phase in guideline.applicable and phase in node.phases
                if not applicable:
                    cells.append(
                        AssessmentCell(node.id, guideline.id, phase, CellStatus.NOT_APPLICABLE)
                    )
                elif guideline.check is CheckKind.MANUAL:
                    cells.append(
                        AssessmentCell(node.id, guideline.id, phase, CellStatus.UNASSESSED)
                    )
                else:
                    status, evidence = _evaluate_auto(facts, guideline.id, phase)
                    cells.append(
                        AssessmentCell(
                            node.id, guideline.id, phase, status, evidence=evidence
                        )
                    )
    for guideline in rs.guidelines:
        for phase in Phase:
            if phase is not Phase.DEM or Phase.DEM not in guideline.applicable:
                cells.append(
                    AssessmentCell(SYSTEM_SCOPE, guideline.id, phase, CellStatus.NOT_APPLICABLE)
                )
                continue
            kind = rs.kind_for(guideline.id)
            if kind in demonstrated:
                cells.append(
                    AssessmentCell(
                        SYSTEM_SCOPE,
                        guideline.id,
                        phase,
                        CellStatus.FULLY_SUPPORTED,
                        evidence=(f"demonstrate {kind.value} declared",),
                    )
                )
            elif guideline.check is CheckKind.AUTO:
                cells.append(
                    AssessmentCell(
                        SYSTEM_SCOPE,
                        guideline.id,
                        phase,
                        CellStatus.NOT_SUPPORTED,
                        evidence=(f"demonstrate {kind.value} not declared",),
                    )
                )
            else:
                cells.append(
                    AssessmentCell(SYSTEM_SCOPE, guideline.id, phase, CellStatus.UNASSESSED)
                )

    cells.sort(key=lambda c: (scope_sort_key(c.node), c.guideline, phase_sort_key(c.phase)))
    assessment = Assessment(
        model=model.name,
        model_hash=model_hash(model, rs),
        ruleset_version=rs.version,
        cells=tuple(cells),
        summary={},
    )
    return Assessment(
        model=assessment.model,
        model_hash=assessment.model_hash,
        ruleset_version=assessment.ruleset_version,
        cells=assessment.cells,
        summary=threat_exposure(assessment, rs),
    )


def threat_exposure(assessment: Assessment, ruleset: RuleSet | None = None) -> Summary:
    """Per-scope threat exposure: over the scope's applicable cells whose
    guideline carries a threat tag, the share not fully supported."""
    rs = ruleset or default_ruleset()
    threats_by_id = {g.id: g.threats for g in rs.guidelines}
    scopes = sorted({c.node for c in assessment.cells}, key=scope_sort_key)
    counts: dict[str, dict[ThreatType, list[int]]] = {
        scope: {t: [0, 0] for t in ThreatType} for scope in scopes
    }
    for cell in assessment.cells:
        if cell.status is CellStatus.NOT_APPLICABLE:
            continue
        for threat in threats_by_id[cell.guideline]:
            entry = counts[cell.node][threat]
            entry[0] += 1
            if cell.status is CellStatus.FULLY_SUPPORTED:
                entry[1] += 1
    return {
        scope: {
            threat: ThreatStat(applicable=pair[0], mitigated=pair[1])
            for threat, pair in per_threat.items()
        }
        for scope, per_threat in counts.items()
    }


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def assessment_to_json(assessment: Assessment) -> str:
    """Canonical assessment JSON: stable field order, no timestamps."""
    doc = {
        "model": assessment.model,
        "model_hash": assessment.model_hash,
        "ruleset_version": assessment.ruleset_version,
        "cells": [
            {
                "node": c.node,
                "guideline": c.guideline,
                "phase": c.phase.value,
                "status": c.status.value,
                "provenance": c.provenance.value,
                "note": c.note,
                "evidence": list(c.evidence),
            }
            for c in assessment.cells
        ],
        "summary": {
            scope: {
                threat.value: {
                    "applicable": stat.applicable,
                    "mitigated": stat.mitigated,
                    "exposure": round(stat.exposure, 6),
                }
                for threat, stat in sorted(per.items(), key=lambda kv: kv[0].value)
            }
            for scope, per in sorted(
                assessment.summary.items(), key=lambda kv: scope_sort_key(kv[0])
            )
        },
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def assessment_from_json(text: str) -> Assessment:
    """Parse assessment JSON produced by assessment_to_json."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PbdError(f"not valid JSON: {exc}", code="INVALID_ASSESSMENT") from exc
    try:
        cells = tuple(
            AssessmentCell(
                node=c["node"],
                guideline=int(c["guideline"]),
                phase=Phase(c["phase"]),
                status=CellStatus(c["status"]),
                provenance=Provenance(c["provenance"]),
                note=c.get("note"),
                evidence=tuple(c.get("evidence", ())),
            )
            for c in doc["cells"]
        )
        summary = {
            scope: {
                ThreatType(threat): ThreatStat(
                    applicable=int(stat["applicable"]), mitigated=int(stat["mitigated"])
                )
                for threat, stat in per.items()
            }
            for scope, per in doc.get("summary", {}).items()
        }
        return Assessment(
            model=doc["model"],
            model_hash=doc["model_hash"],
            ruleset_version=doc["ruleset_version"],
            cells=cells,
            summary=summary,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PbdError(
            f"malformed assessment document: {exc}", code="INVALID_ASSESSMENT"
        ) from exc
