"""Guideline catalog: the 30 privacy-by-design guidelines and their applicability matrix.

The matrix (which guideline can be assessed in which data life cycle phase,
and which privacy threat each guideline mitigates) ships as a bundled JSON
data file so ambiguous cells can be corrected without code changes. This
module loads and validates that file and answers lookups against it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import RulesetError, UnknownGuidelineError

__all__ = [
    "Phase",
    "ThreatType",
    "CheckKind",
    "StrategyGroup",
    "CapabilityKind",
    "DeviceCategory",
    "FeasibilityLevel",
    "FeasibilityHint",
    "Guideline",
    "RuleSet",
    "PIPELINE_PHASES",
    "PARAM_VOCAB",
    "THREAT_SYMBOLS",
    "load_ruleset",
    "default_ruleset",
    "applicable_phases",
    "threats_of",
]


class Phase(Enum):
    """Data life cycle phases, plus the platform-scope demonstrate column."""

    CDA = "cda"  # consent and data acquisition
    DPP = "dpp"  # data preprocessing
    DPA = "dpa"  # data processing and analysis
    DS = "ds"    # data storage
    DD = "dd"    # data dissemination
    DEM = "dem"  # demonstrate: platform-scope, not a pipeline stage

    @property
    def is_pipeline(self) -> bool:
        return self is not Phase.DEM


PIPELINE_PHASES = (Phase.CDA, Phase.DPP, Phase.DPA, Phase.DS, Phase.DD)

_PHASE_ORDER = {p: i for i, p in enumerate(PIPELINE_PHASES)}


def phase_sort_key(phase: Phase) -> int:
    """Pipeline order CDA..DD, with DEM ordered last for display purposes."""
    return _PHASE_ORDER.get(phase, len(PIPELINE_PHASES))


class ThreatType(Enum):
    SECONDARY_USAGE = "secondary_usage"
    UNAUTHORIZED_ACCESS = "unauthorized_access"


THREAT_SYMBOLS = {
    ThreatType.SECONDARY_USAGE: "⊗",      # circled times
    ThreatType.UNAUTHORIZED_ACCESS: "⊖",  # circled minus
}


class CheckKind(Enum):
    AUTO = "auto"
    MANUAL = "manual"


class StrategyGroup(Enum):
    MINIMISE = "minimise"
    HIDE = "hide"
    SEPARATE = "separate"
    AGGREGATE = "aggregate"
    INFORM = "inform"
    CONTROL = "control"
    DEMONSTRATE = "demonstrate"


class DeviceCategory(Enum):
    SENSOR = "sensor"
    GATEWAY = "gateway"
    SERVER = "server"
    CLOUD = "cloud"


class FeasibilityLevel(Enum):
    FEASIBLE = "feasible"
    CONSTRAINED = "constrained"


class CapabilityKind(Enum):
    """One declaration vocabulary entry per guideline, in guideline order 1..30."""

    MINIMIZE_ACQUISITION = "minimize-acquisition"
    SOURCE_MINIMIZATION = "source-minimization"
    SECONDARY_CONTEXT_CONVERSION = "secondary-context-conversion"
    KNOWLEDGE_SCOPE_LIMIT = "knowledge-scope-limit"
    STORAGE_MINIMIZATION = "storage-minimization"
    RETENTION_LIMIT = "retention-limit"
    HIDDEN_ROUTING = "hidden-routing"
    ANONYMIZE = "anonymize"
    ENCRYPT_TRANSIT = "encrypt-transit"
    ENCRYPTED_PROCESSING = "encrypted-processing"
    ENCRYPT_REST = "encrypt-rest"
    GRANULARITY_REDUCTION = "granularity-reduction"
    QUERY_ANSWERING = "query-answering"
    QUERY_RATE_LIMIT = "query-rate-limit"
    DISTRIBUTED_PROCESSING = "distributed-processing"
    DISTRIBUTED_STORAGE = "distributed-storage"
    AGG_KNOWLEDGE = "agg-knowledge"
    AGG_GEOGRAPHY = "agg-geography"
    AGG_CHAIN = "agg-chain"
    AGG_TIME_PERIOD = "agg-time-period"
    AGG_CATEGORY = "agg-category"
    INFORM = "inform"
    CONTROL = "control"
    LOGGING = "logging"
    AUDITING = "auditing"
    OPEN_SOURCE = "open-source"
    DFD_PUBLISHED = "dfd-published"
    CERTIFICATION = "certification"
    STANDARDIZATION = "standardization"
    COMPLIANCE = "compliance"


# The registry: enumeration order maps kinds to guideline ids 1..30, bijectively.
CAPABILITY_REGISTRY: dict[CapabilityKind, int] = {
    kind: i + 1 for i, kind in enumerate(CapabilityKind)
}

_KIND_ORDER = {kind: i for i, kind in enumerate(CapabilityKind)}


def kind_sort_key(kind: CapabilityKind) -> int:
    return _KIND_ORDER[kind]


# Documented parameter vocabulary per capability kind. `note` is accepted
# everywhere as a free-form remark. Unknown keys are a validation error.
PARAM_VOCAB: dict[CapabilityKind, frozenset[str]] = {
    CapabilityKind.MINIMIZE_ACQUISITION: frozenset({"types", "duration", "frequency"}),
    CapabilityKind.SOURCE_MINIMIZATION: frozenset({"sources"}),
    CapabilityKind.SECONDARY_CONTEXT_CONVERSION: frozenset({"method"}),
    CapabilityKind.KNOWLEDGE_SCOPE_LIMIT: frozenset({"scope"}),
    CapabilityKind.STORAGE_MINIMIZATION: frozenset({"aspects"}),
    CapabilityKind.RETENTION_LIMIT: frozenset({"period"}),
    CapabilityKind.HIDDEN_ROUTING: frozenset({"mechanism"}),
    CapabilityKind.ANONYMIZE: frozenset({"method"}),
    CapabilityKind.ENCRYPT_TRANSIT: frozenset({"protocol"}),
    CapabilityKind.ENCRYPTED_PROCESSING: frozenset({"scheme"}),
    CapabilityKind.ENCRYPT_REST: frozenset({"algorithm"}),
    CapabilityKind.GRANULARITY_REDUCTION: frozenset({"to"}),
    CapabilityKind.QUERY_ANSWERING: frozenset({"interface"}),
    CapabilityKind.QUERY_RATE_LIMIT: frozenset({"window", "limit"}),
    CapabilityKind.DISTRIBUTED_PROCESSING: frozenset({"method"}),
    CapabilityKind.DISTRIBUTED_STORAGE: frozenset({"method"}),
    CapabilityKind.AGG_KNOWLEDGE: frozenset({"method"}),
    CapabilityKind.AGG_GEOGRAPHY: frozenset({"region"}),
    CapabilityKind.AGG_CHAIN: frozenset({"method"}),
    CapabilityKind.AGG_TIME_PERIOD: frozenset({"window"}),
    CapabilityKind.AGG_CATEGORY: frozenset({"categories"}),
    CapabilityKind.INFORM: frozenset({"method", "url"}),
    CapabilityKind.CONTROL: frozenset({"aspects"}),
    CapabilityKind.LOGGING: frozenset({"events"}),
    CapabilityKind.AUDITING: frozenset({"auditor"}),
    CapabilityKind.OPEN_SOURCE: frozenset({"url", "license"}),
    CapabilityKind.DFD_PUBLISHED: frozenset({"url"}),
    CapabilityKind.CERTIFICATION: frozenset({"authority", "seal"}),
    CapabilityKind.STANDARDIZATION: frozenset({"standard"}),
    CapabilityKind.COMPLIANCE: frozenset({"regulation"}),
}


@dataclass(frozen=True)
class Guideline:
    id: int
    name: str
    strategy: StrategyGroup
    applicable: frozenset[Phase]
    threats: frozenset[ThreatType]
    check: CheckKind
    capabilities: frozenset[CapabilityKind]
    summary: str
    note: str | None = None


@dataclass(frozen=True)
class FeasibilityHint:
    capability: CapabilityKind
    category: DeviceCategory
    level: FeasibilityLevel


@dataclass(frozen=True)
class RuleSet:
    version: str
    guidelines: tuple[Guideline, ...]
    hints: tuple[FeasibilityHint, ...]
    registry: dict[CapabilityKind, int] = field(default_factory=lambda: dict(CAPABILITY_REGISTRY))

    def guideline(self, guideline_id: int) -> Guideline:
        if not isinstance(guideline_id, int) or not 1 <= guideline_id <= len(self.guidelines):
            raise UnknownGuidelineError(guideline_id)
        return self.guidelines[guideline_id - 1]

    def kind_for(self, guideline_id: int) -> CapabilityKind:
        """The capability kind registered for a guideline id."""
        self.guideline(guideline_id)
        return list(CapabilityKind)[guideline_id - 1]

    def feasibility(self, capability: CapabilityKind, category: DeviceCategory) -> FeasibilityLevel:
        for hint in self.hints:
            if hint.capability is capability and hint.category is category:
                return hint.level
        return FeasibilityLevel.FEASIBLE


def applicable_phases(ruleset: RuleSet, guideline_id: int) -> frozenset[Phase]:
    """Phases in which a guideline can be assessed, per the applicability matrix."""
    return ruleset.guideline(guideline_id).applicable


def threats_of(ruleset: RuleSet, guideline_id: int) -> frozenset[ThreatType]:
    """Threat tags a guideline mitigates; empty for purely demonstrative rows."""
    return ruleset.guideline(guideline_id).threats


def _parse_enum(enum_cls, value, what: str, where: str, source: str):
    try:
        return enum_cls(value)
    except (ValueError, TypeError):
        allowed = ", ".join(m.value for m in enum_cls)
        raise RulesetError(
            f"{where}: invalid {what} {value!r} (expected one of: {allowed})", source=source
        ) from None


def _parse_guideline(raw: object, index: int, source: str) -> Guideline:
    where = f"guidelines[{index}]"
    if not isinstance(raw, dict):
        raise RulesetError(f"{where}: expected an object", source=source)
    gid = raw.get("id")
    if not isinstance(gid, int):
        raise RulesetError(f"{where}: missing or non-integer id", source=source)
    where = f"guideline {gid}"
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise RulesetError(f"{where}: missing name", source=source)
    strategy = _parse_enum(StrategyGroup, raw.get("strategy"), "strategy", where, source)
    applicable_raw = raw.get("applicable")
    if not isinstance(applicable_raw, list) or not applicable_raw:
        raise RulesetError(f"{where}: applicable phase set must be a non-empty list", source=source)
    applicable = frozenset(
        _parse_enum(Phase, p, "phase", where, source) for p in applicable_raw
    )
    threats_raw = raw.get("threats")
    if not isinstance(threats_raw, list):
        raise RulesetError(f"{where}: threats must be a list", source=source)
    threats = frozenset(
        _parse_enum(ThreatType, t, "threat", where, source) for t in threats_raw
    )
    check = _parse_enum(CheckKind, raw.get("check"), "check kind", where, source)
    caps_raw = raw.get("capabilities")
    if not isinstance(caps_raw, list):
        raise RulesetError(f"{where}: capabilities must be a list", source=source)
    capabilities = frozenset(
        _parse_enum(CapabilityKind, c, "capability kind", where, source) for c in caps_raw
    )
    note = raw.get("note")
    if note is not None and not isinstance(note, str):
        raise RulesetError(f"{where}: note must be a string", source=source)
    summary = raw.get("summary", "")
    if not isinstance(summary, str):
        raise RulesetError(f"{where}: summary must be a string", source=source)
    return Guideline(
        id=gid,
        name=name,
        strategy=strategy,
        applicable=applicable,
        threats=threats,
        check=check,
        capabilities=capabilities,
        summary=summary,
        note=note,
    )


def _validate(guidelines: list[Guideline], hints: list[FeasibilityHint], source: str) -> None:
    expected = len(CapabilityKind)
    seen: dict[int, Guideline] = {}
    for g in guidelines:
        if g.id in seen:
            raise RulesetError(f"duplicate id {g.id}", source=source)
        seen[g.id] = g
    for gid in range(1, expected + 1):
        if gid not in seen:
            raise RulesetError(f"missing id {gid}", source=source)
    if len(guidelines) != expected:
        extra = sorted(set(seen) - set(range(1, expected + 1)))
        raise RulesetError(f"unexpected guideline ids {extra}", source=source)
    for g in guidelines:
        own_kind = list(CapabilityKind)[g.id - 1]
        if g.check is CheckKind.AUTO:
            if g.capabilities != frozenset({own_kind}):
                raise RulesetError(
                    f"guideline {g.id}: auto check must list exactly its registered "
                    f"capability {own_kind.value!r}",
                    source=source,
                )
        elif g.capabilities:
            raise RulesetError(
                f"guideline {g.id}: manual check must not list capabilities", source=source
            )
    pairs = set()
    for hint in hints:
        key = (hint.capability, hint.category)
        if key in pairs:
            raise RulesetError(
                f"duplicate feasibility hint for {hint.capability.value}/{hint.category.value}",
                source=source,
            )
        pairs.add(key)


def load_ruleset(source: str | Path | None = None) -> RuleSet:
    """Load and validate a ruleset, from a file or the bundled default.

    Raises RulesetError naming the first violated invariant.
    """
    if source is None:
        label = "<bundled>"
        text = resources.files("pbd.data").joinpath("ruleset.json").read_text("utf-8")
    else:
        label = str(source)
        try:
            text = Path(source).read_text("utf-8")
        except OSError as exc:
            raise RulesetError(f"cannot read ruleset: {exc}", source=label) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RulesetError(f"not valid JSON: {exc}", source=label) from exc
    if not isinstance(doc, dict):
        raise RulesetError("top level must be an object", source=label)
    version = doc.get("version")
    if not isinstance(version, str) or not version:
        raise RulesetError("missing version", source=label)
    raw_guidelines = doc.get("guidelines")
    if not isinstance(raw_guidelines, list):
        raise RulesetError("guidelines must be a list", source=label)
    guidelines = [_parse_guideline(raw, i, label) for i, raw in enumerate(raw_guidelines)]
    raw_hints = doc.get("feasibility", [])
    if not isinstance(raw_hints, list):
        raise RulesetError("feasibility must be a list", source=label)
    hints = []
    for i, raw in enumerate(raw_hints):
        where = f"feasibility[{i}]"
        if not isinstance(raw, dict):
            raise RulesetError(f"{where}: expected an object", source=label)
        hints.append(
            FeasibilityHint(
                capability=_parse_enum(CapabilityKind, raw.get("capability"), "capability", where, label),
                category=_parse_enum(DeviceCategory, raw.get("category"), "category", where, label),
                level=_parse_enum(FeasibilityLevel, raw.get("level"), "level", where, label),
            )
        )
    _validate(guidelines, hints, label)
    guidelines.sort(key=lambda g: g.id)
    return RuleSet(version=version, guidelines=tuple(guidelines), hints=tuple(hints))


_DEFAULT: RuleSet | None = None


def default_ruleset() -> RuleSet:
    """The bundled ruleset, loaded once and shared (it is immutable)."""
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_ruleset()
    return _DEFAULT
