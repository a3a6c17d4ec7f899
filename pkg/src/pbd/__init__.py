"""Privacy-by-design assessment for IoT system models.

Model a deployment (nodes, data, flows, declared privacy capabilities) in
a small DSL, and this package computes which of the 30 privacy-by-design
guidelines apply where, auto-evaluates the mechanically checkable ones by
propagating data attributes through the flow graph, merges assessor
annotations for the rest, and renders assessment matrices, gap reports,
and data-flow diagrams.
"""

from .annotations import Annotation, AnnotationSet, merge, parse_annotations
from .catalog import (
    CapabilityKind,
    CheckKind,
    DeviceCategory,
    FeasibilityHint,
    FeasibilityLevel,
    Guideline,
    Phase,
    RuleSet,
    StrategyGroup,
    ThreatType,
    applicable_phases,
    default_ruleset,
    load_ruleset,
    threats_of,
)
from .engine import (
    Assessment,
    AssessmentCell,
    CellStatus,
    DataAttributes,
    FlowState,
    Provenance,
    SYSTEM_SCOPE,
    ThreatStat,
    assessment_from_json,
    assessment_to_json,
    auto_assess,
    propagate,
    threat_exposure,
)
from .errors import (
    EngineError,
    MergeError,
    ParseError,
    PbdError,
    ReportError,
    RulesetError,
    UnknownGuidelineError,
)
from .model import (
    Capability,
    Channel,
    DataItem,
    DataKind,
    Flow,
    Granularity,
    ModelIssue,
    Node,
    Severity,
    SystemModel,
    model_hash,
    parse_model,
    serialize_model,
    validate_model,
)
from .report import (
    CellChange,
    DiffReport,
    RenderFormat,
    diff,
    render_assessment,
    render_dfd,
    render_diff,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationSet",
    "Assessment",
    "AssessmentCell",
    "Capability",
    "CapabilityKind",
    "CellChange",
    "CellStatus",
    "Channel",
    "CheckKind",
    "DataAttributes",
    "DataItem",
    "DataKind",
    "DeviceCategory",
    "DiffReport",
    "EngineError",
    "FeasibilityHint",
    "FeasibilityLevel",
    "Flow",
    "FlowState",
    "Granularity",
    "Guideline",
    "MergeError",
    "ModelIssue",
    "Node",
    "ParseError",
    "PbdError",
    "Phase",
    "Provenance",
    "RenderFormat",
    "ReportError",
    "RuleSet",
    "RulesetError",
    "SYSTEM_SCOPE",
    "Severity",
    "StrategyGroup",
    "SystemModel",
    "ThreatStat",
    "ThreatType",
    "UnknownGuidelineError",
    "applicable_phases",
    "assessment_from_json",
    "assessment_to_json",
    "auto_assess",
    "default_ruleset",
    "diff",
    "load_ruleset",
    "merge",
    "model_hash",
    "parse_annotations",
    "parse_model",
    "propagate",
    "render_assessment",
    "render_dfd",
    "render_diff",
    "serialize_model",
    "threat_exposure",
    "threats_of",
    "validate_model",
]
