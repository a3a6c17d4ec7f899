"""System model DSL: types, parser, validator, and canonical serializer.

A ``.pbd`` document declares the deployment under assessment: nodes with
their utilised life cycle phases, the data items they acquire, the privacy
capabilities they claim, the flows between them, and platform-scope
``demonstrate`` declarations. The serializer emits one canonical form
(sorted declarations, fixed attribute order) so equal models are equal
bytes, which is what assessment hashing and diffing build on.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum

from .catalog import (
    CapabilityKind,
    DeviceCategory,
    FeasibilityLevel,
    PARAM_VOCAB,
    PIPELINE_PHASES,
    Phase,
    RuleSet,
    default_ruleset,
    kind_sort_key,
    phase_sort_key,
)
from .errors import ParseError

__all__ = [
    "DataKind",
    "Granularity",
    "Channel",
    "DeviceCategory",
    "SourceLoc",
    "DataItem",
    "Capability",
    "Node",
    "Flow",
    "SystemModel",
    "Severity",
    "ModelIssue",
    "parse_model",
    "validate_model",
    "serialize_model",
    "model_hash",
    "default_at_phases",
    "is_iso_duration",
]


class DataKind(Enum):
    RAW = "raw"
    SECONDARY = "secondary"
    AGGREGATE = "aggregate"


class Granularity(Enum):
    FINE = "fine"
    MEDIUM = "medium"
    COARSE = "coarse"


class Channel(Enum):
    """Flow transport. LOCAL marks locally acquired data, not a flow channel."""

    PLAINTEXT = "plaintext"
    LINK_ENCRYPTED = "link-encrypted"
    TLS = "tls"
    ONION = "onion"
    LOCAL = "local"


FLOW_CHANNELS = (Channel.PLAINTEXT, Channel.LINK_ENCRYPTED, Channel.TLS, Channel.ONION)

# Node ids that would collide with the platform-scope row in assessments.
RESERVED_NODE_IDS = {"system"}

_DURATION_RE = re.compile(
    r"^P(?=.)(\d+Y)?(\d+M)?(\d+W)?(\d+D)?(T(?=.)(\d+H)?(\d+M)?(\d+S)?)?$"
)


def is_iso_duration(text: str) -> bool:
    """True for ISO-8601 durations like P90D, P1M, or PT30S."""
    return bool(_DURATION_RE.match(text))


@dataclass(frozen=True)
class SourceLoc:
    line: int = 0
    column: int = 0

    def __str__(self) -> str:
        return f"line {self.line}, column {self.column}"


_NO_LOC = SourceLoc()


@dataclass(frozen=True)
class DataItem:
    name: str
    kind: DataKind = DataKind.RAW
    personal: bool = True
    granularity: Granularity = Granularity.FINE
    retention: str | None = None
    source_count: int | None = None
    loc: SourceLoc = field(default=_NO_LOC, compare=False)


@dataclass(frozen=True, eq=False)
class Capability:
    kind: CapabilityKind
    at_phases: frozenset[Phase]
    params: dict[str, str] = field(default_factory=dict)
    loc: SourceLoc = field(default=_NO_LOC, compare=False)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Capability):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.at_phases == other.at_phases
            and self.params == other.params
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.at_phases, tuple(sorted(self.params.items()))))

    def covers(self, phase: Phase) -> bool:
        return phase in self.at_phases


@dataclass(frozen=True)
class Node:
    id: str
    category: DeviceCategory
    phases: frozenset[Phase]
    data: tuple[DataItem, ...] = ()
    capabilities: tuple[Capability, ...] = ()
    loc: SourceLoc = field(default=_NO_LOC, compare=False)


@dataclass(frozen=True)
class Flow:
    src: str
    dst: str
    data: frozenset[str] = frozenset()
    channel: Channel = Channel.PLAINTEXT
    loc: SourceLoc = field(default=_NO_LOC, compare=False)


@dataclass(frozen=True, eq=False)
class SystemModel:
    name: str
    nodes: tuple[Node, ...] = ()
    flows: tuple[Flow, ...] = ()
    demonstrate: tuple[Capability, ...] = ()

    def node(self, node_id: str) -> Node | None:
        for node in self.nodes:
            if node.id == node_id:
                return node
        return None

    def __eq__(self, other) -> bool:
        # Canonical-form equality: declaration order never matters.
        if not isinstance(other, SystemModel):
            return NotImplemented
        return serialize_model(self) == serialize_model(other)

    def __hash__(self) -> int:
        return hash(serialize_model(self))


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class ModelIssue:
    severity: Severity
    code: str
    message: str
    loc: SourceLoc = _NO_LOC

    def __str__(self) -> str:
        return f"{self.severity.value.upper()} [{self.code}] {self.loc}: {self.message}"


def default_at_phases(
    kind: CapabilityKind, node_phases: frozenset[Phase], ruleset: RuleSet | None = None
) -> frozenset[Phase]:
    """Phases a capability covers when declared without an ``@`` clause:
    every phase where its guideline is applicable and the node utilises."""
    rs = ruleset or default_ruleset()
    from .catalog import CAPABILITY_REGISTRY

    applicable = rs.guideline(CAPABILITY_REGISTRY[kind]).applicable
    return frozenset(applicable & node_phases)


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT = {
    "{": "LBRACE",
    "}": "RBRACE",
    ":": "COLON",
    ",": "COMMA",
    "@": "AT",
    "[": "LBRACKET",
    "]": "RBRACKET",
}

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | set("0123456789")

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int

    def describe(self) -> str:
        if self.kind == "EOF":
            return "end of input"
        if self.kind == "STRING":
            return "string"
        return repr(self.text)


def _lex(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if ch in _PUNCT:
            tokens.append(_Token(_PUNCT[ch], ch, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == "-" and i + 1 < n and text[i + 1] == ">":
            tokens.append(_Token("ARROW", "->", start_line, start_col))
            i += 2
            col += 2
            continue
        if ch == '"':
            i += 1
            col += 1
            parts: list[str] = []
            while True:
                if i >= n or text[i] == "\n":
                    raise ParseError("unterminated string", start_line, start_col)
                c = text[i]
                if c == '"':
                    i += 1
                    col += 1
                    break
                if c == "\\":
                    if i + 1 >= n:
                        raise ParseError("unterminated string", start_line, start_col)
                    esc = text[i + 1]
                    if esc in _ESCAPES:
                        parts.append(_ESCAPES[esc])
                        i += 2
                        col += 2
                        continue
                    if esc == "u":
                        hexpart = text[i + 2 : i + 6]
                        if len(hexpart) == 4 and all(h in "0123456789abcdefABCDEF" for h in hexpart):
                            parts.append(chr(int(hexpart, 16)))
                            i += 6
                            col += 6
                            continue
                    raise ParseError(f"invalid escape '\\{esc}'", line, col)
                parts.append(c)
                i += 1
                col += 1
            tokens.append(_Token("STRING", "".join(parts), start_line, start_col))
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            tokens.append(_Token("NUMBER", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        if ch in _IDENT_START:
            j = i + 1
            while j < n:
                if text[j] in _IDENT_CONT:
                    j += 1
                elif text[j] == "-" and j + 1 < n and text[j + 1] in _IDENT_CONT:
                    j += 2
                else:
                    break
            tokens.append(_Token("IDENT", text[i:j], start_line, start_col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(_Token("EOF", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_PHASE_TOKENS = {p.value: p for p in PIPELINE_PHASES}
_DATA_KINDS = {k.value: k for k in DataKind}
_GRANULARITIES = {g.value: g for g in Granularity}
_CATEGORIES = {c.value: c for c in DeviceCategory}
_CAP_KINDS = {k.value: k for k in CapabilityKind}
_FLOW_CHANNELS = {c.value: c for c in FLOW_CHANNELS}


class _Parser:
    def __init__(self, tokens: list[_Token], ruleset: RuleSet):
        self.tokens = tokens
        self.pos = 0
        self.ruleset = ruleset

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def fail(self, expected: str, tok: _Token | None = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(f"expected {expected}, found {tok.describe()}", tok.line, tok.col)

    def expect(self, kind: str, expected: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise self.fail(expected)
        return self.advance()

    def keyword(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.text != word:
            raise self.fail(f"'{word}'")
        return self.advance()

    def parse(self) -> SystemModel:
        self.keyword("system")
        name = self.expect("STRING", "system name string").text
        nodes: list[Node] = []
        node_locs: dict[str, SourceLoc] = {}
        flows: list[Flow] = []
        demonstrate: list[Capability] = []
        while self.peek().kind != "EOF":
            tok = self.peek()
            if tok.kind != "IDENT":
                raise self.fail("'node', 'flow', or 'demonstrate'")
            if tok.text == "node":
                node = self.parse_node()
                if node.id in node_locs:
                    first = node_locs[node.id]
                    raise ParseError(
                        f"duplicate node id '{node.id}' (first declared at {first})",
                        node.loc.line,
                        node.loc.column,
                    )
                node_locs[node.id] = node.loc
                nodes.append(node)
            elif tok.text == "flow":
                flows.append(self.parse_flow())
            elif tok.text == "demonstrate":
                demonstrate.append(self.parse_demonstrate())
            else:
                raise self.fail("'node', 'flow', or 'demonstrate'")
        return SystemModel(
            name=name, nodes=tuple(nodes), flows=tuple(flows), demonstrate=tuple(demonstrate)
        )

    def parse_node(self) -> Node:
        kw = self.keyword("node")
        cat_tok = self.expect("IDENT", "device category (sensor, gateway, server, cloud)")
        if cat_tok.text not in _CATEGORIES:
            raise self.fail("device category (sensor, gateway, server, cloud)", cat_tok)
        id_tok = self.expect("IDENT", "node id")
        if id_tok.text.lower() in RESERVED_NODE_IDS:
            raise ParseError(
                f"node id '{id_tok.text}' is reserved for the platform scope",
                id_tok.line,
                id_tok.col,
            )
        self.expect("LBRACE", "'{'")
        self.keyword("phases")
        self.expect("COLON", "':'")
        phases = frozenset(self.parse_phase_list())
        data: list[DataItem] = []
        data_locs: dict[str, SourceLoc] = {}
        caps: list[Capability] = []
        while self.peek().kind != "RBRACE":
            tok = self.peek()
            if tok.kind != "IDENT":
                raise self.fail("'data', 'capability', or '}'")
            if tok.text == "data":
                item = self.parse_data()
                if item.name in data_locs:
                    first = data_locs[item.name]
                    raise ParseError(
                        f"duplicate data item '{item.name}' (first declared at {first})",
                        item.loc.line,
                        item.loc.column,
                    )
                data_locs[item.name] = item.loc
                data.append(item)
            elif tok.text == "capability":
                caps.append(self.parse_capability(phases))
            else:
                raise self.fail("'data', 'capability', or '}'")
        self.expect("RBRACE", "'}'")
        return Node(
            id=id_tok.text,
            category=_CATEGORIES[cat_tok.text],
            phases=phases,
            data=tuple(data),
            capabilities=tuple(caps),
            loc=SourceLoc(kw.line, kw.col),
        )

    def parse_phase_list(self) -> list[Phase]:
        phases = [self.parse_phase()]
        while self.peek().kind == "COMMA":
            self.advance()
            phases.append(self.parse_phase())
        return phases

    def parse_phase(self) -> Phase:
        tok = self.expect("IDENT", "phase (cda, dpp, dpa, ds, dd)")
        if tok.text not in _PHASE_TOKENS:
            raise self.fail("phase (cda, dpp, dpa, ds, dd)", tok)
        return _PHASE_TOKENS[tok.text]

    def parse_data(self) -> DataItem:
        kw = self.keyword("data")
        name = self.expect("IDENT", "data item name").text
        attrs = self.parse_attr_block()
        kind = DataKind.RAW
        personal = True
        granularity = Granularity.FINE
        retention: str | None = None
        source_count: int | None = None
        for key, (vkind, value, loc) in attrs.items():
            if key == "kind":
                if vkind != "IDENT" or value not in _DATA_KINDS:
                    raise ParseError(
                        "kind must be raw, secondary, or aggregate", loc.line, loc.column
                    )
                kind = _DATA_KINDS[value]
            elif key == "personal":
                if vkind != "IDENT" or value not in ("true", "false"):
                    raise ParseError("personal must be true or false", loc.line, loc.column)
                personal = value == "true"
            elif key == "granularity":
                if vkind != "IDENT" or value not in _GRANULARITIES:
                    raise ParseError(
                        "granularity must be fine, medium, or coarse", loc.line, loc.column
                    )
                granularity = _GRANULARITIES[value]
            elif key == "retention":
                if vkind not in ("IDENT", "STRING") or not is_iso_duration(value):
                    raise ParseError(
                        f"retention must be an ISO-8601 duration (e.g. P90D), got {value!r}",
                        loc.line,
                        loc.column,
                    )
                retention = value
            elif key == "source_count":
                if vkind != "NUMBER" or not value.isdigit() or int(value) < 1:
                    raise ParseError(
                        "source_count must be a positive integer", loc.line, loc.column
                    )
                source_count = int(value)
            else:
                raise ParseError(f"unknown data attribute '{key}'", loc.line, loc.column)
        return DataItem(
            name=name,
            kind=kind,
            personal=personal,
            granularity=granularity,
            retention=retention,
            source_count=source_count,
            loc=SourceLoc(kw.line, kw.col),
        )

    def parse_capability(self, node_phases: frozenset[Phase]) -> Capability:
        kw = self.keyword("capability")
        kind_tok = self.expect("IDENT", "capability kind")
        if kind_tok.text not in _CAP_KINDS:
            raise ParseError(
                f"unknown capability kind '{kind_tok.text}'", kind_tok.line, kind_tok.col
            )
        kind = _CAP_KINDS[kind_tok.text]
        at: frozenset[Phase] | None = None
        if self.peek().kind == "AT":
            self.advance()
            at = frozenset(self.parse_phase_list())
        params = self.parse_params()
        if at is None:
            at = default_at_phases(kind, node_phases, self.ruleset)
        return Capability(kind=kind, at_phases=at, params=params, loc=SourceLoc(kw.line, kw.col))

    def parse_demonstrate(self) -> Capability:
        kw = self.keyword("demonstrate")
        kind_tok = self.expect("IDENT", "capability kind")
        if kind_tok.text not in _CAP_KINDS:
            raise ParseError(
                f"unknown capability kind '{kind_tok.text}'", kind_tok.line, kind_tok.col
            )
        params = self.parse_params()
        return Capability(
            kind=_CAP_KINDS[kind_tok.text],
            at_phases=frozenset({Phase.DEM}),
            params=params,
            loc=SourceLoc(kw.line, kw.col),
        )

    def parse_params(self) -> dict[str, str]:
        attrs = self.parse_attr_block()
        params: dict[str, str] = {}
        for key, (vkind, value, _loc) in attrs.items():
            params[key] = ",".join(value) if vkind == "LIST" else value
        return params

    def parse_flow(self) -> Flow:
        kw = self.keyword("flow")
        src = self.expect("IDENT", "source node id").text
        self.expect("ARROW", "'->'")
        dst = self.expect("IDENT", "destination node id").text
        attrs = self.parse_attr_block()
        data: frozenset[str] = frozenset()
        channel = Channel.PLAINTEXT
        for key, (vkind, value, loc) in attrs.items():
            if key == "data":
                if vkind == "IDENT":
                    data = frozenset({value})
                elif vkind == "LIST":
                    data = frozenset(value)
                else:
                    raise ParseError(
                        "data must be an item name or a list of item names", loc.line, loc.column
                    )
            elif key == "channel":
                if vkind != "IDENT" or value not in _FLOW_CHANNELS:
                    raise ParseError(
                        "channel must be plaintext, link-encrypted, tls, or onion",
                        loc.line,
                        loc.column,
                    )
                channel = _FLOW_CHANNELS[value]
            else:
                raise ParseError(f"unknown flow attribute '{key}'", loc.line, loc.column)
        return Flow(src=src, dst=dst, data=data, channel=channel, loc=SourceLoc(kw.line, kw.col))

    def parse_attr_block(self) -> dict[str, tuple[str, object, SourceLoc]]:
        self.expect("LBRACE", "'{'")
        attrs: dict[str, tuple[str, object, SourceLoc]] = {}
        while self.peek().kind != "RBRACE":
            key_tok = self.expect("IDENT", "attribute name or '}'")
            if key_tok.text in attrs:
                raise ParseError(
                    f"duplicate attribute '{key_tok.text}'", key_tok.line, key_tok.col
                )
            self.expect("COLON", "':'")
            attrs[key_tok.text] = self.parse_value(SourceLoc(key_tok.line, key_tok.col))
        self.expect("RBRACE", "'}'")
        return attrs

    def parse_value(self, loc: SourceLoc) -> tuple[str, object, SourceLoc]:
        tok = self.peek()
        if tok.kind in ("STRING", "IDENT", "NUMBER"):
            self.advance()
            return (tok.kind, tok.text, loc)
        if tok.kind == "LBRACKET":
            self.advance()
            items: list[str] = []
            if self.peek().kind != "RBRACKET":
                while True:
                    el = self.peek()
                    if el.kind not in ("STRING", "IDENT", "NUMBER"):
                        raise self.fail("list element")
                    self.advance()
                    items.append(el.text)
                    if self.peek().kind == "COMMA":
                        self.advance()
                        continue
                    break
            self.expect("RBRACKET", "']'")
            return ("LIST", items, loc)
        raise self.fail("attribute value")


def parse_model(text: str | bytes, ruleset: RuleSet | None = None) -> SystemModel:
    """Parse DSL text into a SystemModel.

    Accepts bytes for convenience; they must decode as UTF-8. Capability
    ``@`` defaults are resolved against the given ruleset (bundled default
    when omitted). Raises ParseError on any malformed input; never crashes.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not valid UTF-8: {exc}", 1, 1) from exc
    rs = ruleset or default_ruleset()
    return _Parser(_lex(text), rs).parse()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

_DURATION_PARAMS = {"period", "window", "duration"}


def _find_cycle(node_ids: list[str], edges: set[tuple[str, str]]) -> list[str] | None:
    graph: dict[str, list[str]] = {nid: [] for nid in node_ids}
    for src, dst in sorted(edges):
        graph[src].append(dst)
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    stack: list[str] = []

    def visit(nid: str) -> list[str] | None:
        state[nid] = 1
        stack.append(nid)
        for nxt in graph[nid]:
            if state.get(nxt) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if state.get(nxt) is None:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[nid] = 2
        return None

    for nid in node_ids:
        if state.get(nid) is None:
            found = visit(nid)
            if found:
                return found
    return None


def validate_model(model: SystemModel, ruleset: RuleSet | None = None) -> list[ModelIssue]:
    """All semantic issues in a parsed model. ERROR issues make the model
    unusable for assessment; WARNING issues are advisory."""
    rs = ruleset or default_ruleset()
    issues: list[ModelIssue] = []

    def error(code: str, message: str, loc: SourceLoc) -> None:
        issues.append(ModelIssue(Severity.ERROR, code, message, loc))

    def warning(code: str, message: str, loc: SourceLoc) -> None:
        issues.append(ModelIssue(Severity.WARNING, code, message, loc))

    node_ids = [n.id for n in model.nodes]
    by_id = {n.id: n for n in model.nodes}

    declared: dict[str, tuple[str, SourceLoc]] = {}
    for node in model.nodes:
        for item in node.data:
            if item.name in declared:
                first_node, first_loc = declared[item.name]
                error(
                    "DUPLICATE_DATA_ITEM",
                    f"data item '{item.name}' already declared at node "
                    f"'{first_node}' ({first_loc}); names must be unique across nodes",
                    item.loc,
                )
            else:
                declared[item.name] = (node.id, item.loc)
        if node.data and Phase.CDA not in node.phases:
            error(
                "MISSING_CDA",
                f"node '{node.id}' acquires data but does not utilise the cda phase",
                node.loc,
            )

    has_outbound: set[str] = set()
    valid_edges: set[tuple[str, str]] = set()
    for flow in model.flows:
        endpoints_ok = True
        for end in (flow.src, flow.dst):
            if end not in by_id:
                error("UNKNOWN_NODE", f"flow references unknown node '{end}'", flow.loc)
                endpoints_ok = False
        if flow.src == flow.dst:
            error("SELF_FLOW", f"flow from '{flow.src}' to itself", flow.loc)
            endpoints_ok = False
        if endpoints_ok:
            has_outbound.add(flow.src)
            valid_edges.add((flow.src, flow.dst))

    cycle = _find_cycle(node_ids, valid_edges)
    if cycle:
        error(
            "CYCLE",
            "flow graph must be acyclic; found cycle " + " -> ".join(cycle),
            _NO_LOC,
        )

    for node in model.nodes:
        if node.id in has_outbound and Phase.DD not in node.phases:
            error(
                "MISSING_DD",
                f"node '{node.id}' has outbound flows but does not utilise the dd phase",
                node.loc,
            )

    inbound: dict[str, set[str]] = {nid: set() for nid in node_ids}
    for flow in model.flows:
        if (flow.src, flow.dst) in valid_edges:
            inbound[flow.dst].update(flow.data)
    for flow in model.flows:
        if flow.src not in by_id:
            continue
        local = {item.name for item in by_id[flow.src].data}
        for name in sorted(flow.data):
            if name not in declared:
                error(
                    "UNKNOWN_DATA",
                    f"flow references undeclared data item '{name}'",
                    flow.loc,
                )
            elif name not in local and name not in inbound[flow.src]:
                error(
                    "UNREACHABLE_DATA",
                    f"data item '{name}' never reaches flow source '{flow.src}'",
                    flow.loc,
                )

    for node in model.nodes:
        for cap in node.capabilities:
            extra = cap.at_phases - node.phases
            if extra:
                names = ", ".join(sorted(p.value for p in extra))
                error(
                    "PHASE_NOT_UTILIZED",
                    f"capability {cap.kind.value} declared at phase(s) {names} "
                    f"that node '{node.id}' does not utilise",
                    cap.loc,
                )
            _check_params(cap, warning, error)
            if rs.feasibility(cap.kind, node.category) is FeasibilityLevel.CONSTRAINED:
                warning(
                    "FEASIBILITY",
                    f"{cap.kind.value} is typically constrained on "
                    f"{node.category.value} devices",
                    cap.loc,
                )

    for cap in model.demonstrate:
        _check_params(cap, warning, error)
        from .catalog import CAPABILITY_REGISTRY

        guideline = rs.guideline(CAPABILITY_REGISTRY[cap.kind])
        if Phase.DEM not in guideline.applicable:
            warning(
                "DEM_NOT_APPLICABLE",
                f"demonstrate {cap.kind.value} has no effect: guideline "
                f"{guideline.id} has no demonstrate column",
                cap.loc,
            )

    issues.sort(key=lambda i: (i.loc.line, i.loc.column, i.code, i.message))
    return issues


def _check_params(cap: Capability, warning, error) -> None:
    allowed = PARAM_VOCAB[cap.kind] | {"note"}
    for key in sorted(cap.params):
        if key not in allowed:
            error(
                "UNKNOWN_PARAM",
                f"{cap.kind.value} does not take parameter '{key}' "
                f"(allowed: {', '.join(sorted(allowed))})",
                cap.loc,
            )
        elif key in _DURATION_PARAMS and not is_iso_duration(cap.params[key]):
            warning(
                "INVALID_PARAM",
                f"{cap.kind.value} parameter '{key}' is not an ISO-8601 "
                f"duration: {cap.params[key]!r}",
                cap.loc,
            )


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------


def _quote(text: str) -> str:
    out = ['"']
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _phase_csv(phases: frozenset[Phase]) -> str:
    return ", ".join(p.value for p in sorted(phases, key=phase_sort_key))


def _capability_lines(cap: Capability, keyword: str, indent: str, default: frozenset[Phase] | None) -> list[str]:
    head = f"{indent}{keyword} {cap.kind.value}"
    if default is not None and cap.at_phases != default:
        head += " @ " + _phase_csv(cap.at_phases)
    if not cap.params:
        return [head + " {}"]
    lines = [head + " {"]
    for key in sorted(cap.params):
        lines.append(f"{indent}  {key}: {_quote(cap.params[key])}")
    lines.append(indent + "}")
    return lines


def serialize_model(model: SystemModel, ruleset: RuleSet | None = None) -> str:
    """Canonical text for a model: sorted declarations, fixed attribute
    order, capability phase lists omitted when they equal the default.
    Parsing the result yields a model equal to the input."""
    rs = ruleset or default_ruleset()
    blocks: list[str] = [f"system {_quote(model.name)}"]

    for node in sorted(model.nodes, key=lambda n: n.id):
        lines = [f"node {node.category.value} {node.id} {{"]
        lines.append(f"  phases: {_phase_csv(node.phases)}")
        for item in sorted(node.data, key=lambda d: d.name):
            lines.append(f"  data {item.name} {{")
            lines.append(f"    kind: {item.kind.value}")
            lines.append(f"    personal: {'true' if item.personal else 'false'}")
            lines.append(f"    granularity: {item.granularity.value}")
            if item.retention is not None:
                lines.append(f"    retention: {_quote(item.retention)}")
            if item.source_count is not None:
                lines.append(f"    source_count: {item.source_count}")
            lines.append("  }")
        caps = sorted(
            node.capabilities,
            key=lambda c: (
                kind_sort_key(c.kind),
                sorted(phase_sort_key(p) for p in c.at_phases),
                sorted(c.params.items()),
            ),
        )
        for cap in caps:
            default = default_at_phases(cap.kind, node.phases, rs)
            lines.extend(_capability_lines(cap, "capability", "  ", default))
        lines.append("}")
        blocks.append("\n".join(lines))

    flows = sorted(
        model.flows,
        key=lambda f: (f.src, f.dst, f.channel.value, sorted(f.data)),
    )
    for flow in flows:
        lines = [f"flow {flow.src} -> {flow.dst} {{"]
        lines.append("  data: [" + ", ".join(sorted(flow.data)) + "]")
        lines.append(f"  channel: {flow.channel.value}")
        lines.append("}")
        blocks.append("\n".join(lines))

    for cap in sorted(
        model.demonstrate, key=lambda c: (kind_sort_key(c.kind), sorted(c.params.items()))
    ):
        blocks.append("\n".join(_capability_lines(cap, "demonstrate", "", None)))

    return "\n\n".join(blocks) + "\n"


def model_hash(model: SystemModel, ruleset: RuleSet | None = None) -> str:
    """SHA-256 of the canonical model bytes, lowercase hex."""
    return hashlib.sha256(serialize_model(model, ruleset).encode("utf-8")).hexdigest()
