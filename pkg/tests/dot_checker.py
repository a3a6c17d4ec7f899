"""A small DOT-language grammar checker for validating emitted diagrams.

Implements the core of the published DOT grammar (graph, node_stmt,
edge_stmt, attr_stmt, attr assignment, subgraphs) over the three common ID
forms: names, numerals, and double-quoted strings. Raises ValueError with a
position on the first violation.
"""

from __future__ import annotations

import re

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|\#[^\n]*|/\*.*?\*/)
  | (?P<quoted>"(?:[^"\\]|\\.)*")
  | (?P<name>[A-Za-z_\200-\377][A-Za-z0-9_\200-\377]*)
  | (?P<numeral>-?(?:\.[0-9]+|[0-9]+(?:\.[0-9]*)?))
  | (?P<edgeop>->|--)
  | (?P<punct>[{}\[\];,=])
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {"strict", "graph", "digraph", "subgraph", "node", "edge"}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ValueError(f"dot: unexpected character at offset {pos}: {text[pos]!r}")
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        kind = m.lastgroup
        value = m.group()
        if kind in ("quoted", "name", "numeral"):
            tokens.append(("ID", value))
        else:
            tokens.append((kind.upper(), value))
    tokens.append(("EOF", ""))
    return tokens


class _DotParser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        if tok[0] != "EOF":
            self.pos += 1
        return tok

    def expect(self, value):
        kind, text = self.next()
        if text != value:
            raise ValueError(f"dot: expected {value!r}, found {text!r}")

    def expect_id(self):
        kind, text = self.next()
        if kind != "ID":
            raise ValueError(f"dot: expected an ID, found {text!r}")
        return text

    def is_keyword(self, word):
        kind, text = self.peek()
        return kind == "ID" and text.lower() == word

    def parse_graph(self):
        if self.is_keyword("strict"):
            self.next()
        if self.is_keyword("digraph") or self.is_keyword("graph"):
            self.next()
        else:
            raise ValueError("dot: expected 'graph' or 'digraph'")
        if self.peek()[0] == "ID":
            self.next()
        self.expect("{")
        self.parse_stmt_list()
        self.expect("}")
        if self.peek()[0] != "EOF":
            raise ValueError(f"dot: trailing content: {self.peek()[1]!r}")

    def parse_stmt_list(self):
        while self.peek()[1] != "}":
            self.parse_stmt()
            if self.peek()[1] == ";":
                self.next()

    def parse_stmt(self):
        if self.is_keyword("subgraph") or self.peek()[1] == "{":
            self.parse_subgraph()
            self.maybe_edge_rhs()
            return
        if self.is_keyword("node") or self.is_keyword("edge") or (
            self.is_keyword("graph") and self.tokens[self.pos + 1][1] == "["
        ):
            self.next()
            self.parse_attr_lists(required=True)
            return
        first = self.expect_id()
        del first
        if self.peek()[1] == "=":
            self.next()
            self.expect_id()
            return
        self.maybe_edge_rhs()
        self.parse_attr_lists(required=False)

    def parse_subgraph(self):
        if self.is_keyword("subgraph"):
            self.next()
            if self.peek()[0] == "ID":
                self.next()
        self.expect("{")
        self.parse_stmt_list()
        self.expect("}")

    def maybe_edge_rhs(self):
        while self.peek()[0] == "EDGEOP":
            self.next()
            if self.is_keyword("subgraph") or self.peek()[1] == "{":
                self.parse_subgraph()
            else:
                self.expect_id()

    def parse_attr_lists(self, required):
        seen = False
        while self.peek()[1] == "[":
            seen = True
            self.next()
            while self.peek()[1] != "]":
                self.expect_id()
                if self.peek()[1] == "=":
                    self.next()
                    self.expect_id()
                if self.peek()[1] in (",", ";"):
                    self.next()
            self.expect("]")
        if required and not seen:
            raise ValueError("dot: attr_stmt requires an attribute list")


def check_dot(text: str) -> None:
    """Raise ValueError if the text is not a syntactically valid DOT graph."""
    _DotParser(_tokenize(text)).parse_graph()
