from __future__ import annotations

import re

import pytest

from pbd import (
    CellStatus,
    Phase,
    ReportError,
    SYSTEM_SCOPE,
    auto_assess,
    diff,
    parse_model,
    render_assessment,
    render_diff,
    render_dfd,
    RenderFormat,
    assessment_to_json,
)
from pbd.report import STATUS_GLYPHS

from dot_checker import check_dot

CHAIN = """
system "chain"
node sensor s1 { phases: cda, dd data temp {} }
node gateway gw { phases: cda, dpp, dd }
node cloud backend { phases: cda, dpa, ds }
flow s1 -> gw { data: [temp] channel: plaintext }
flow gw -> backend { data: [temp] channel: tls }
"""


@pytest.fixture()
def chain_assessment(ruleset):
    return auto_assess(parse_model(CHAIN, ruleset), ruleset)


def test_status_glyphs_match_published_codes():
    assert STATUS_GLYPHS[CellStatus.NOT_APPLICABLE] == "◻"
    assert STATUS_GLYPHS[CellStatus.FULLY_SUPPORTED] == "◼"
    assert STATUS_GLYPHS[CellStatus.PARTIALLY_SUPPORTED] == "◧"
    assert STATUS_GLYPHS[CellStatus.NOT_SUPPORTED] == "✗"
    assert STATUS_GLYPHS[CellStatus.UNASSESSED] == "?"


def test_markdown_has_one_matrix_per_scope_with_catalog_labels(chain_assessment, ruleset):
    text = render_assessment(chain_assessment, RenderFormat.MARKDOWN, ruleset)
    assert text.count("## Node ") == 3
    assert "## System scope" in text
    for scope_chunk in text.split("## ")[1:5]:
        rows = [l for l in scope_chunk.splitlines() if re.match(r"\| \d+ \|", l)]
        assert len(rows) == 30
        labels = [r.split("|")[2].strip() for r in rows]
        assert labels == [g.name for g in ruleset.guidelines]


def test_unutilized_phases_render_as_na_glyphs(ruleset):
    model = parse_model('system "tiny"\nnode sensor s { phases: cda, dd data d {} }')
    text = render_assessment(auto_assess(model, ruleset), RenderFormat.MARKDOWN, ruleset)
    row = next(l for l in text.splitlines() if l.startswith("| 5 |"))
    # storage-only guideline: every cell blank square on a cda/dd node
    assert row.split("|")[3:9] == [" ◻ "] * 6


def test_full_cells_render_black_square(smarthome, ruleset):
    a = auto_assess(smarthome, ruleset)
    text = render_assessment(a, RenderFormat.MARKDOWN, ruleset)
    assert "◼" in text
    assert "◻" in text


def test_rendering_is_deterministic(chain_assessment, ruleset):
    for fmt in (RenderFormat.ANSI, RenderFormat.MARKDOWN, RenderFormat.JSON):
        assert render_assessment(chain_assessment, fmt, ruleset) == render_assessment(
            chain_assessment, fmt, ruleset
        )


def test_ansi_color_toggle(chain_assessment, ruleset):
    colored = render_assessment(chain_assessment, RenderFormat.ANSI, ruleset, color=True)
    plain = render_assessment(chain_assessment, RenderFormat.ANSI, ruleset, color=False)
    assert "\x1b[" in colored
    assert "\x1b[" not in plain


def test_json_format_is_canonical_serialization(chain_assessment, ruleset):
    assert render_assessment(
        chain_assessment, RenderFormat.JSON, ruleset
    ) == assessment_to_json(chain_assessment)


def test_gap_list_contains_every_applicable_non_full_cell_once(chain_assessment, ruleset):
    text = render_assessment(chain_assessment, RenderFormat.MARKDOWN, ruleset)
    gap_lines = [l for l in text.split("## Gaps")[1].splitlines() if l.startswith("- ")]
    expected = [
        c
        for c in chain_assessment.cells
        if c.status not in (CellStatus.NOT_APPLICABLE, CellStatus.FULLY_SUPPORTED)
    ]
    assert len(gap_lines) == len(expected)
    seen = set()
    for line in gap_lines:
        m = re.match(r"- (\S+) g(\d+) (\w+): (\w+)", line)
        assert m, line
        key = (m.group(1), int(m.group(2)), m.group(3))
        assert key not in seen
        seen.add(key)
    assert seen == {(c.node, c.guideline, c.phase.value) for c in expected}


def test_gap_list_sorted_by_threat_count_then_guideline(chain_assessment, ruleset):
    text = render_assessment(chain_assessment, RenderFormat.MARKDOWN, ruleset)
    gap_lines = [l for l in text.split("## Gaps")[1].splitlines() if l.startswith("- ")]
    ranks = []
    for line in gap_lines:
        gid = int(re.match(r"- \S+ g(\d+)", line).group(1))
        ranks.append((-len(ruleset.guideline(gid).threats), gid))
    assert ranks == sorted(ranks)


def test_dot_format_is_rejected_for_assessments(chain_assessment):
    with pytest.raises(ReportError) as err:
        render_assessment(chain_assessment, RenderFormat.DOT)
    assert err.value.code == "FORMAT_MISMATCH"


# --- data-flow diagrams ------------------------------------------------------


def test_dfd_structure_for_chain():
    model = parse_model(CHAIN)
    dot = render_dfd(model)
    check_dot(dot)
    assert dot.count("->") == 2
    assert dot.count("shape=box") == 3
    assert "temp (tls)" in dot
    assert '"gw" [label="gw\\n[gateway]\\ncda, dpp, dd", shape=box];' in dot


def test_dfd_plaintext_edges_are_dashed_red():
    dot = render_dfd(parse_model(CHAIN))
    plaintext_line = next(l for l in dot.splitlines() if "plaintext" in l)
    assert "style=dashed" in plaintext_line
    assert "color=red" in plaintext_line
    tls_line = next(l for l in dot.splitlines() if "(tls)" in l)
    assert "style=solid" in tls_line


def test_dfd_edge_count_matches_flow_count_on_fan_in():
    src = """
    system "fan"
    node sensor a { phases: cda, dd data x {} }
    node sensor b { phases: cda, dd data y {} }
    node cloud c { phases: cda, ds }
    flow a -> c { data: [x] channel: tls }
    flow b -> c { data: [y] channel: tls }
    """
    model = parse_model(src)
    dot = render_dfd(model)
    check_dot(dot)
    assert dot.count("->") == len(model.flows)


def test_dfd_is_valid_dot_for_bundled_models(smarthome, cloud_middleware):
    check_dot(render_dfd(smarthome))
    check_dot(render_dfd(cloud_middleware))


def test_dfd_escapes_awkward_names():
    model = parse_model(serialize_text := 'system "we \\"said\\" so"\nnode sensor s { phases: cda }')
    del serialize_text
    dot = render_dfd(model)
    check_dot(dot)


def test_checker_rejects_broken_dot():
    with pytest.raises(ValueError):
        check_dot("digraph { a -> }")
    with pytest.raises(ValueError):
        check_dot("graph g { a -- b ")


# --- diff ---------------------------------------------------------------------


def test_diff_of_identical_assessments_is_empty(chain_assessment):
    report = diff(chain_assessment, chain_assessment)
    assert report.is_empty
    assert "no differences" in render_diff(report)


def test_diff_detects_exactly_the_added_capability(ruleset):
    base = parse_model(CHAIN, ruleset)
    richer = parse_model(
        CHAIN.replace(
            "node cloud backend { phases: cda, dpa, ds }",
            "node cloud backend { phases: cda, dpa, ds capability encrypt-rest {} }",
        ),
        ruleset,
    )
    report = diff(auto_assess(base, ruleset), auto_assess(richer, ruleset))
    assert not report.added_nodes and not report.removed_nodes
    assert report.changed
    assert {(c.node, c.guideline) for c in report.changed} == {("backend", 11)}


def test_diff_is_symmetric_in_structure(ruleset):
    base = auto_assess(parse_model(CHAIN, ruleset), ruleset)
    other_model = parse_model(CHAIN.replace("channel: plaintext", "channel: tls"), ruleset)
    other = auto_assess(other_model, ruleset)
    fwd = diff(base, other)
    rev = diff(other, base)
    assert {(c.node, c.guideline, c.phase, c.old_status, c.new_status) for c in fwd.changed} == {
        (c.node, c.guideline, c.phase, c.new_status, c.old_status) for c in rev.changed
    }


def test_diff_reports_node_set_changes(ruleset):
    base = auto_assess(parse_model(CHAIN, ruleset), ruleset)
    smaller_model = parse_model(
        'system "chain"\nnode sensor s1 { phases: cda, dd data temp {} }', ruleset
    )
    smaller = auto_assess(smaller_model, ruleset)
    report = diff(base, smaller)
    assert report.removed_nodes == ("backend", "gw")
    assert not report.added_nodes


def test_diff_rejects_ruleset_mismatch(chain_assessment):
    from dataclasses import replace

    other = replace(chain_assessment, ruleset_version="999.0")
    with pytest.raises(ReportError) as err:
        diff(chain_assessment, other)
    assert err.value.code == "RULESET_MISMATCH"
