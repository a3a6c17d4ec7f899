from __future__ import annotations

import pytest

from pbd import (
    CellStatus,
    MergeError,
    ParseError,
    Phase,
    Provenance,
    SYSTEM_SCOPE,
    auto_assess,
    merge,
    parse_annotations,
    parse_model,
    threat_exposure,
)

FIXTURE = """
system "annot"
node gateway hub {
  phases: cda, dpp, dpa, ds, dd
  data d {}
}
node cloud c { phases: cda, ds }
flow hub -> c { data: [d] channel: plaintext }
"""


@pytest.fixture()
def assessment(ruleset):
    return auto_assess(parse_model(FIXTURE, ruleset), ruleset)


def test_parse_single_record():
    text = 'assess hub g22 cda full by "R. Silva" on 2026-01-05: "consent screen shown"'
    annotations = parse_annotations(text)
    assert len(annotations) == 1
    ann = annotations.annotations[0]
    assert ann.node == "hub"
    assert ann.guideline == 22
    assert ann.phase is Phase.CDA
    assert ann.status is CellStatus.FULLY_SUPPORTED
    assert ann.assessor == "R. Silva"
    assert ann.note == "consent screen shown"


def test_parse_empty_file_and_comments():
    assert len(parse_annotations("")) == 0
    assert len(parse_annotations("# nothing\n\n   \n# more\n")) == 0


def test_parse_system_scope_and_escapes():
    text = 'assess system g26 dem none by "Q\\"A" on 2026-02-02: "code is closed \\"for now\\""'
    ann = parse_annotations(text).annotations[0]
    assert ann.node == SYSTEM_SCOPE
    assert ann.assessor == 'Q"A'
    assert ann.note == 'code is closed "for now"'


def test_parse_trailing_comment():
    text = 'assess hub g23 dd partial by "A" on 2026-01-01: "ok" # reviewed'
    assert parse_annotations(text).annotations[0].note == "ok"


def test_duplicate_target_rejected():
    text = (
        'assess hub g23 dd partial by "A" on 2026-01-01: "x"\n'
        'assess hub g23 dd none by "B" on 2026-01-02: "y"\n'
    )
    with pytest.raises(ParseError) as err:
        parse_annotations(text)
    assert err.value.code == "DUPLICATE_TARGET"
    assert "line 1" in str(err.value)
    assert err.value.line == 2


@pytest.mark.parametrize(
    "line,fragment",
    [
        ("assess hub g23 dd sideways by \"A\" on 2026-01-01: \"x\"", "malformed"),
        ("assess hub g23 dx none by \"A\" on 2026-01-01: \"x\"", "malformed"),
        ("assess hub g0 dd none by \"A\" on 2026-01-01: \"x\"", "out of range"),
        ("assess hub g31 dd none by \"A\" on 2026-01-01: \"x\"", "out of range"),
        ("assess hub g23 dd none by \"A\" on 2026-13-01: \"x\"", "invalid date"),
        ("assess hub g23 dd none by \"A\" on 2026-01-01: \"  \"", "empty"),
        ("review hub g23 dd none by \"A\" on 2026-01-01: \"x\"", "malformed"),
    ],
)
def test_parse_rejects_malformed(line, fragment):
    with pytest.raises(ParseError) as err:
        parse_annotations(line)
    assert fragment in str(err.value)
    assert err.value.line == 1


def test_merge_manual_cell(assessment, ruleset):
    annotations = parse_annotations(
        'assess hub g23 dd partial by "A. Byrne" on 2026-03-03: "pause switch only"'
    )
    merged = merge(assessment, annotations, ruleset)
    cell = merged.cell("hub", 23, Phase.DD)
    assert cell.status is CellStatus.PARTIALLY_SUPPORTED
    assert cell.provenance is Provenance.MANUAL
    assert cell.note == "pause switch only"
    assert "assessor:A. Byrne" in cell.evidence
    assert "date:2026-03-03" in cell.evidence


def test_merge_overrides_auto_cell_and_keeps_auto_result(assessment, ruleset):
    before = assessment.cell("hub", 9, Phase.CDA)
    assert before.status is CellStatus.NOT_SUPPORTED
    annotations = parse_annotations(
        'assess hub g9 cda full by "A. Byrne" on 2026-03-03: "VPN wraps the link"'
    )
    merged = merge(assessment, annotations, ruleset)
    cell = merged.cell("hub", 9, Phase.CDA)
    assert cell.status is CellStatus.FULLY_SUPPORTED
    assert cell.provenance is Provenance.MANUAL_OVERRIDE
    assert cell.evidence[0] == "auto:not_supported"
    assert set(before.evidence) <= set(cell.evidence)


def test_merge_rejects_not_applicable_target(assessment, ruleset):
    # node c does not utilise dd, so the g24 dd cell is not applicable
    annotations = parse_annotations(
        'assess c g24 dd full by "A" on 2026-03-03: "phase not utilised"'
    )
    with pytest.raises(MergeError) as err:
        merge(assessment, annotations, ruleset)
    assert err.value.code == "TARGET_NOT_APPLICABLE"


def test_merge_rejects_unknown_node(assessment, ruleset):
    annotations = parse_annotations(
        'assess ghost g23 dd full by "A" on 2026-03-03: "who"'
    )
    with pytest.raises(MergeError) as err:
        merge(assessment, annotations, ruleset)
    assert err.value.code == "UNKNOWN_TARGET"


def test_merge_is_idempotent(assessment, ruleset):
    annotations = parse_annotations(
        'assess hub g23 dd partial by "A" on 2026-03-03: "x"\n'
        'assess hub g9 cda full by "A" on 2026-03-03: "y"\n'
    )
    once = merge(assessment, annotations, ruleset)
    twice = merge(once, annotations, ruleset)
    assert once == twice


def test_merge_touches_only_annotated_cells(assessment, ruleset):
    annotations = parse_annotations(
        'assess hub g23 dd partial by "A" on 2026-03-03: "x"'
    )
    merged = merge(assessment, annotations, ruleset)
    for before, after in zip(assessment.cells, merged.cells):
        if (after.node, after.guideline, after.phase) == ("hub", 23, Phase.DD):
            continue
        assert before == after


def test_merge_recomputes_summary(assessment, ruleset):
    annotations = parse_annotations(
        'assess hub g22 cda full by "A" on 2026-03-03: "x"'
    )
    merged = merge(assessment, annotations, ruleset)
    assert merged.summary == threat_exposure(merged, ruleset)
    assert merged.summary != assessment.summary
