"""Command-line interface: parse -> validate -> propagate -> assess -> render.

Exit codes: 0 success; 1 the --fail-on gate tripped; 2 input error (bad
arguments, unreadable files, parse or validation failures); 3 internal
error. Requested artifacts go to stdout (or -o), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import datetime
import os
import sys
from pathlib import Path

from .annotations import merge, parse_annotations
from .catalog import (
    CheckKind,
    RuleSet,
    THREAT_SYMBOLS,
    default_ruleset,
    load_ruleset,
    phase_sort_key,
)
from .engine import (
    CellStatus,
    assessment_from_json,
    assessment_to_json,
    auto_assess,
    propagate,
)
from .errors import PbdError
from .model import Severity, parse_model, validate_model
from .report import RenderFormat, diff, render_assessment, render_dfd, render_diff

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_INTERNAL_ERROR = 3

_FAIL_CONDITIONS = {
    "unassessed": {CellStatus.UNASSESSED},
    "not-supported": {CellStatus.NOT_SUPPORTED},
    "any-gap": {
        CellStatus.UNASSESSED,
        CellStatus.NOT_SUPPORTED,
        CellStatus.PARTIALLY_SUPPORTED,
    },
}


def _read(path: str) -> str:
    try:
        return Path(path).read_text("utf-8")
    except OSError as exc:
        raise PbdError(f"cannot read {path}: {exc.strerror or exc}", code="IO_ERROR") from exc


def _write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, "utf-8")
    except OSError as exc:
        raise PbdError(f"cannot write {path}: {exc.strerror or exc}", code="IO_ERROR") from exc


def _ruleset_from(args: argparse.Namespace) -> RuleSet:
    if getattr(args, "ruleset", None):
        return load_ruleset(args.ruleset)
    return default_ruleset()


def _parse_and_validate(path: str, ruleset: RuleSet, *, issues_to):
    """Parse a model file and report issues; returns None if unusable."""
    model = parse_model(_read(path), ruleset)
    issues = validate_model(model, ruleset)
    for issue in issues:
        print(f"{path}: {issue}", file=issues_to)
    if any(i.severity is Severity.ERROR for i in issues):
        return None
    return model


def _cmd_validate(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from(args)
    model = parse_model(_read(args.model), ruleset)
    issues = validate_model(model, ruleset)
    for issue in issues:
        print(f"{args.model}: {issue}")
    if any(i.severity is Severity.ERROR for i in issues):
        return EXIT_INPUT_ERROR
    return EXIT_OK


def _cmd_assess(args: argparse.Namespace) -> int:
    ruleset = _ruleset_from(args)
    model = _parse_and_validate(args.model, ruleset, issues_to=sys.stderr)
    if model is None:
        return EXIT_INPUT_ERROR
    assessment = auto_assess(model, ruleset, propagate(model, ruleset))
    if args.annotations:
        annotations = parse_annotations(_read(args.annotations))
        assessment = merge(assessment, annotations, ruleset)
    _write_output(assessment_to_json(assessment), args.output)
    if args.fail_on:
        bad = _FAIL_CONDITIONS[args.fail_on]
        hits = [c for c in assessment.cells if c.status in bad]
        if hits:
            print(
                f"fail-on {args.fail_on}: {len(hits)} matching cell(s)", file=sys.stderr
            )
            return EXIT_GATE_FAILED
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    assessment = assessment_from_json(_read(args.assessment))
    fmt = {"ansi": RenderFormat.ANSI, "md": RenderFormat.MARKDOWN, "json": RenderFormat.JSON}[
        args.format
    ]
    color = fmt is RenderFormat.ANSI and os.environ.get("PBD_NO_COLOR") != "1"
    text = render_assessment(assessment, fmt, color=color)
    if args.stamp and fmt is not RenderFormat.JSON:
        now = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        text = f"generated: {now}\n\n{text}"
    _write_output(text, args.output)
    return EXIT_OK


def _cmd_dfd(args: argparse.Namespace) -> int:
    ruleset = default_ruleset()
    model = _parse_and_validate(args.model, ruleset, issues_to=sys.stderr)
    if model is None:
        return EXIT_INPUT_ERROR
    _write_output(render_dfd(model), args.output)
    return EXIT_OK


def _cmd_diff(args: argparse.Namespace) -> int:
    left = assessment_from_json(_read(args.left))
    right = assessment_from_json(_read(args.right))
    sys.stdout.write(render_diff(diff(left, right)))
    return EXIT_OK


def _threats_text(guideline) -> str:
    if not guideline.threats:
        return "-"
    parts = []
    for threat in sorted(guideline.threats, key=lambda t: t.value):
        label = threat.value.replace("_", " ")
        parts.append(f"{label} ({THREAT_SYMBOLS[threat]})")
    return ", ".join(parts)


def _cmd_guidelines(args: argparse.Namespace) -> int:
    ruleset = default_ruleset()
    if args.action == "list":
        for g in ruleset.guidelines:
            phases = ",".join(p.value for p in sorted(g.applicable, key=phase_sort_key))
            syms = "".join(
                THREAT_SYMBOLS[t] for t in sorted(g.threats, key=lambda t: t.value)
            ) or "-"
            print(
                f"{g.id:>2}  {g.name:<38} {g.check.value:<7} "
                f"phases: {phases:<20} threats: {syms}"
            )
        return EXIT_OK
    g = ruleset.guideline(args.id)
    print(f"g{g.id}: {g.name}")
    print(f"strategy: {g.strategy.value}")
    print(f"check: {g.check.value}")
    print("phases: " + ", ".join(p.value for p in sorted(g.applicable, key=phase_sort_key)))
    print(f"threats: {_threats_text(g)}")
    if g.check is CheckKind.AUTO:
        print(f"capability: {sorted(g.capabilities, key=lambda k: k.value)[0].value}")
    if g.note:
        print(f"note: {g.note}")
    print()
    print(g.summary)
    return EXIT_OK


_INIT_TEMPLATE = """\
# Starter model. Adjust nodes, data, capabilities, and flows to match
# your deployment, then run: pbd assess {path}
system "{name}"

# One node per device category through which data transits.
node sensor example_sensor {{
  phases: cda, dd
  # Data items are declared at the node that acquires them.
  data example_reading {{
    kind: raw            # raw | secondary | aggregate
    personal: true
    granularity: fine    # fine | medium | coarse
  }}
}}

node gateway example_hub {{
  phases: cda, dpp, ds, dd
  # Capabilities declare privacy measures; see: pbd guidelines list
  capability agg-time-period @ dpp {{
    window: "P1D"
  }}
  capability encrypt-rest {{}}
}}

flow example_sensor -> example_hub {{
  data: [example_reading]
  channel: tls           # plaintext | link-encrypted | tls | onion
}}

# Platform-scope declarations fill the demonstrate column.
demonstrate open-source {{
  url: "https://example.org/source"
}}
"""


def _cmd_init(args: argparse.Namespace) -> int:
    name = args.name
    path = Path(name if name.endswith(".pbd") else f"{name}.pbd")
    if path.exists():
        print(f"refusing to overwrite existing {path}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    _write_output(_INIT_TEMPLATE.format(name=path.stem, path=path), str(path))
    print(f"wrote {path}", file=sys.stderr)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbd",
        description="Assess an IoT system model against privacy-by-design guidelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file for issues")
    p.add_argument("model", help="model file (.pbd)")
    p.add_argument("--ruleset", help="alternative ruleset JSON")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("assess", help="run the full assessment pipeline")
    p.add_argument("model", help="model file (.pbd)")
    p.add_argument("--annotations", help="assessor annotation file (.pba)")
    p.add_argument("--ruleset", help="alternative ruleset JSON")
    p.add_argument("-o", "--output", help="write assessment JSON here instead of stdout")
    p.add_argument(
        "--fail-on",
        choices=sorted(_FAIL_CONDITIONS),
        help="exit 1 if any cell matches this condition",
    )
    p.set_defaults(func=_cmd_assess)

    p = sub.add_parser("report", help="render an assessment")
    p.add_argument("assessment", help="assessment JSON file")
    p.add_argument("--format", choices=["ansi", "md", "json"], default="ansi")
    p.add_argument("-o", "--output", help="write here instead of stdout")
    p.add_argument("--stamp", action="store_true", help="add a generation-time header")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("dfd", help="emit a DOT data-flow diagram")
    p.add_argument("model", help="model file (.pbd)")
    p.add_argument("-o", "--output", help="write here instead of stdout")
    p.set_defaults(func=_cmd_dfd)

    p = sub.add_parser("diff", help="compare two assessments")
    p.add_argument("left", help="assessment JSON file")
    p.add_argument("right", help="assessment JSON file")
    p.set_defaults(func=_cmd_diff)

    p = sub.add_parser("guidelines", help="print the guideline catalog")
    gsub = p.add_subparsers(dest="action", required=True)
    gp = gsub.add_parser("list", help="one line per guideline")
    gp.set_defaults(func=_cmd_guidelines, action="list")
    gp = gsub.add_parser("show", help="full entry for one guideline")
    gp.add_argument("id", type=int)
    gp.set_defaults(func=_cmd_guidelines, action="show")

    p = sub.add_parser("init", help="write a commented starter model")
    p.add_argument("name", help="model name; the file <name>.pbd is created")
    p.set_defaults(func=_cmd_init)

    return parser


def run(argv: list[str]) -> int:
    """Execute one CLI invocation; returns the exit code."""
    for stream in (sys.stdout, sys.stderr):
        if hasattr(stream, "reconfigure"):
            try:
                stream.reconfigure(encoding="utf-8")
            except Exception:
                pass
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT_ERROR if exc.code else EXIT_OK
    try:
        return args.func(args)
    except PbdError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT_ERROR
    except Exception as exc:  # invariant violation, not an input problem
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
