"""Template parsing, universe enumeration, rendering, and compilation.

A template is an ordinary script annotated with directives:

    # --- CONFIG
    { "decisions": [ {"name": "cutoff",
                      "options": [{"name": "low", "value": "3"},
                                  {"name": "high", "value": "7"}]} ],
      "constraints": [ {"decision": "fam", "option": "lognormal",
                        "condition": "model == \"bayesian\""} ] }
    # --- END CONFIG
    x = {{cutoff}}
    # --- (Model) freq
    fit = lm(y ~ x)
    # --- (Model) bayes
    fit = brm(y ~ x)
    # --- end

The JSON front-matter declares placeholder decisions (inline `{{name}}`
substitutions) and constraints. `# --- (Decision) option` opens one option
of a block decision; the option's body runs to the next directive or
`# --- end`. Compiling instantiates every admissible combination of
options into its own script, plus a specification summary and a per
universe sidecar recording where every substitution landed.
"""

from __future__ import annotations

import csv
import itertools
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .exceptions import (
    DanglingConstraint,
    DuplicateDecision,
    EmptyDecision,
    IoError,
    MalformedDirective,
    TemplateParseError,
    UndeclaredPlaceholder,
)
from .model import (
    Assignment,
    Constraint,
    Decision,
    DecisionKind,
    OptionSpec,
    assignment_admissible as _admissible,
    is_valid_name,
    parse_condition,
    ConditionSyntaxError,
)

import re

# A directive is `# ---` followed by whitespace or end of line; comment
# dividers like `# ------` deliberately do not match.
_DIRECTIVE_RE = re.compile(r"^\s*# ---(?=\s|$)")
_BLOCK_RE = re.compile(r"^\s*# ---\s+\(([A-Za-z_][A-Za-z0-9_]*)\)\s+([A-Za-z_][A-Za-z0-9_]*)\s*$")
_END_RE = re.compile(r"^\s*# ---\s+end\s*$")
_CONFIG_RE = re.compile(r"^\s*# ---\s+CONFIG\s*$")
_END_CONFIG_RE = re.compile(r"^\s*# ---\s+END CONFIG\s*$")
PLACEHOLDER_RE = re.compile(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}")


@dataclass(frozen=True)
class PlaceholderSite:
    """One `{{name}}` occurrence inside a segment line.

    ``line_offset`` indexes into the segment's lines; columns are character
    offsets of the whole marker within that line.
    """

    line_offset: int
    col_start: int
    col_end: int
    decision: str


@dataclass(frozen=True)
class Segment:
    """A contiguous run of template lines.

    ``block`` is None for shared code, else the (decision, option) whose
    body this run is. ``template_start`` is the 1-based template line of
    the first line of the run (for an empty run, the line content would
    start on).
    """

    lines: tuple[str, ...]
    block: Optional[tuple[str, str]]
    sites: tuple[PlaceholderSite, ...]
    template_start: int

    @property
    def is_shared(self) -> bool:
        return self.block is None


@dataclass(frozen=True)
class MultiverseSpec:
    decisions: tuple[Decision, ...]
    constraints: tuple[Constraint, ...]
    segments: tuple[Segment, ...]
    source_path: str
    language_ext: str
    source_text: str
    config_char_range: Optional[tuple[int, int]]  # JSON text span in source_text

    def decision(self, name: str) -> Decision:
        for d in self.decisions:
            if d.name == name:
                return d
        raise KeyError(name)

    def decision_names(self) -> list[str]:
        return [d.name for d in self.decisions]

    def total_options(self) -> int:
        return sum(len(d.options) for d in self.decisions)

    def admissible(self, assignment: Assignment) -> bool:
        return _admissible(self.constraints, assignment)


def assignment_admissible(spec: MultiverseSpec, assignment: Assignment) -> bool:
    return spec.admissible(assignment)


@dataclass(frozen=True)
class UniverseSidecar:
    """Where template material landed inside one rendered universe.

    Byte spans index the UTF-8 encoding of the universe text; line ranges
    are 1-based and inclusive (an empty block records start = end + 1).
    """

    placeholders: tuple[tuple[str, str, int, int], ...]  # decision, option, start, end
    blocks: tuple[tuple[str, str, int, int, int], ...]   # decision, option, start_line, end_line, segment
    shared: tuple[tuple[int, int, int], ...]             # start_line, end_line, segment

    def to_json_obj(self) -> dict:
        return {
            "placeholders": [
                {"decision": d, "option": o, "start": s, "end": e}
                for d, o, s, e in self.placeholders
            ],
            "blocks": [
                {"decision": d, "option": o, "start_line": s, "end_line": e, "segment": g}
                for d, o, s, e, g in self.blocks
            ],
            "shared": [
                {"start_line": s, "end_line": e, "segment": g} for s, e, g in self.shared
            ],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "UniverseSidecar":
        return cls(
            placeholders=tuple(
                (p["decision"], p["option"], p["start"], p["end"])
                for p in obj.get("placeholders", ())
            ),
            blocks=tuple(
                (b["decision"], b["option"], b["start_line"], b["end_line"], b["segment"])
                for b in obj.get("blocks", ())
            ),
            shared=tuple(
                (s["start_line"], s["end_line"], s["segment"]) for s in obj.get("shared", ())
            ),
        )


@dataclass(frozen=True)
class Universe:
    index: int
    assignment: Assignment
    filename: str
    text: str
    sidecar: UniverseSidecar


@dataclass(frozen=True)
class SpecSummary:
    """The universe-by-decision table written to summary.csv."""

    header: tuple[str, ...]  # "Filename", then decision names in order
    rows: tuple[tuple[str, ...], ...]

    @property
    def decision_names(self) -> tuple[str, ...]:
        return self.header[1:]

    def __len__(self) -> int:
        return len(self.rows)

    def assignment(self, index: int) -> Assignment:
        """Assignment of universe ``index`` (1-based row order)."""
        row = self.rows[index - 1]
        return Assignment(dict(zip(self.decision_names, row[1:])))

    def options_of(self, decision: str) -> set[str]:
        col = self.header.index(decision)
        return {row[col] for row in self.rows}


@dataclass(frozen=True)
class CompileReport:
    universes: int
    decisions: int
    options: int


# --- Parsing -----------------------------------------------------------------


def _classify_directive(line: str, lineno: int):
    if _CONFIG_RE.match(line):
        return ("config", None)
    if _END_CONFIG_RE.match(line):
        return ("end_config", None)
    if _END_RE.match(line):
        return ("end", None)
    m = _BLOCK_RE.match(line)
    if m:
        return ("block", (m.group(1), m.group(2)))
    raise MalformedDirective(
        f"line {lineno}: unrecognized directive {line.strip()!r}", line=lineno
    )


def parse_template(text: str, source_path) -> MultiverseSpec:
    """Parse template text into a MultiverseSpec.

    Raises MalformedDirective, TemplateParseError, DuplicateDecision,
    EmptyDecision, UndeclaredPlaceholder, or DanglingConstraint.
    """
    source_path = str(source_path)
    lines = text.split("\n")
    if lines and lines[-1] == "" and text.endswith("\n"):
        lines = lines[:-1]

    # Pass 1: directives and line runs.
    config_lines: list[tuple[int, str]] = []
    config_range: Optional[tuple[int, int]] = None
    in_config = False
    config_seen = False
    config_start_char = None
    # Each run: (kind, block, start_lineno, [lines]); block is (dec, opt) or None.
    runs: list[dict] = []
    current: Optional[dict] = None
    in_block = False
    char_pos = 0  # char offset of current line start in text

    def close_run():
        nonlocal current
        if current is not None:
            runs.append(current)
            current = None

    def open_run(block, lineno):
        nonlocal current
        current = {"block": block, "start": lineno, "lines": []}

    for i, line in enumerate(lines):
        lineno = i + 1
        line_end_char = char_pos + len(line)
        if _DIRECTIVE_RE.match(line):
            kind, payload = _classify_directive(line, lineno)
            if kind == "config":
                if config_seen:
                    raise MalformedDirective(
                        f"line {lineno}: duplicate CONFIG block", line=lineno
                    )
                if in_config:
                    raise MalformedDirective(
                        f"line {lineno}: CONFIG inside CONFIG", line=lineno
                    )
                close_run()
                in_config = True
                config_seen = True
                config_start_char = line_end_char + 1  # first char of next line
            elif kind == "end_config":
                if not in_config:
                    raise MalformedDirective(
                        f"line {lineno}: END CONFIG without CONFIG", line=lineno
                    )
                in_config = False
                config_range = (config_start_char, char_pos)
            elif in_config:
                raise MalformedDirective(
                    f"line {lineno}: directive inside CONFIG block", line=lineno
                )
            elif kind == "block":
                close_run()
                open_run(payload, lineno + 1)
                in_block = True
            elif kind == "end":
                if not in_block:
                    raise MalformedDirective(
                        f"line {lineno}: 'end' outside a decision block", line=lineno
                    )
                close_run()
                in_block = False
        elif in_config:
            config_lines.append((lineno, line))
        else:
            if current is None:
                open_run(None, lineno)
            current["lines"].append(line)
        char_pos = line_end_char + 1
    if in_config:
        raise MalformedDirective("CONFIG block never closed with END CONFIG")
    close_run()

    # Pass 2: decisions.
    decisions: list[Decision] = []
    names: set[str] = set()
    constraints_cfg = []
    if config_seen:
        config_text = "\n".join(l for _, l in config_lines)
        try:
            config = json.loads(config_text) if config_text.strip() else {}
        except json.JSONDecodeError as exc:
            first = config_lines[0][0] if config_lines else 0
            raise TemplateParseError(
                f"front-matter is not valid JSON: {exc}", line=first + exc.lineno - 1
            ) from exc
        if not isinstance(config, dict):
            raise TemplateParseError("front-matter must be a JSON object")
        for entry in config.get("decisions", []):
            name = entry.get("name")
            if not isinstance(name, str) or not is_valid_name(name):
                raise TemplateParseError(f"bad decision name {name!r} in front-matter")
            if name in names:
                raise DuplicateDecision(f"decision {name!r} declared twice")
            opts = entry.get("options", [])
            if not opts:
                raise EmptyDecision(f"decision {name!r} has no options")
            specs = []
            seen_opts = set()
            for o in opts:
                oname, value = o.get("name"), o.get("value")
                if not isinstance(oname, str) or not is_valid_name(oname):
                    raise TemplateParseError(
                        f"bad option name {oname!r} in decision {name!r}"
                    )
                if oname in seen_opts:
                    raise DuplicateDecision(f"option {name}.{oname} declared twice")
                seen_opts.add(oname)
                if not isinstance(value, str):
                    raise TemplateParseError(
                        f"option {name}.{oname} needs a string value"
                    )
                try:
                    specs.append(OptionSpec(oname, value))
                except ValueError as exc:
                    raise TemplateParseError(str(exc)) from exc
            decisions.append(Decision(name, DecisionKind.PLACEHOLDER, tuple(specs)))
            names.add(name)
        constraints_cfg = config.get("constraints", [])

    # Block decisions, in order of first appearance.
    block_order: list[str] = []
    block_options: dict[str, list[tuple[str, dict]]] = {}
    for run in runs:
        if run["block"] is None:
            continue
        dec, opt = run["block"]
        if dec in names:
            raise DuplicateDecision(
                f"block decision {dec!r} collides with a placeholder declaration"
            )
        if dec not in block_options:
            block_order.append(dec)
            block_options[dec] = []
        if any(o == opt for o, _ in block_options[dec]):
            raise DuplicateDecision(f"block option {dec}.{opt} appears twice")
        block_options[dec].append((opt, run))
    for dec in block_order:
        opts = tuple(
            OptionSpec(o, tuple(run["lines"])) for o, run in block_options[dec]
        )
        decisions.append(Decision(dec, DecisionKind.BLOCK, opts))

    placeholder_names = {
        d.name for d in decisions if d.kind is DecisionKind.PLACEHOLDER
    }
    all_names = {d.name for d in decisions}

    # Pass 3: segments with placeholder sites.
    segments: list[Segment] = []
    for run in runs:
        sites = []
        for off, line in enumerate(run["lines"]):
            for m in PLACEHOLDER_RE.finditer(line):
                ref = m.group(1)
                if ref not in placeholder_names:
                    kind = "a block decision" if ref in all_names else "undeclared"
                    raise UndeclaredPlaceholder(
                        f"line {run['start'] + off}: placeholder {{{{{ref}}}}} is {kind}"
                    )
                sites.append(PlaceholderSite(off, m.start(), m.end(), ref))
        if run["block"] is None and not run["lines"]:
            continue
        segments.append(
            Segment(
                lines=tuple(run["lines"]),
                block=run["block"],
                sites=tuple(sites),
                template_start=run["start"],
            )
        )

    # Constraints.
    constraints: list[Constraint] = []
    by_name = {d.name: d for d in decisions}
    for entry in constraints_cfg:
        dec, opt = entry.get("decision"), entry.get("option")
        cond_text = entry.get("condition", "")
        if dec not in by_name:
            raise DanglingConstraint(f"constraint targets unknown decision {dec!r}")
        if opt not in by_name[dec].option_names():
            raise DanglingConstraint(f"constraint targets unknown option {dec}.{opt}")
        try:
            cond = parse_condition(cond_text)
        except ConditionSyntaxError as exc:
            raise TemplateParseError(
                f"bad constraint condition {cond_text!r}: {exc}"
            ) from exc
        unknown = cond.decisions() - set(by_name)
        if unknown:
            raise DanglingConstraint(
                f"constraint condition references unknown decision(s): {sorted(unknown)}"
            )
        constraints.append(Constraint(dec, opt, cond, source=cond_text))

    ext = Path(source_path).suffix.lstrip(".") or "txt"
    return MultiverseSpec(
        decisions=tuple(decisions),
        constraints=tuple(constraints),
        segments=tuple(segments),
        source_path=source_path,
        language_ext=ext,
        source_text=text,
        config_char_range=config_range,
    )


def load_template(path) -> MultiverseSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read template: {exc}", path=str(path)) from exc
    return parse_template(text, path)


# --- Enumeration and rendering -----------------------------------------------


def enumerate_assignments(spec: MultiverseSpec) -> list[Assignment]:
    """All admissible assignments, in declaration order with the rightmost
    decision varying fastest."""
    if not spec.decisions:
        empty = Assignment({})
        return [empty] if spec.admissible(empty) else []
    names = [d.name for d in spec.decisions]
    pools = [d.option_names() for d in spec.decisions]
    out = []
    for combo in itertools.product(*pools):
        a = Assignment(dict(zip(names, combo)))
        if spec.admissible(a):
            out.append(a)
    return out


def render_universe(spec: MultiverseSpec, assignment: Assignment, index: int) -> Universe:
    """Render one universe: shared segments verbatim, only the bound option
    of each block decision, every placeholder site substituted. The sidecar
    records each substitution span and block range."""
    payloads = {
        d.name: d.option(assignment[d.name]).payload
        for d in spec.decisions
        if d.kind is DecisionKind.PLACEHOLDER
    }
    out_lines: list[str] = []
    placeholders: list[tuple[str, str, int, int]] = []
    blocks: list[tuple[str, str, int, int, int]] = []
    shared: list[tuple[int, int, int]] = []
    byte_off = 0

    for seg_id, seg in enumerate(spec.segments):
        if seg.block is not None:
            dec, opt = seg.block
            if assignment[dec] != opt:
                continue
        start_line = len(out_lines) + 1
        sites_by_line: dict[int, list[PlaceholderSite]] = {}
        for site in seg.sites:
            sites_by_line.setdefault(site.line_offset, []).append(site)
        for off, line in enumerate(seg.lines):
            parts: list[str] = []
            cursor = 0
            line_byte = byte_off
            for site in sorted(sites_by_line.get(off, []), key=lambda s: s.col_start):
                parts.append(line[cursor : site.col_start])
                payload = payloads[site.decision]
                start = line_byte + len("".join(parts).encode("utf-8"))
                parts.append(payload)
                end = start + len(payload.encode("utf-8"))
                placeholders.append(
                    (site.decision, assignment[site.decision], start, end)
                )
                cursor = site.col_end
            parts.append(line[cursor:])
            rendered = "".join(parts)
            out_lines.append(rendered)
            byte_off += len(rendered.encode("utf-8")) + 1
        end_line = len(out_lines)
        if seg.block is not None:
            blocks.append((seg.block[0], seg.block[1], start_line, end_line, seg_id))
        else:
            shared.append((start_line, end_line, seg_id))

    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    return Universe(
        index=index,
        assignment=assignment,
        filename=f"universe_{index}.{spec.language_ext}",
        text=text,
        sidecar=UniverseSidecar(tuple(placeholders), tuple(blocks), tuple(shared)),
    )


def build_summary(spec: MultiverseSpec, universes: Iterable[Universe]) -> SpecSummary:
    names = spec.decision_names()
    rows = tuple(
        (u.filename, *[u.assignment[n] for n in names]) for u in universes
    )
    return SpecSummary(header=("Filename", *names), rows=rows)


MANIFEST_NAME = "compile_manifest.json"


def compile(spec: MultiverseSpec, out_dir) -> CompileReport:
    """Write universes, sidecars, summary.csv, and the compile manifest.

    Recompiling an unchanged spec is byte-identical. Raises IoError with
    path context on filesystem failure.
    """
    out_dir = Path(out_dir)
    assignments = enumerate_assignments(spec)
    universes = [render_universe(spec, a, i + 1) for i, a in enumerate(assignments)]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for sub in ("universes", "sidecar"):
            d = out_dir / sub
            if d.exists():
                shutil.rmtree(d)
            d.mkdir()
        for u in universes:
            (out_dir / "universes" / u.filename).write_text(u.text, encoding="utf-8")
            sidecar_path = out_dir / "sidecar" / f"universe_{u.index}.json"
            sidecar_path.write_text(
                json.dumps(u.sidecar.to_json_obj(), indent=2) + "\n", encoding="utf-8"
            )
        summary = build_summary(spec, universes)
        with (out_dir / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(summary.header)
            writer.writerows(summary.rows)
        manifest = {
            "template": str(Path(spec.source_path).resolve()),
            "language_ext": spec.language_ext,
            "universes": len(universes),
            "decisions": [
                {"name": d.name, "kind": d.kind.value, "options": d.option_names()}
                for d in spec.decisions
            ],
        }
        (out_dir / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"compile failed: {exc}", path=str(getattr(exc, "filename", out_dir))) from exc
    return CompileReport(
        universes=len(universes),
        decisions=len(spec.decisions),
        options=spec.total_options(),
    )


def load_summary(path) -> SpecSummary:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            rows = [tuple(r) for r in reader]
    except OSError as exc:
        raise IoError(f"cannot read summary: {exc}", path=str(path)) from exc
    if not rows:
        raise IoError("summary.csv is empty", path=str(path))
    return SpecSummary(header=rows[0], rows=tuple(rows[1:]))


def load_manifest(multiverse_dir) -> dict:
    path = Path(multiverse_dir) / MANIFEST_NAME
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read compile manifest: {exc}", path=str(path)) from exc
