"""Propagate edits made inside one rendered universe back to the template.

The sidecar written at compile time records where every template region
(shared run, block body, placeholder payload) landed in the universe
file.  A line diff between the old and new universe re-anchors region
boundaries; a tree diff tracks individual placeholder payloads through
the edit.  The suggested template is then rebuilt by substituting the
edited universe lines back into their segments with surviving payloads
re-abstracted to ``{{name}}`` markers, so rendering the suggestion under
the same assignment reproduces the edited universe byte for byte.

Boundary rules for the line diff: a matched region start keeps its
matched new line; a deleted start falls to the next surviving new line;
lines inserted at a region boundary join the following region.  Region
ends come from tiling (each region runs to the next region's start).
"""

from __future__ import annotations

import difflib
import json
import os
import re
import tempfile
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .exceptions import ConflictingEdit, IoError
from .template import (
    CompileReport,
    MultiverseSpec,
    Universe,
    UniverseSidecar,
    compile as compile_spec,
    load_manifest,
    load_summary,
    parse_template,
)
from .treediff import EditAction, assign_node_ids, diff_sources, preorder

# --- Line mapping ------------------------------------------------------------


@dataclass(frozen=True)
class LineMapEntry:
    """Fate of one old-universe line (1-based). new_line is None when the
    line was deleted; inserted_after counts new lines that appear right
    after this line's position."""

    old_line: int
    new_line: Optional[int]
    inserted_after: int = 0


@dataclass(frozen=True)
class LineMap:
    entries: tuple[LineMapEntry, ...]
    leading_insertions: int = 0

    def to_json_obj(self) -> list:
        return [
            {
                "old": e.old_line,
                "new": e.new_line,
                "inserted_after": e.inserted_after,
            }
            for e in self.entries
        ]


@dataclass(frozen=True)
class RegionMatch:
    """One sidecar region re-anchored in the edited universe. Line ranges
    are 1-based inclusive; an empty range has start = end + 1."""

    segment: int
    block: Optional[tuple[str, str]]  # None for shared regions
    old_start: int
    old_end: int
    new_start: int
    new_end: int


def _split_lines(text: str) -> list[str]:
    if not text:
        return []
    lines = text.split("\n")
    if lines and lines[-1] == "" and text.endswith("\n"):
        lines = lines[:-1]
    return lines


def _ordered_regions(sidecar: UniverseSidecar):
    regions = [
        (seg, (dec, opt), s, e) for dec, opt, s, e, seg in sidecar.blocks
    ]
    regions.extend((seg, None, s, e) for s, e, seg in sidecar.shared)
    regions.sort(key=lambda r: r[0])
    return regions


def match_block_boundaries(
    old_text: str, new_text: str, sidecar: UniverseSidecar
) -> tuple[LineMap, list[RegionMatch]]:
    old_lines = _split_lines(old_text)
    new_lines = _split_lines(new_text)
    matcher = difflib.SequenceMatcher(a=old_lines, b=new_lines, autojunk=False)
    matched: dict[int, int] = {}
    for i, j, n in matcher.get_matching_blocks():
        for k in range(n):
            matched[i + k + 1] = j + k + 1

    matched_new = set(matched.values())
    matched_old_sorted = sorted(matched)
    # Insertion point of each unmatched new line: how many old lines
    # strictly precede it. Rule 3 only moves an inserted line into the
    # region whose old boundary equals that point.
    insert_point: dict[int, int] = {}
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag in ("insert", "replace"):
            for j in range(j1, j2):
                insert_point[j + 1] = i1

    def next_anchor(old_line: int) -> int:
        """New line carrying the first surviving old line at or after
        old_line; one past the end when nothing survives."""
        idx = bisect_left(matched_old_sorted, old_line)
        if idx == len(matched_old_sorted):
            return len(new_lines) + 1
        return matched[matched_old_sorted[idx]]

    entries = []
    for i in range(1, len(old_lines) + 1):
        new_line = matched.get(i)
        inserted_after = 0
        if new_line is not None:
            j = new_line + 1
            while j <= len(new_lines) and j not in matched_new:
                inserted_after += 1
                j += 1
        entries.append(LineMapEntry(i, new_line, inserted_after))
    leading = 0
    j = 1
    while j <= len(new_lines) and j not in matched_new:
        leading += 1
        j += 1
    line_map = LineMap(tuple(entries), leading_insertions=leading)

    regions = _ordered_regions(sidecar)
    starts: list[int] = []
    claimed: set[int] = set()
    for k, (seg, block, old_s, old_e) in enumerate(regions):
        start = next_anchor(old_s)
        boundary = old_s - 1  # old lines strictly before this region
        floor = starts[k - 1] if k else 1
        while (
            start - 1 >= floor
            and start - 1 not in claimed
            and insert_point.get(start - 1) == boundary
        ):
            start -= 1
            claimed.add(start)
        starts.append(start)

    out = []
    for k, (seg, block, old_s, old_e) in enumerate(regions):
        new_s = starts[k]
        new_e = starts[k + 1] - 1 if k + 1 < len(regions) else len(new_lines)
        out.append(RegionMatch(seg, block, old_s, old_e, new_s, new_e))
    return line_map, out


# --- Placeholder site tracking -----------------------------------------------

UNCHANGED = "unchanged"
VALUE_CHANGED = "value_changed"
SITE_REMOVED = "site_removed"


@dataclass(frozen=True)
class SiteStatus:
    decision: str
    option: str
    old_span: tuple[int, int]  # bytes in the old universe
    status: str
    new_span: Optional[tuple[int, int]] = None  # bytes in the new universe
    new_value: Optional[str] = None
    note: str = ""


def _line_starts_bytes(text: str) -> list[int]:
    """Byte offset of each line start (last entry = total byte length)."""
    raw = text.encode("utf-8")
    starts = [0]
    for i, b in enumerate(raw):
        if b == 0x0A:
            starts.append(i + 1)
    if not raw.endswith(b"\n"):
        starts.append(len(raw))
    return starts


def _line_of_byte(starts: list[int], offset: int) -> int:
    """1-based line containing the byte offset."""
    return bisect_left(starts, offset + 1)


def match_placeholder_sites(
    universe: Universe, new_text: str, _prepared=None
) -> list[SiteStatus]:
    """Track each placeholder payload of the universe through the edit."""
    if _prepared is None:
        t1, t2, mapping, _ = diff_sources(universe.text, new_text)
        line_map, _ = match_block_boundaries(
            universe.text, new_text, universe.sidecar
        )
    else:
        t1, t2, mapping, line_map = _prepared
    old_bytes = universe.text.encode("utf-8")
    new_bytes = new_text.encode("utf-8")
    old_starts = _line_starts_bytes(universe.text)
    old_lines = _split_lines(universe.text)
    new_lines = _split_lines(new_text)
    matched = {e.old_line: e.new_line for e in line_map.entries}
    leaves = [n for n in preorder(t1) if n.is_leaf]

    out = []
    for dec, opt, s, e in universe.sidecar.placeholders:
        old_value = old_bytes[s:e].decode("utf-8")
        covering = [n for n in leaves if n.span[0] < e and n.span[1] > s]
        if not covering:
            # empty or whitespace-only payload: no tokens to follow, so the
            # site survives only on an identically matched line
            line = _line_of_byte(old_starts, s if s < len(old_bytes) else max(s - 1, 0))
            new_line = matched.get(line)
            if (
                new_line is not None
                and 0 < line <= len(old_lines)
                and 0 < new_line <= len(new_lines)
                and old_lines[line - 1] == new_lines[new_line - 1]
            ):
                shift = _line_starts_bytes(new_text)[new_line - 1] - old_starts[line - 1]
                out.append(
                    SiteStatus(dec, opt, (s, e), UNCHANGED, (s + shift, e + shift), old_value)
                )
            else:
                out.append(
                    SiteStatus(
                        dec, opt, (s, e), SITE_REMOVED,
                        note="empty payload site on an edited line",
                    )
                )
            continue
        mapped = [n for n in covering if mapping.has_src(n)]
        if not mapped:
            out.append(SiteStatus(dec, opt, (s, e), SITE_REMOVED))
            continue
        new_spans = [mapping.dst_of(n).span for n in mapped]
        ns = min(sp[0] for sp in new_spans)
        ne = max(sp[1] for sp in new_spans)
        new_value = new_bytes[ns:ne].decode("utf-8")
        if "\n" in new_value:
            out.append(
                SiteStatus(
                    dec, opt, (s, e), SITE_REMOVED,
                    note="payload no longer fits on one line",
                )
            )
            continue
        status = UNCHANGED if new_value == old_value else VALUE_CHANGED
        out.append(SiteStatus(dec, opt, (s, e), status, (ns, ne), new_value))
    return out


# --- JSON value spans (for surgical config rewrites) -------------------------

_WS = " \t\n\r"


def _json_value_spans(text: str) -> dict[tuple, tuple[int, int]]:
    """Char span of every value in a JSON document, keyed by path, e.g.
    ("decisions", 0, "options", 1, "value"). Assumes text already parses."""
    spans: dict[tuple, tuple[int, int]] = {}

    def skip_ws(pos):
        while pos < len(text) and text[pos] in _WS:
            pos += 1
        return pos

    def parse_string(pos):
        assert text[pos] == '"'
        pos += 1
        while text[pos] != '"':
            pos += 2 if text[pos] == "\\" else 1
        return pos + 1

    def parse_value(pos, path):
        pos = skip_ws(pos)
        start = pos
        c = text[pos]
        if c == "{":
            pos = skip_ws(pos + 1)
            while text[pos] != "}":
                key_end = parse_string(pos)
                key = json.loads(text[pos:key_end])
                pos = skip_ws(key_end)
                assert text[pos] == ":"
                pos = parse_value(pos + 1, path + (key,))
                pos = skip_ws(pos)
                if text[pos] == ",":
                    pos = skip_ws(pos + 1)
            pos += 1
        elif c == "[":
            pos = skip_ws(pos + 1)
            index = 0
            while text[pos] != "]":
                pos = parse_value(pos, path + (index,))
                pos = skip_ws(pos)
                index += 1
                if text[pos] == ",":
                    pos = skip_ws(pos + 1)
            pos += 1
        elif c == '"':
            pos = parse_string(pos)
        else:
            while pos < len(text) and text[pos] not in ",}]" + _WS:
                pos += 1
        spans[path] = (start, pos)
        return pos

    parse_value(0, ())
    return spans


def _config_value_span(
    spec: MultiverseSpec, decision: str, option: str
) -> tuple[int, int]:
    """Char span (in template source text) of the declared payload string
    for decision.option."""
    cs, ce = spec.config_char_range
    config_text = spec.source_text[cs:ce]
    config = json.loads(config_text)
    spans = _json_value_spans(config_text)
    for i, d in enumerate(config.get("decisions", [])):
        if d.get("name") != decision:
            continue
        for j, o in enumerate(d.get("options", [])):
            if o.get("name") == option:
                vs, ve = spans[("decisions", i, "options", j, "value")]
                return (cs + vs, cs + ve)
    raise KeyError(f"{decision}.{option} not found in front-matter")


# --- Linked regions and the suggested template -------------------------------


@dataclass(frozen=True)
class LinkedRegion:
    """A highlight linking up to four texts: old universe (ou), new
    universe (nu), old template (ot), new template (nt). Spans are byte
    ranges; absent sides are None (deletes have no new side, inserts no
    old side)."""

    kind: str  # insert | delete | update | move
    ou: Optional[tuple[int, int]] = None
    nu: Optional[tuple[int, int]] = None
    ot: Optional[tuple[int, int]] = None
    nt: Optional[tuple[int, int]] = None

    def to_json_obj(self) -> dict:
        spans = {}
        for name in ("ou", "nu", "ot", "nt"):
            v = getattr(self, name)
            if v is not None:
                spans[name] = list(v)
        return {"kind": self.kind, "spans": spans}


@dataclass(frozen=True)
class SuggestedTemplate:
    text: str
    provenance: tuple[str, ...] = ()


@dataclass(frozen=True)
class DiffSession:
    old_universe: Universe
    new_universe_text: str
    old_template: MultiverseSpec
    line_map: LineMap
    edit_script: tuple[EditAction, ...]
    regions: tuple[LinkedRegion, ...]
    suggested: SuggestedTemplate
    warnings: tuple[str, ...] = ()


def _line_spans(text: str) -> list[tuple[int, int]]:
    """Byte (start, end) of each line's content, newline excluded."""
    spans = []
    off = 0
    for line in _split_lines(text):
        b = len(line.encode("utf-8"))
        spans.append((off, off + b))
        off += b + 1
    return spans


def _byte_span_of_lines(
    spans: list[tuple[int, int]], first: int, last: int, total: int
) -> tuple[int, int]:
    """Byte span covering lines [first..last] 1-based inclusive, without
    the trailing newline; zero-width at the boundary when last < first."""
    if last < first:
        anchor = spans[first - 1][0] if first - 1 < len(spans) else total
        return (anchor, anchor)
    return (spans[first - 1][0], spans[last - 1][1])


def _char_to_byte(text: str, char_off: int) -> int:
    return len(text[:char_off].encode("utf-8"))


def _token_regions(t1, t2, mapping, script, ids1) -> list[LinkedRegion]:
    regions = []
    id_to_node = {i: n for n, i in ids1.items()}
    moved_ids = {a.node_id for a in script if a.kind == "move"}
    for a, b in mapping.pairs():
        if a.is_leaf and a.value != b.value:
            regions.append(LinkedRegion("update", ou=a.span, nu=b.span))
    for n in preorder(t1):
        if n.is_leaf and not mapping.has_src(n):
            regions.append(LinkedRegion("delete", ou=n.span))
    for n in preorder(t2):
        if n.is_leaf and not mapping.has_dst(n):
            regions.append(LinkedRegion("insert", nu=n.span))
    for node_id in sorted(moved_ids):
        node = id_to_node.get(node_id)
        if node is not None and mapping.has_src(node):
            regions.append(
                LinkedRegion("move", ou=node.span, nu=mapping.dst_of(node).span)
            )
    return regions


def propagate(
    spec: MultiverseSpec, universe: Universe, new_text: str
) -> DiffSession:
    """Build the full diff session: line map, tree-diff script, linked
    regions, and the suggested template.

    Raises ConflictingEdit when sites of one placeholder decision end up
    with divergent payloads (the front-matter can hold only one)."""
    if new_text and not new_text.endswith("\n"):
        new_text += "\n"
    old_text = universe.text
    t1, t2, mapping, script = diff_sources(old_text, new_text)
    ids1 = assign_node_ids(t1)
    line_map, region_matches = match_block_boundaries(
        old_text, new_text, universe.sidecar
    )
    sites = match_placeholder_sites(
        universe, new_text, _prepared=(t1, t2, mapping, line_map)
    )
    warnings = [
        f"placeholder {{{{{st.decision}}}}} at bytes {st.old_span[0]}-{st.old_span[1]}: "
        f"site removed" + (f" ({st.note})" if st.note else "")
        for st in sites
        if st.status == SITE_REMOVED
    ]

    # One payload per decision: reconcile all surviving sites.
    assignment = universe.assignment
    final_payload: dict[str, str] = {}
    for st in sites:
        if st.status == SITE_REMOVED:
            continue
        value = st.new_value
        prior = final_payload.get(st.decision)
        if prior is not None and prior != value:
            raise ConflictingEdit(
                f"placeholder {{{{{st.decision}}}}} edited to both "
                f"{prior!r} and {value!r} in the same universe",
                conflicts=[(st.decision, st.option, prior, value)],
            )
        final_payload[st.decision] = value

    old_lines = _split_lines(old_text)
    new_lines = _split_lines(new_text)
    new_u_starts = _line_starts_bytes(new_text)
    old_u_spans = _line_spans(old_text)
    new_u_spans = _line_spans(new_text)
    old_u_total = len(old_text.encode("utf-8"))
    new_u_total = len(new_text.encode("utf-8"))
    tmpl_text = spec.source_text
    tmpl_spans = _line_spans(tmpl_text)
    tmpl_total = len(tmpl_text.encode("utf-8"))

    # Re-abstract surviving sites: where does {{name}} go in the new lines?
    markers_by_line: dict[int, list[tuple[int, int, str]]] = {}
    claimed: list[tuple[int, int]] = []
    for st in sites:
        if st.status == SITE_REMOVED:
            continue
        ns, ne = st.new_span
        if any(ns < e and ne > s for s, e in claimed):
            warnings.append(
                f"placeholder {{{{{st.decision}}}}}: overlapping site in the "
                f"edited text, dropped"
            )
            continue
        claimed.append((ns, ne))
        line = _line_of_byte(new_u_starts, ns if ns < len(new_text.encode()) else max(ns - 1, 0))
        line_start = new_u_starts[line - 1]
        raw_line = new_lines[line - 1].encode("utf-8")
        col_s = len(raw_line[: ns - line_start].decode("utf-8"))
        col_e = len(raw_line[: ne - line_start].decode("utf-8"))
        markers_by_line.setdefault(line, []).append((col_s, col_e, st.decision))

    def region_new_lines(match: RegionMatch) -> list[str]:
        out = []
        for ln in range(match.new_start, match.new_end + 1):
            line = new_lines[ln - 1]
            for col_s, col_e, name in sorted(
                markers_by_line.get(ln, []), reverse=True
            ):
                line = line[:col_s] + "{{" + name + "}}" + line[col_e:]
            out.append(line)
        return out

    # Decide which segments change and what their new bodies are.
    segment_rewrites: dict[int, list[str]] = {}
    region_meta: list[tuple[RegionMatch, str]] = []  # (match, kind)
    for match in region_matches:
        old_body = old_lines[match.old_start - 1 : match.old_end]
        new_body = region_new_lines(match)
        seg = spec.segments[match.segment]
        template_body = list(seg.lines)
        if new_body == template_body:
            continue
        segment_rewrites[match.segment] = new_body
        if not template_body:
            kind = "insert"
        elif not new_body:
            kind = "delete"
        else:
            kind = "update"
        region_meta.append((match, kind))

    # Config payload rewrites.
    config_ops: list[tuple[int, int, str, str]] = []  # char span, text, decision
    for dec, value in sorted(final_payload.items()):
        declared = spec.decision(dec).option(assignment[dec]).payload
        if value != declared:
            vs, ve = _config_value_span(spec, dec, assignment[dec])
            config_ops.append((vs, ve, json.dumps(value), dec))
    config_ops.sort()

    # Assemble the suggested template: config surgery first (it never adds
    # or removes lines), then line splices.
    pieces = []
    cursor = 0
    final_config_spans: dict[str, tuple[int, int]] = {}
    shift = 0
    for vs, ve, replacement, dec in config_ops:
        pieces.append(tmpl_text[cursor:vs])
        final_config_spans[dec] = (vs + shift, vs + shift + len(replacement))
        pieces.append(replacement)
        shift += len(replacement) - (ve - vs)
        cursor = ve
    pieces.append(tmpl_text[cursor:])
    text_after_config = "".join(pieces)

    tmpl_lines = text_after_config.split("\n")
    delta = 0
    final_segment_lines: dict[int, tuple[int, int]] = {}
    for seg_idx in sorted(segment_rewrites):
        seg = spec.segments[seg_idx]
        start = seg.template_start - 1 + delta
        count = len(seg.lines)
        body = segment_rewrites[seg_idx]
        tmpl_lines[start : start + count] = body
        final_segment_lines[seg_idx] = (start + 1, start + len(body))
        delta += len(body) - count
    suggested_text = "\n".join(tmpl_lines)
    new_tmpl_spans = _line_spans(suggested_text)
    new_tmpl_total = len(suggested_text.encode("utf-8"))

    # Linked regions: template-level first, then token-level detail.
    regions: list[LinkedRegion] = []
    provenance: list[str] = []
    for match, kind in region_meta:
        seg = spec.segments[match.segment]
        ou = _byte_span_of_lines(old_u_spans, match.old_start, match.old_end, old_u_total)
        nu = _byte_span_of_lines(new_u_spans, match.new_start, match.new_end, new_u_total)
        ot = _byte_span_of_lines(
            tmpl_spans,
            seg.template_start,
            seg.template_start + len(seg.lines) - 1,
            tmpl_total,
        )
        first, last = final_segment_lines[match.segment]
        nt = _byte_span_of_lines(new_tmpl_spans, first, last, new_tmpl_total)
        regions.append(
            LinkedRegion(
                kind,
                ou=ou if kind != "insert" else None,
                nu=nu if kind != "delete" else None,
                ot=ot if kind != "insert" else None,
                nt=nt if kind != "delete" else None,
            )
        )
        what = (
            f"block ({seg.block[0]}, {seg.block[1]})" if seg.block else "shared code"
        )
        provenance.append(
            f"{what}: lines {match.new_start}-{match.new_end} of {universe.filename}"
        )
    for vs, ve, replacement, dec in config_ops:
        site = next(
            st for st in sites
            if st.decision == dec and st.status == VALUE_CHANGED
        )
        fs, fe = final_config_spans[dec]
        regions.append(
            LinkedRegion(
                "update",
                ou=site.old_span,
                nu=site.new_span,
                ot=(_char_to_byte(tmpl_text, vs), _char_to_byte(tmpl_text, ve)),
                nt=(
                    _char_to_byte(text_after_config, fs),
                    _char_to_byte(text_after_config, fe),
                ),
            )
        )
        provenance.append(
            f"option {dec}={assignment[dec]}: payload edited in {universe.filename}"
        )
    regions.extend(_token_regions(t1, t2, mapping, script, ids1))

    return DiffSession(
        old_universe=universe,
        new_universe_text=new_text,
        old_template=spec,
        line_map=line_map,
        edit_script=tuple(script),
        regions=tuple(regions),
        suggested=SuggestedTemplate(suggested_text, tuple(provenance)),
        warnings=tuple(warnings),
    )


# --- Loading universes back from a compiled multiverse -----------------------

_UNIVERSE_FILE_RE = re.compile(r"universe_(\d+)\.[A-Za-z0-9]+$")


def universe_index_from_path(path) -> int:
    m = _UNIVERSE_FILE_RE.search(str(path))
    if not m:
        raise IoError(f"not a universe file name: {path}", path=str(path))
    return int(m.group(1))


def load_universe(multiverse_dir, index: int) -> Universe:
    multiverse_dir = Path(multiverse_dir)
    summary = load_summary(multiverse_dir / "summary.csv")
    if not 1 <= index <= len(summary):
        raise IoError(
            f"universe {index} out of range 1..{len(summary)}",
            path=str(multiverse_dir),
        )
    filename = summary.rows[index - 1][0]
    try:
        text = (multiverse_dir / "universes" / filename).read_text(encoding="utf-8")
        sidecar_raw = json.loads(
            (multiverse_dir / "sidecar" / f"universe_{index}.json").read_text(
                encoding="utf-8"
            )
        )
    except OSError as exc:
        raise IoError(f"cannot load universe {index}: {exc}", path=str(multiverse_dir)) from exc
    return Universe(
        index=index,
        assignment=summary.assignment(index),
        filename=filename,
        text=text,
        sidecar=UniverseSidecar.from_json_obj(sidecar_raw),
    )


# --- Saving ------------------------------------------------------------------


def save_template(text: str, path) -> MultiverseSpec:
    """Validate and atomically replace the template file. Nothing is
    written when the text does not parse."""
    path = Path(path)
    spec = parse_template(text, path)
    try:
        fd, tmp = tempfile.mkstemp(
            dir=str(path.parent), prefix=path.name, suffix=".tmp"
        )
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot save template: {exc}", path=str(path)) from exc
    return spec


def save_and_compile(text: str, path, out_dir) -> CompileReport:
    spec = save_template(text, path)
    return compile_spec(spec, out_dir)
