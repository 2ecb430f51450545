"""Edit propagation tests.

The load-bearing oracle is the gold round-trip: after propagating an
edited universe, rendering the suggested template under the same
assignment must reproduce the edited text byte for byte.  Boundary-rule
unit tests hand-apply the three rules to a small fixture instead of
trusting the implementation.
"""

import json

import pytest

from mvd.exceptions import ConflictingEdit, IoError, TemplateParseError
from mvd.propagate import (
    SITE_REMOVED,
    UNCHANGED,
    VALUE_CHANGED,
    DiffSession,
    LinkedRegion,
    load_universe,
    match_block_boundaries,
    match_placeholder_sites,
    propagate,
    save_and_compile,
    save_template,
    universe_index_from_path,
)
from mvd.template import (
    UniverseSidecar,
    compile as compile_spec,
    load_template,
    parse_template,
    render_universe,
)

PY_TEMPLATE = """\
# --- CONFIG
{
  "decisions": [
    {"name": "cutoff", "options": [
      {"name": "low", "value": "2.5"},
      {"name": "high", "value": "4.0"}
    ]},
    {"name": "scale", "options": [
      {"name": "raw", "value": "x"},
      {"name": "log", "value": "log(x)"}
    ]}
  ]
}
# --- END CONFIG
import math

def load():
    return [1, 2, 3]

threshold = {{cutoff}}
# --- (model) linear
def fit(x):
    return {{scale}} + 1
# --- (model) quadratic
def fit(x):
    return {{scale}} ** 2
# --- end
print(fit(threshold))
"""

R_TEMPLATE = """\
# --- CONFIG
{
  "decisions": [
    {"name": "span", "options": [
      {"name": "narrow", "value": "0.3"},
      {"name": "wide", "value": "0.8"}
    ]}
  ]
}
# --- END CONFIG
library(stats)
df <- read.csv("data.csv")
# --- (fit) lm
model <- lm(y ~ x, data = df)
# --- (fit) loess
model <- loess(y ~ x, data = df, span = {{span}})
# --- end
print(summary(model))
"""


@pytest.fixture()
def py_multiverse(tmp_path):
    path = tmp_path / "template.py"
    path.write_text(PY_TEMPLATE, encoding="utf-8")
    spec = load_template(path)
    out = tmp_path / "mv"
    compile_spec(spec, out)
    return spec, out


@pytest.fixture()
def r_multiverse(tmp_path):
    path = tmp_path / "template.R"
    path.write_text(R_TEMPLATE, encoding="utf-8")
    spec = load_template(path)
    out = tmp_path / "mv"
    compile_spec(spec, out)
    return spec, out


def roundtrip(spec, universe, new_text) -> DiffSession:
    """Propagate and assert the gold round-trip."""
    session = propagate(spec, universe, new_text)
    new_spec = parse_template(session.suggested.text, spec.source_path)
    rendered = render_universe(new_spec, universe.assignment, universe.index)
    expected = new_text
    if expected and not expected.endswith("\n"):
        expected += "\n"
    assert rendered.text == expected
    return session


# --- boundary rules on a hand fixture ---------------------------------------

OLD_TEN = "a1\na2\nb1\nb2\nb3\nc1\nc2\nd1\nd2\nd3\n"
SIDECAR_TEN = UniverseSidecar(
    placeholders=(),
    blocks=(("X", "one", 3, 5, 1), ("Y", "two", 8, 10, 3)),
    shared=((1, 2, 0), (6, 7, 2)),
)


def ranges(regions):
    return [(r.segment, r.new_start, r.new_end) for r in regions]


class TestBoundaries:
    def test_identity(self):
        line_map, regions = match_block_boundaries(OLD_TEN, OLD_TEN, SIDECAR_TEN)
        assert ranges(regions) == [(0, 1, 2), (1, 3, 5), (2, 6, 7), (3, 8, 10)]
        assert all(e.new_line == e.old_line for e in line_map.entries)
        assert line_map.leading_insertions == 0

    def test_line_map_covers_every_old_line_once(self):
        new = "a1\nb1\nb2\nEXTRA\nb3\nc1\nc2\nd1\nd2\nd3\n"
        line_map, _ = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert [e.old_line for e in line_map.entries] == list(range(1, 11))

    def test_insert_inside_block_grows_it(self):
        # hand application: b-block was lines 3-5; the insert lands inside
        # it, so X becomes 3-6 and later regions shift down by one
        new = "a1\na2\nb1\nb2\nNEW\nb3\nc1\nc2\nd1\nd2\nd3\n"
        _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions) == [(0, 1, 2), (1, 3, 6), (2, 7, 8), (3, 9, 11)]

    def test_deleted_block_start_falls_to_next_line(self):
        new = "a1\na2\nb2\nb3\nc1\nc2\nd1\nd2\nd3\n"
        _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions) == [(0, 1, 2), (1, 3, 4), (2, 5, 6), (3, 7, 9)]

    def test_insertion_at_block_start_joins_block(self):
        new = "a1\na2\nHEAD\nb1\nb2\nb3\nc1\nc2\nd1\nd2\nd3\n"
        _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions) == [(0, 1, 2), (1, 3, 6), (2, 7, 8), (3, 9, 11)]

    def test_insertion_at_top_joins_first_region(self):
        new = "TOP\na1\na2\nb1\nb2\nb3\nc1\nc2\nd1\nd2\nd3\n"
        line_map, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions)[0] == (0, 1, 3)
        assert line_map.leading_insertions == 1

    def test_trailing_insertion_extends_last_region(self):
        new = OLD_TEN + "TAIL\n"
        _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions)[-1] == (3, 8, 11)

    def test_deleted_block_becomes_empty_range(self):
        new = "a1\na2\nc1\nc2\nd1\nd2\nd3\n"
        _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions) == [(0, 1, 2), (1, 3, 2), (2, 3, 4), (3, 5, 7)]

    def test_wholesale_replacement_stays_in_block(self):
        # b-lines replaced by unrelated lines: rule 2 sends the start to
        # the next survivor, rule 3 pulls the replacements back in
        new = "a1\na2\nr1\nr2\nc1\nc2\nd1\nd2\nd3\n"
        _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
        assert ranges(regions) == [(0, 1, 2), (1, 3, 4), (2, 5, 6), (3, 7, 9)]

    def test_regions_tile_the_new_text(self):
        edits = [
            "a1\nb1\nb3\nc1\nNEW\nc2\nd1\nd3\n",
            "x\ny\nz\n",
            "",
            OLD_TEN + "p\nq\n",
        ]
        for new in edits:
            _, regions = match_block_boundaries(OLD_TEN, new, SIDECAR_TEN)
            new_len = len([l for l in new.split("\n") if True]) - (
                1 if new.endswith("\n") else 0
            ) if new else 0
            covered = []
            for r in regions:
                covered.extend(range(r.new_start, r.new_end + 1))
            assert covered == list(range(1, new_len + 1))


# --- placeholder site tracking ----------------------------------------------


class TestSites:
    def test_untouched_universe_all_unchanged(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        statuses = match_placeholder_sites(u, u.text)
        assert len(statuses) == 2  # cutoff and scale sites
        assert all(st.status == UNCHANGED for st in statuses)

    def test_payload_edit_reports_new_value(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        assert "threshold = 2.5" in u.text
        new_text = u.text.replace("threshold = 2.5", "threshold = 9.9")
        statuses = match_placeholder_sites(u, new_text)
        by_dec = {st.decision: st for st in statuses}
        assert by_dec["cutoff"].status == VALUE_CHANGED
        assert by_dec["cutoff"].new_value == "9.9"
        assert by_dec["scale"].status == UNCHANGED

    def test_deleted_statement_removes_site(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = u.text.replace("threshold = 2.5\n", "")
        statuses = match_placeholder_sites(u, new_text)
        by_dec = {st.decision: st for st in statuses}
        assert by_dec["cutoff"].status == SITE_REMOVED

    def test_multi_token_payload_tracks_as_one_value(self, py_multiverse):
        spec, out = py_multiverse
        # universe 3 binds scale=log: payload "log(x)" is several tokens
        u = load_universe(out, 3)
        assert "return log(x) + 1" in u.text
        new_text = u.text.replace("return log(x) + 1", "return log(x + 1) + 1")
        statuses = match_placeholder_sites(u, new_text)
        by_dec = {st.decision: st for st in statuses}
        assert by_dec["scale"].status == VALUE_CHANGED
        assert by_dec["scale"].new_value == "log(x + 1)"


# --- propagation -------------------------------------------------------------


class TestPropagate:
    def test_no_edits_yields_identical_template(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        session = propagate(spec, u, u.text)
        assert session.suggested.text == spec.source_text
        assert session.regions == ()
        assert session.warnings == ()

    def test_block_edit_touches_only_that_block(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)  # model=linear
        new_text = u.text.replace("return x + 1", "return x + 2")
        session = roundtrip(spec, u, new_text)
        old_lines = spec.source_text.split("\n")
        new_lines = session.suggested.text.split("\n")
        assert len(old_lines) == len(new_lines)
        diffs = [
            (a, b) for a, b in zip(old_lines, new_lines) if a != b
        ]
        assert diffs == [("    return {{scale}} + 1", "    return {{scale}} + 2")]

    def test_shared_edit_reaches_every_universe(self, py_multiverse, tmp_path):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = u.text.replace("return [1, 2, 3]", "return [1, 2, 3, 4]")
        session = roundtrip(spec, u, new_text)
        out2 = tmp_path / "mv2"
        new_spec = parse_template(session.suggested.text, spec.source_path)
        compile_spec(new_spec, out2)
        for i in range(1, 9):
            text = (out2 / "universes" / f"universe_{i}.py").read_text()
            assert "return [1, 2, 3, 4]" in text

    def test_placeholder_edit_rewrites_front_matter(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)  # cutoff=low
        new_text = u.text.replace("threshold = 2.5", "threshold = 3.1")
        session = roundtrip(spec, u, new_text)
        new_spec = parse_template(session.suggested.text, spec.source_path)
        assert new_spec.decision("cutoff").option("low").payload == "3.1"
        assert new_spec.decision("cutoff").option("high").payload == "4.0"
        # body references stay abstract
        assert "threshold = {{cutoff}}" in session.suggested.text

    def test_locality_of_block_edits(self, py_multiverse, tmp_path):
        spec, out = py_multiverse
        before = {
            i: (out / "universes" / f"universe_{i}.py").read_text()
            for i in range(1, 9)
        }
        u = load_universe(out, 1)  # model=linear
        new_text = u.text.replace("return x + 1", "return x * 9 + 1")
        session = roundtrip(spec, u, new_text)
        out2 = tmp_path / "mv2"
        new_spec = parse_template(session.suggested.text, spec.source_path)
        compile_spec(new_spec, out2)
        summary_rows = {
            i: load_universe(out2, i).assignment for i in range(1, 9)
        }
        for i in range(1, 9):
            after = (out2 / "universes" / f"universe_{i}.py").read_text()
            if summary_rows[i]["model"] == "quadratic":
                assert after == before[i], f"universe {i} should be untouched"
            else:
                # scale payload varies per universe; the edit shape does not
                assert "* 9 + 1" in after

    def test_conflicting_placeholder_edits_raise(self, py_multiverse, tmp_path):
        # a template with two sites of one decision, edited divergently
        text = (
            "# --- CONFIG\n"
            '{"decisions": [{"name": "k", "options": ['
            '{"name": "a", "value": "1"}]}]}\n'
            "# --- END CONFIG\n"
            "x = {{k}}\n"
            "y = {{k}}\n"
        )
        path = tmp_path / "twin.py"
        path.write_text(text)
        spec = load_template(path)
        out = tmp_path / "twin_mv"
        compile_spec(spec, out)
        u = load_universe(out, 1)
        assert u.text == "x = 1\ny = 1\n"
        with pytest.raises(ConflictingEdit) as exc_info:
            propagate(spec, u, "x = 2\ny = 3\n")
        assert exc_info.value.conflicts

    def test_consistent_twin_edits_do_not_raise(self, py_multiverse, tmp_path):
        text = (
            "# --- CONFIG\n"
            '{"decisions": [{"name": "k", "options": ['
            '{"name": "a", "value": "1"}]}]}\n'
            "# --- END CONFIG\n"
            "x = {{k}}\n"
            "y = {{k}}\n"
        )
        path = tmp_path / "twin.py"
        path.write_text(text)
        spec = load_template(path)
        out = tmp_path / "twin_mv"
        compile_spec(spec, out)
        u = load_universe(out, 1)
        session = roundtrip(spec, u, "x = 7\ny = 7\n")
        new_spec = parse_template(session.suggested.text, spec.source_path)
        assert new_spec.decision("k").option("a").payload == "7"

    def test_site_removed_warns_and_drops_reference(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = u.text.replace("threshold = 2.5\n", "")
        session = roundtrip(spec, u, new_text)
        assert any("cutoff" in w for w in session.warnings)
        assert "threshold = {{cutoff}}" not in session.suggested.text
        # the declaration survives even though this site is gone
        new_spec = parse_template(session.suggested.text, spec.source_path)
        assert "cutoff" in new_spec.decision_names()

    def test_region_sides_follow_kind(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = u.text.replace(
            "import math\n", ""
        ).replace("print(fit(threshold))", "print(fit(threshold))\nprint('done')")
        session = roundtrip(spec, u, new_text)
        assert session.regions
        for region in session.regions:
            if region.kind == "insert":
                assert region.ou is None and region.ot is None
                assert region.nu is not None
            elif region.kind == "delete":
                assert region.nu is None and region.nt is None
                assert region.ou is not None
            else:
                assert region.ou is not None and region.nu is not None

    def test_region_spans_slice_valid_text(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = u.text.replace("return x + 1", "return x - 2").replace(
            "threshold = 2.5", "threshold = 8.8"
        )
        session = roundtrip(spec, u, new_text)
        texts = {
            "ou": u.text.encode("utf-8"),
            "nu": session.new_universe_text.encode("utf-8"),
            "ot": spec.source_text.encode("utf-8"),
            "nt": session.suggested.text.encode("utf-8"),
        }
        assert session.regions
        for region in session.regions:
            for side, raw in texts.items():
                span = getattr(region, side)
                if span is None:
                    continue
                s, e = span
                assert 0 <= s <= e <= len(raw)
                raw[s:e].decode("utf-8")  # must not raise

    def test_line_map_serializes(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = u.text.replace("import math\n", "")
        session = propagate(spec, u, new_text)
        obj = session.line_map.to_json_obj()
        assert obj[0] == {"old": 1, "new": None, "inserted_after": 0}
        assert all(set(e) == {"old", "new", "inserted_after"} for e in obj)


SCRIPTED_PY_EDITS = [
    # (universe index, old fragment, new fragment)
    (1, "    return {{scale}} + 1\n".replace("{{scale}}", "x"),
     "    x = float(x)\n    return x + 1\n"),
    (1, "import math\n", ""),
    (1, "return x + 1", "return x + 2"),
    (1, "threshold = 2.5", "threshold = 9.9"),
    (1, "return x + 1", "return y + 1"),
    (2, "return x ** 2", "return abs(x) ** 2"),
    (3, "return log(x) + 1", "return log(x + 1) + 1"),
    (1, "def fit(x):", "# fitted below\ndef fit(x):"),
    (1, "print(fit(threshold))", "print(fit(threshold))\nprint('bye')"),
    (5, "threshold = 4.0", "threshold = 4.5"),
    (1, "def load():\n    return [1, 2, 3]\n", "def load():\n    return []\n"),
    (8, "return log(x) ** 2", "value = log(x) ** 2\n    return value"),
]


class TestGoldRoundTrip:
    @pytest.mark.parametrize("index,old_frag,new_frag", SCRIPTED_PY_EDITS)
    def test_python_flavored_edits(self, py_multiverse, index, old_frag, new_frag):
        spec, out = py_multiverse
        u = load_universe(out, index)
        assert old_frag in u.text
        roundtrip(spec, u, u.text.replace(old_frag, new_frag))

    R_EDITS = [
        (2, "model <- loess(y ~ x, data = df, span = 0.3)",
         "model <- loess(y ~ x, data = df, span = 0.45)"),
        (2, "library(stats)\n", "library(stats)\nlibrary(utils)\n"),
        (1, "model <- lm(y ~ x, data = df)",
         "model <- lm(y ~ x - 1, data = df)"),
        (2, "print(summary(model))", "plot(model)\nprint(summary(model))"),
        (1, 'df <- read.csv("data.csv")\n', ""),
    ]

    @pytest.mark.parametrize("index,old_frag,new_frag", R_EDITS)
    def test_r_flavored_edits(self, r_multiverse, index, old_frag, new_frag):
        spec, out = r_multiverse
        u = load_universe(out, index)
        assert old_frag in u.text
        roundtrip(spec, u, u.text.replace(old_frag, new_frag))

    def test_combined_edit_session(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        new_text = (
            u.text.replace("import math\n", "")
            .replace("threshold = 2.5", "threshold = 7.5")
            .replace("def fit(x):", "def fit(x):\n    # tweaked")
        )
        session = roundtrip(spec, u, new_text)
        assert len(session.suggested.provenance) >= 2

    def test_emptied_universe(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        roundtrip(spec, u, "")

    def test_missing_trailing_newline_normalized(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 1)
        session = roundtrip(spec, u, u.text.rstrip("\n"))
        assert session.new_universe_text.endswith("\n")


# --- loading and saving ------------------------------------------------------


class TestLoadSave:
    def test_universe_index_from_path(self):
        assert universe_index_from_path("mv/universes/universe_12.py") == 12
        assert universe_index_from_path("universe_3.R") == 3
        with pytest.raises(IoError):
            universe_index_from_path("notes.txt")

    def test_load_universe_round_trips_fields(self, py_multiverse):
        spec, out = py_multiverse
        u = load_universe(out, 2)
        assert u.index == 2
        assert u.filename == "universe_2.py"
        assert u.assignment["model"] == "quadratic"
        assert u.sidecar.placeholders

    def test_load_universe_out_of_range(self, py_multiverse):
        spec, out = py_multiverse
        with pytest.raises(IoError):
            load_universe(out, 99)

    def test_save_template_writes_atomically(self, py_multiverse, tmp_path):
        spec, out = py_multiverse
        target = tmp_path / "saved.py"
        save_template(spec.source_text, target)
        assert target.read_text(encoding="utf-8") == spec.source_text
        assert not list(tmp_path.glob("saved.py*.tmp"))

    def test_save_template_rejects_invalid_and_writes_nothing(self, tmp_path):
        target = tmp_path / "bad.py"
        bad = "# --- CONFIG\n{}\n"  # CONFIG never closed
        with pytest.raises(Exception) as exc_info:
            save_template(bad, target)
        assert not target.exists()

    def test_save_and_compile_reports_counts(self, tmp_path):
        text = (
            "# --- CONFIG\n"
            '{"decisions": [{"name": "a", "options": ['
            '{"name": "x", "value": "1"}, {"name": "y", "value": "2"}]}]}\n'
            "# --- END CONFIG\n"
            "v = {{a}}\n"
            "# --- (b) p\nleft = 1\n"
            "# --- (b) q\nleft = 2\n"
            "# --- end\n"
        )
        report = save_and_compile(text, tmp_path / "t.py", tmp_path / "mv")
        assert report.universes == 4
        assert (tmp_path / "mv" / "summary.csv").exists()
