"""Command line entry points.

Every subcommand works against a compiled multiverse directory (default
``./multiverse``) so the typical session reads::

    mvd compile analysis.py
    mvd run --cover
    mvd errors
    mvd diff multiverse/universes/universe_7.py --save-and-compile
    mvd serve
"""

from __future__ import annotations

import difflib
import functools
import json
import time
from pathlib import Path
from typing import Optional

import click

from .aggregate import DEFAULT_THRESHOLD, aggregate_errors
from .exceptions import ConflictingEdit, MvdError
from .propagate import (
    propagate,
    save_and_compile,
    save_template,
    universe_index_from_path,
)
from .runner import (
    RunSelection,
    default_command,
    resolve_selection,
    run as run_universes,
)
from .service import ServiceConfig, serve as serve_service
from .template import (
    compile as compile_spec,
    load_manifest,
    load_summary,
    parse_template,
    render_universe,
)
from .report import write_report


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConflictingEdit as exc:
            lines = [str(exc)]
            for dec, opt, a, b in exc.conflicts:
                lines.append(f"  {dec}={opt}: {a!r} vs {b!r}")
            raise click.ClickException("\n".join(lines)) from exc
        except MvdError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


@click.group()
def main():
    """Compile, run, and debug a multiverse analysis."""


@main.command("compile")
@click.argument("template", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--out",
    "out_dir",
    default="multiverse",
    show_default=True,
    type=click.Path(file_okay=False),
)
@_guard
def compile_cmd(template, out_dir):
    """Expand TEMPLATE into one script per universe."""
    path = Path(template)
    spec = parse_template(path.read_text(encoding="utf-8"), path)
    report = compile_spec(spec, out_dir)
    click.echo(
        f"compiled {report.universes} universes "
        f"({report.decisions} decisions, {report.options} options) -> {out_dir}"
    )


def _pick_selection(all_, range_, cover, seed, ids, where) -> RunSelection:
    chosen = [
        name
        for name, active in [
            ("--all", all_),
            ("--range", bool(range_)),
            ("--cover", cover),
            ("--ids", bool(ids)),
            ("--where", bool(where)),
        ]
        if active
    ]
    if len(chosen) > 1:
        raise click.UsageError(f"pick one selection mode, got {' and '.join(chosen)}")
    if seed is not None and not cover:
        raise click.UsageError("--seed only applies with --cover")
    if cover:
        if seed is None:
            seed = time.time_ns() % 1_000_000_007
        click.echo(f"cover seed: {seed}")
        return RunSelection.cover(seed)
    if range_:
        return RunSelection.range(range_[0], range_[1])
    if ids:
        try:
            parsed = [int(part) for part in ids.split(",") if part.strip()]
        except ValueError:
            raise click.UsageError(f"--ids wants comma-separated integers, got {ids!r}")
        return RunSelection.of_ids(parsed)
    if where:
        filters = []
        for clause in where:
            if "=" not in clause:
                raise click.UsageError(f"--where wants DECISION=OPTION, got {clause!r}")
            dec, opt = clause.split("=", 1)
            filters.append((dec, opt))
        return RunSelection.where(filters)
    return RunSelection.all()


@main.command("run")
@click.option("--all", "all_", is_flag=True, help="Every universe (the default).")
@click.option("--range", "range_", nargs=2, type=int, help="Inclusive index range.")
@click.option("--cover", is_flag=True, help="Randomized decision-cover subset.")
@click.option("--seed", type=int, default=None, help="Cover seed (printed when omitted).")
@click.option("--ids", default=None, help="Comma-separated universe indices.")
@click.option("--where", multiple=True, help="DECISION=OPTION filter, repeatable.")
@click.option("--jobs", type=int, default=0, show_default="cpu count")
@click.option("--cmd", default=None, help="Command template containing {file}.")
@click.option("--timeout", type=float, default=None, help="Per-universe seconds.")
@click.option("--dir", "dir_", default="multiverse", show_default=True)
@_guard
def run_cmd(all_, range_, cover, seed, ids, where, jobs, cmd, timeout, dir_):
    """Execute universes and record a run manifest."""
    root = Path(dir_)
    summary = load_summary(root / "summary.csv")
    selection = _pick_selection(all_, range_, cover, seed, ids, where)
    try:
        manifest = load_manifest(root)
    except MvdError:
        manifest = None
    catalog = None
    if manifest is not None:
        catalog = {d["name"]: d["options"] for d in manifest.get("decisions", [])}
    indices = resolve_selection(selection, summary, catalog=catalog)
    if cmd is None:
        ext = manifest.get("language_ext") if manifest else None
        cmd = default_command(ext, root) if ext else None
        if cmd is None:
            raise click.UsageError(
                f"no default command for extension {ext!r}; pass --cmd '... {{file}} ...'"
            )
    report = run_universes(
        root, indices, cmd, jobs=jobs, timeout=timeout, selection=selection
    )
    ok = len(report.records) - report.failed_count
    click.echo(
        f"ran {len(report.records)} of {report.total_universes} universes: "
        f"{ok} ok, {report.failed_count} failed"
    )
    click.echo(f"manifest: {root / 'run_manifest.json'}")


@main.command("errors")
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD, show_default=True)
@click.option("--json", "json_path", type=click.Path(dir_okay=False), default=None)
@click.option("--dir", "dir_", default="multiverse", show_default=True)
@_guard
def errors_cmd(threshold, json_path, dir_):
    """Group failing universes by error message and attribute decisions."""
    if not 0 < threshold <= 1:
        raise click.UsageError("--threshold must be in (0, 1]")
    doc = aggregate_errors(Path(dir_), threshold=threshold)
    progress = doc["progress"]
    click.echo(
        f"progress: {progress['executed']}/{progress['total']} executed, "
        f"{progress['failed']} failed"
    )
    groups = doc["groups"]
    click.echo(f"{len(groups)} error group(s)")
    for g in groups:
        preview = " ".join(g["preview"].split())
        click.echo(f"  [{g['id']}] {g['count']} universes: {preview}")
        relevant = [d for d in g["decisions"] if d["relevant"]]
        if relevant:
            detail = ", ".join(
                f"{d['name']}={'+'.join(d['shared_options'])}" for d in relevant
            )
            click.echo(f"      likely: {detail}")
    if json_path:
        Path(json_path).write_text(
            json.dumps(doc, indent=2) + "\n", encoding="utf-8"
        )
        click.echo(f"wrote {json_path}")


@main.command("report")
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--dir", "dir_", default="multiverse", show_default=True)
@_guard
def report_cmd(threshold, out_dir, dir_):
    """Render the error report to figures and a CSV."""
    if not 0 < threshold <= 1:
        raise click.UsageError("--threshold must be in (0, 1]")
    written = write_report(Path(dir_), out_dir=out_dir, threshold=threshold)
    for path in written:
        click.echo(f"wrote {path}")


def _infer_dir(edited: Path, dir_: Optional[str]) -> Path:
    if dir_ is not None:
        return Path(dir_)
    resolved = edited.resolve()
    if resolved.parent.name == "universes":
        return resolved.parent.parent
    return Path("multiverse")


@main.command("diff")
@click.argument("edited", type=click.Path(exists=True, dir_okay=False))
@click.option("--save", "save_path", type=click.Path(dir_okay=False), default=None)
@click.option("--save-and-compile", "compile_flag", is_flag=True)
@click.option("--dir", "dir_", default=None, help="Multiverse directory (inferred from EDITED).")
@_guard
def diff_cmd(edited, save_path, compile_flag, dir_):
    """Diff an edited universe and propagate the edits to the template."""
    edited_path = Path(edited)
    root = _infer_dir(edited_path, dir_)
    index = universe_index_from_path(edited_path)
    manifest = load_manifest(root)
    template_path = Path(manifest["template"])
    text = template_path.read_text(encoding="utf-8")
    spec = parse_template(text, template_path)
    summary = load_summary(root / "summary.csv")
    assignment = summary.assignment(index)
    pristine = render_universe(spec, assignment, index)
    session = propagate(spec, pristine, edited_path.read_text(encoding="utf-8"))

    bound = ", ".join(f"{d}={assignment[d]}" for d in summary.decision_names)
    click.echo(f"universe {index} ({bound})")
    for warning in session.warnings:
        click.echo(f"warning: {warning}")
    if session.suggested.text == text:
        click.echo("no template changes")
    else:
        click.echo(f"{len(session.regions)} linked region(s)")
        for line in session.suggested.provenance:
            click.echo(f"  {line}")
        diff_lines = difflib.unified_diff(
            text.splitlines(keepends=True),
            session.suggested.text.splitlines(keepends=True),
            fromfile=str(template_path),
            tofile="suggested",
        )
        click.echo("".join(diff_lines), nl=False)
    if save_path:
        save_template(session.suggested.text, save_path)
        click.echo(f"saved {save_path}")
    if compile_flag:
        report = save_and_compile(session.suggested.text, template_path, root)
        click.echo(
            f"saved {template_path} and recompiled {report.universes} universes"
        )


@main.command("serve")
@click.option("--port", type=int, default=8765, show_default=True)
@click.option("--dir", "dir_", default="multiverse", show_default=True)
@click.option("--read-only", is_flag=True)
@click.option("--threshold", type=float, default=DEFAULT_THRESHOLD, show_default=True)
@_guard
def serve_cmd(port, dir_, read_only, threshold):
    """Serve the debugging API and UI for one multiverse directory."""
    try:
        config = ServiceConfig(
            multiverse_dir=Path(dir_),
            port=port,
            threshold=threshold,
            read_only=read_only,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"serving {dir_} at http://127.0.0.1:{port}")
    serve_service(config)
