"""Files-on-disk rendering of an error report: figures plus a flat CSV.

The CSV is the machine-readable side (one row per error group, comma
delimited, newlines in previews collapsed to spaces). The figures give the
at-a-glance view: group sizes, and how failures spread over the options of
each decision.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first

from .aggregate import DEFAULT_THRESHOLD, aggregate_errors
from .exceptions import IoError
from .template import load_summary

__all__ = ["write_report"]


def _flat(text: str) -> str:
    return " ".join(text.split())


def _write_csv(path: Path, doc: dict) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["group", "count", "preview", "members", "samples", "relevant_decisions"]
        )
        for g in doc["groups"]:
            relevant = ";".join(
                f"{d['name']}:{'+'.join(d['shared_options'])}"
                for d in g["decisions"]
                if d["relevant"]
            )
            writer.writerow(
                [
                    g["id"],
                    g["count"],
                    _flat(g["preview"]),
                    ";".join(str(i) for i in g["members"]),
                    ";".join(g["samples"]),
                    relevant,
                ]
            )


def _groups_figure(path: Path, doc: dict) -> None:
    groups = doc["groups"]
    progress = doc["progress"]
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.6 * len(groups) + 1.5)))
    if groups:
        labels = [f"group {g['id']}" for g in groups]
        counts = [g["count"] for g in groups]
        ax.barh(labels, counts, color="#c0392b")
        ax.invert_yaxis()
        ax.set_xlabel("failing universes")
        for i, c in enumerate(counts):
            ax.text(c, i, f" {c}", va="center")
    else:
        ax.text(0.5, 0.5, "no failing universes", ha="center", va="center")
        ax.set_axis_off()
    ax.set_title(
        f"error groups ({progress['failed']} failed of {progress['executed']} executed)"
    )
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _decisions_figure(path: Path, doc: dict, summary) -> bool:
    """Failures per decision option; skipped without failing universes."""
    failing = sorted({i for g in doc["groups"] for i in g["members"]})
    if not failing or summary is None:
        return False
    counts: dict[str, dict[str, int]] = {}
    declared: dict[str, list[str]] = {}
    for g in doc["groups"]:
        for d in g["decisions"]:
            declared.setdefault(d["name"], list(d["all_options"]))
    if not declared:
        declared = {
            name: sorted(summary.options_of(name)) for name in summary.decision_names
        }
    for name, options in declared.items():
        counts[name] = {o: 0 for o in options}
    for i in failing:
        assignment = summary.assignment(i)
        for name in counts:
            counts[name][assignment[name]] += 1
    labels = []
    values = []
    for name, options in declared.items():
        for o in options:
            labels.append(f"{name} = {o}")
            values.append(counts[name][o])
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.45 * len(labels) + 1.2)))
    ax.barh(labels, values, color="#2c3e50")
    ax.invert_yaxis()
    ax.set_xlabel("failing universes binding this option")
    ax.set_title("failure spread over decision options")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return True


def write_report(
    multiverse_dir,
    out_dir=None,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[Path]:
    """Render the error report for one multiverse directory to files.

    Writes ``errors.csv`` and ``groups.png`` always, ``decisions.png`` when
    there is at least one failing universe and a readable summary. Returns
    the written paths.
    """
    multiverse_dir = Path(multiverse_dir)
    out = Path(out_dir) if out_dir is not None else multiverse_dir / "report"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create report dir: {exc}", path=str(out)) from exc
    doc = aggregate_errors(multiverse_dir, threshold=threshold)
    try:
        summary = load_summary(multiverse_dir / "summary.csv")
    except IoError:
        summary = None

    written = []
    csv_path = out / "errors.csv"
    _write_csv(csv_path, doc)
    written.append(csv_path)
    groups_path = out / "groups.png"
    _groups_figure(groups_path, doc)
    written.append(groups_path)
    decisions_path = out / "decisions.png"
    if _decisions_figure(decisions_path, doc, summary):
        written.append(decisions_path)
    return written
