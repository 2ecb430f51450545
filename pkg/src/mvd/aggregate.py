"""Error extraction, similarity grouping, and decision attribution.

Failed universes leave stderr logs. The aggregator pulls an error message
out of each log, clusters similar messages (cosine similarity over
TF-IDF-weighted character 3-gram counts, single-linkage components at a
threshold), and reports which decision options the members of each
cluster share. A decision is flagged relevant when the members span a
strict subset of its options; a decision whose every option appears
cannot explain the error.

IDF uses the smoothed form ln((1+N)/(1+df)) + 1 with the current record
set as the corpus, so similarity scores shift as the corpus grows.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .exceptions import IoError
from .runner import load_run_manifest
from .template import SpecSummary, load_manifest, load_summary

NGRAM = 3
DEFAULT_THRESHOLD = 0.8
FALLBACK_TAIL_LINES = 30
PREVIEW_CHARS = 120
MAX_SAMPLES = 5

_MARKER_RE = re.compile(r"^\s*(Error|Traceback|Exception)")


@dataclass(frozen=True)
class ErrorRecord:
    index: int
    message: str
    raw_path: str


@dataclass(frozen=True)
class DecisionAttribution:
    decision: str
    shared_options: tuple[str, ...]
    all_options: tuple[str, ...]
    relevant: bool


@dataclass(frozen=True)
class ErrorGroup:
    id: int
    representative: str
    members: tuple[int, ...]  # sorted universe indices
    preview: str

    @property
    def count(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Progress:
    executed: int
    total: int
    failed: int


def extract_error(stderr_text: str, exit_code: int) -> Optional[str]:
    """Pull the error message out of one stderr stream.

    Nothing to extract on success or blank stderr. Otherwise the message
    runs from the last marker line (Error/Traceback/Exception after
    optional leading whitespace) to the end; with no marker, the last 30
    lines stand in.
    """
    if exit_code == 0 or not stderr_text.strip():
        return None
    lines = stderr_text.splitlines()
    marker_at = None
    for i, line in enumerate(lines):
        if _MARKER_RE.match(line):
            marker_at = i
    if marker_at is not None:
        picked = lines[marker_at:]
    else:
        picked = lines[-FALLBACK_TAIL_LINES:]
    message = "\n".join(picked).rstrip()
    return message or None


def _grams(message: str) -> Counter:
    if len(message) < NGRAM:
        return Counter({message: 1})
    return Counter(message[i : i + NGRAM] for i in range(len(message) - NGRAM + 1))


def _idf(corpus_grams: Sequence[set], n_docs: int) -> dict:
    df: Counter = Counter()
    for grams in corpus_grams:
        df.update(grams)
    return {
        g: math.log((1 + n_docs) / (1 + count)) + 1.0 for g, count in df.items()
    }


def _cosine(a: Counter, b: Counter, idf: dict) -> float:
    dot = sum(a[g] * b[g] * idf.get(g, 1.0) ** 2 for g in a.keys() & b.keys())
    norm_a = math.sqrt(sum((c * idf.get(g, 1.0)) ** 2 for g, c in a.items()))
    norm_b = math.sqrt(sum((c * idf.get(g, 1.0)) ** 2 for g, c in b.items()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return dot / (norm_a * norm_b)


def similarity(a: str, b: str, corpus: Optional[Sequence[str]] = None) -> float:
    """Cosine similarity of the two messages' TF-IDF 3-gram vectors.

    IDF comes from ``corpus`` (defaulting to just the two messages), so
    scores are relative to the record set under analysis.
    """
    if corpus is None:
        corpus = [a, b]
    gram_sets = [set(_grams(m)) for m in corpus]
    idf = _idf(gram_sets, len(corpus))
    return _cosine(_grams(a), _grams(b), idf)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def group_errors(
    records: Sequence[ErrorRecord], threshold: float = DEFAULT_THRESHOLD
) -> list[ErrorGroup]:
    """Single-linkage clustering: connect records at similarity >= threshold,
    one group per connected component. Groups come back ordered by falling
    member count, ties broken by their lowest universe index."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    if not records:
        return []
    messages = [r.message for r in records]
    grams = [_grams(m) for m in messages]
    idf = _idf([set(g) for g in grams], len(messages))
    uf = _UnionFind(range(len(records)))
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            if _cosine(grams[i], grams[j], idf) >= threshold:
                uf.union(i, j)
    components: dict[int, list[int]] = {}
    for i in range(len(records)):
        components.setdefault(uf.find(i), []).append(i)

    def sort_key(component: list[int]):
        indices = [records[i].index for i in component]
        return (-len(component), min(indices))

    groups = []
    for gid, component in enumerate(sorted(components.values(), key=sort_key), 1):
        members = sorted(records[i].index for i in component)
        lowest = min(component, key=lambda i: records[i].index)
        representative = records[lowest].message
        groups.append(
            ErrorGroup(
                id=gid,
                representative=representative,
                members=tuple(members),
                preview=representative[:PREVIEW_CHARS],
            )
        )
    return groups


def decision_catalog(source) -> list[tuple[str, tuple[str, ...]]]:
    """Normalize a MultiverseSpec or a compile manifest into
    (decision, declared options) pairs in declaration order."""
    if isinstance(source, dict):
        return [
            (d["name"], tuple(d["options"])) for d in source.get("decisions", [])
        ]
    return [(d.name, tuple(d.option_names())) for d in source.decisions]


def attribute_decisions(
    group: ErrorGroup, summary: SpecSummary, spec
) -> list[DecisionAttribution]:
    """Per decision: the options observed among the group's members, the
    declared option set, and whether the observed set is a strict subset
    (the decision can then explain the error)."""
    catalog = decision_catalog(spec)
    rows = {i: summary.assignment(i) for i in group.members}
    out = []
    for decision, all_options in catalog:
        shared = sorted({a[decision] for a in rows.values()})
        relevant = set(shared) < set(all_options)
        out.append(
            DecisionAttribution(
                decision=decision,
                shared_options=tuple(shared),
                all_options=tuple(all_options),
                relevant=relevant,
            )
        )
    return out


def _attribution_json(attr: DecisionAttribution) -> dict:
    return {
        "name": attr.decision,
        "shared_options": list(attr.shared_options),
        "all_options": list(attr.all_options),
        "relevant": attr.relevant,
    }


def build_report(
    run_manifest: Optional[dict],
    records: Sequence[ErrorRecord],
    groups: Sequence[ErrorGroup],
    attributions: dict,
    summary: Optional[SpecSummary] = None,
    total_universes: Optional[int] = None,
) -> dict:
    """Assemble the ErrorReport document. ``attributions`` maps group id to
    its DecisionAttribution list; ``summary`` supplies sample filenames."""
    if run_manifest is not None:
        progress = Progress(
            executed=run_manifest.get("executed", 0),
            total=run_manifest.get("total_universes", total_universes or 0),
            failed=run_manifest.get("failed", 0),
        )
    else:
        progress = Progress(executed=0, total=total_universes or 0, failed=0)

    def sample_names(group: ErrorGroup) -> list[str]:
        picked = group.members[:MAX_SAMPLES]
        if summary is not None:
            return [summary.rows[i - 1][0] for i in picked]
        return [f"universe_{i}" for i in picked]

    return {
        "progress": {
            "executed": progress.executed,
            "total": progress.total,
            "failed": progress.failed,
        },
        "groups": [
            {
                "id": g.id,
                "count": g.count,
                "preview": g.preview,
                "representative": g.representative,
                "members": list(g.members),
                "samples": sample_names(g),
                "decisions": [
                    _attribution_json(a) for a in attributions.get(g.id, [])
                ],
            }
            for g in groups
        ],
    }


def collect_records(multiverse_dir, run_manifest: dict) -> list[ErrorRecord]:
    """Read stderr logs for the manifest's non-ok records and extract
    messages; records with nothing extractable are dropped."""
    records = []
    for rec in run_manifest.get("records", []):
        if rec.get("status") == "ok":
            continue
        path = Path(rec["stderr"])
        if not path.is_absolute():
            path = Path(multiverse_dir) / path
        try:
            text = path.read_text(encoding="utf-8", errors="replace")
        except OSError:
            continue
        message = extract_error(text, rec.get("exit_code", 1))
        if message:
            records.append(
                ErrorRecord(index=rec["index"], message=message, raw_path=str(path))
            )
    return records


def aggregate_errors(multiverse_dir, threshold: float = DEFAULT_THRESHOLD) -> dict:
    """Full pipeline for one multiverse directory: manifest + stderr logs
    in, ErrorReport document out."""
    multiverse_dir = Path(multiverse_dir)
    try:
        summary = load_summary(multiverse_dir / "summary.csv")
    except IoError:
        summary = None
    try:
        manifest = load_manifest(multiverse_dir)
    except IoError:
        manifest = None
    total = manifest["universes"] if manifest else (len(summary) if summary else 0)
    run_manifest = load_run_manifest(multiverse_dir)
    if run_manifest is None:
        return build_report(None, [], [], {}, summary=summary, total_universes=total)
    records = collect_records(multiverse_dir, run_manifest)
    groups = group_errors(records, threshold)
    attributions = {}
    if summary is not None and manifest is not None:
        for g in groups:
            attributions[g.id] = attribute_decisions(g, summary, manifest)
    return build_report(
        run_manifest, records, groups, attributions,
        summary=summary, total_universes=total,
    )
