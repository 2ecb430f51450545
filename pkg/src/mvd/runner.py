"""Subprocess execution of selected universes with captured output.

Universes run under a bounded worker pool. Each one gets its stdout and
stderr streamed to per-universe files, and a manifest JSON is rewritten
atomically after every completion so progress is observable mid-run.
"""

from __future__ import annotations

import datetime
import json
import os
import shlex
import subprocess
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

from .cover import CoverInput, compute_cover
from .exceptions import (
    DuplicateId,
    IoError,
    OutOfRange,
    UnknownDecisionOrOption,
)
from .template import SpecSummary, load_manifest

MANIFEST_NAME = "run_manifest.json"

# Built-in command templates by script extension; a "commands.json" file in
# the multiverse directory extends or overrides these, and --cmd overrides
# everything.
DEFAULT_COMMANDS = {
    "py": "python3 {file}",
    "r": "Rscript {file}",
    "R": "Rscript {file}",
    "sh": "sh {file}",
    "js": "node {file}",
}


class RunStatus(Enum):
    OK = "ok"
    FAILED = "failed"
    TIMEOUT = "timeout"
    SPAWN_ERROR = "spawn_error"


@dataclass(frozen=True)
class RunSelection:
    """Which universes to run: all, an index range, explicit ids, a seeded
    decision cover, or a conjunction of decision=option filters."""

    kind: str
    start: int = 0
    end: int = 0
    ids: tuple[int, ...] = ()
    seed: Optional[int] = None
    filters: tuple[tuple[str, str], ...] = ()

    @classmethod
    def all(cls):
        return cls(kind="all")

    @classmethod
    def range(cls, start: int, end: int):
        return cls(kind="range", start=start, end=end)

    @classmethod
    def of_ids(cls, ids: Sequence[int]):
        return cls(kind="ids", ids=tuple(ids))

    @classmethod
    def cover(cls, seed: int):
        return cls(kind="cover", seed=seed)

    @classmethod
    def where(cls, filters: Sequence[tuple[str, str]]):
        return cls(kind="where", filters=tuple(filters))

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "range":
            out.update(start=self.start, end=self.end)
        elif self.kind == "ids":
            out["ids"] = list(self.ids)
        elif self.kind == "cover":
            out["seed"] = self.seed
        elif self.kind == "where":
            out["filters"] = [f"{d}={o}" for d, o in self.filters]
        return out


@dataclass(frozen=True)
class RunRecord:
    index: int
    exit_code: int
    stderr_path: str
    stdout_path: str
    duration_ms: int
    status: RunStatus


@dataclass(frozen=True)
class RunReport:
    records: tuple[RunRecord, ...]
    selection: RunSelection
    total_universes: int
    started: str
    finished: str

    @property
    def failed_count(self) -> int:
        return sum(1 for r in self.records if r.status is not RunStatus.OK)


def resolve_selection(
    sel: RunSelection,
    summary: SpecSummary,
    cover_fn: Optional[Callable] = None,
    catalog: Optional[Mapping[str, Sequence[str]]] = None,
) -> list[int]:
    """Turn a selection into concrete universe indices.

    ``catalog`` maps decision name to its declared options; without it,
    Where filters are validated against the options observed in the
    summary. Raises OutOfRange, DuplicateId, or UnknownDecisionOrOption.
    """
    n = len(summary)
    if sel.kind == "all":
        return list(range(1, n + 1))
    if sel.kind == "range":
        if not (1 <= sel.start <= sel.end <= n):
            raise OutOfRange(
                f"range {sel.start}..{sel.end} outside universes 1..{n}"
            )
        return list(range(sel.start, sel.end + 1))
    if sel.kind == "ids":
        seen = set()
        for i in sel.ids:
            if not 1 <= i <= n:
                raise OutOfRange(f"universe {i} outside 1..{n}")
            if i in seen:
                raise DuplicateId(f"universe {i} selected twice")
            seen.add(i)
        return list(sel.ids)
    if sel.kind == "cover":
        if cover_fn is None:
            cover_fn = lambda summ, seed: compute_cover(
                CoverInput.from_summary(summ), seed
            )
        return list(cover_fn(summary, sel.seed).selected)
    if sel.kind == "where":
        names = summary.decision_names
        for dec, opt in sel.filters:
            if dec not in names:
                raise UnknownDecisionOrOption(f"unknown decision {dec!r}")
            declared = (
                set(catalog[dec]) if catalog and dec in catalog
                else summary.options_of(dec)
            )
            if opt not in declared:
                raise UnknownDecisionOrOption(f"decision {dec} has no option {opt!r}")
        out = []
        for i in range(1, n + 1):
            a = summary.assignment(i)
            if all(a[dec] == opt for dec, opt in sel.filters):
                out.append(i)
        return out
    raise ValueError(f"unknown selection kind {sel.kind!r}")


def default_command(ext: str, multiverse_dir=None) -> Optional[str]:
    commands = dict(DEFAULT_COMMANDS)
    if multiverse_dir is not None:
        override = Path(multiverse_dir) / "commands.json"
        if override.exists():
            try:
                commands.update(json.loads(override.read_text(encoding="utf-8")))
            except (OSError, ValueError) as exc:
                raise IoError(f"bad commands.json: {exc}", path=str(override)) from exc
    return commands.get(ext)


def _atomic_write_json(path: Path, obj: dict):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime(
        "%Y-%m-%dT%H:%M:%S.%fZ"
    )


def _record_json(r: RunRecord, root: Path) -> dict:
    # manifest paths are relative to the multiverse dir so readers resolve
    # them no matter where the run was launched from
    def rel(p: str) -> str:
        try:
            return str(Path(p).relative_to(root))
        except ValueError:
            return p

    return {
        "index": r.index,
        "status": r.status.value,
        "exit_code": r.exit_code,
        "duration_ms": r.duration_ms,
        "stderr": rel(r.stderr_path),
        "stdout": rel(r.stdout_path),
    }


def _run_one(
    universe_path: Path,
    stderr_path: Path,
    stdout_path: Path,
    command_template: str,
    timeout: Optional[float],
) -> tuple[int, RunStatus, int]:
    argv = [
        part.replace("{file}", str(universe_path))
        for part in shlex.split(command_template)
    ]
    start = time.monotonic()
    try:
        with stdout_path.open("wb") as out_fh, stderr_path.open("wb") as err_fh:
            proc = subprocess.run(
                argv, stdout=out_fh, stderr=err_fh, timeout=timeout
            )
        status = RunStatus.OK if proc.returncode == 0 else RunStatus.FAILED
        code = proc.returncode
    except subprocess.TimeoutExpired:
        status, code = RunStatus.TIMEOUT, -1
    except OSError as exc:
        # missing interpreter and friends: recorded, never fatal
        stderr_path.write_text(f"spawn error: {exc}\n", encoding="utf-8")
        status, code = RunStatus.SPAWN_ERROR, 127
    duration_ms = int((time.monotonic() - start) * 1000)
    return code, status, duration_ms


def run(
    universe_dir,
    indices: Sequence[int],
    command_template: str,
    jobs: int = 0,
    timeout: Optional[float] = None,
    selection: Optional[RunSelection] = None,
) -> RunReport:
    """Execute the given universes under ``command_template``.

    ``universe_dir`` is the compile output directory (the one holding
    ``universes/``). ``{file}`` in the template is replaced per universe.
    Dispatch order is ascending index; completion order is whatever the
    pool produces. One universe failing never aborts the batch.
    """
    if "{file}" not in command_template:
        raise ValueError("command template must contain {file}")
    if jobs <= 0:
        jobs = os.cpu_count() or 1
    if selection is None:
        selection = RunSelection.of_ids(indices)
    root = Path(universe_dir)
    ext = None
    total_universes = len(indices)
    try:
        manifest = load_manifest(root)
        ext = manifest.get("language_ext")
        total_universes = manifest.get("universes", total_universes)
    except IoError:
        pass

    errors_dir = root / "errors"
    out_dir = root / "out"
    try:
        errors_dir.mkdir(parents=True, exist_ok=True)
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output dirs: {exc}", path=str(root)) from exc

    def universe_file(i: int) -> Path:
        if ext:
            return root / "universes" / f"universe_{i}.{ext}"
        matches = sorted((root / "universes").glob(f"universe_{i}.*"))
        return matches[0] if matches else root / "universes" / f"universe_{i}"

    started = _utc_now()
    records: list[RunRecord] = []
    lock = threading.Lock()
    manifest_path = root / MANIFEST_NAME

    def write_manifest(finished: Optional[str]):
        _atomic_write_json(
            manifest_path,
            {
                "selection": selection.describe(),
                "selected": sorted(indices),
                "total_universes": total_universes,
                "executed": len(records),
                "failed": sum(1 for r in records if r.status is not RunStatus.OK),
                "records": [
                    _record_json(r, root)
                    for r in sorted(records, key=lambda r: r.index)
                ],
                "started": started,
                "finished": finished,
            },
        )

    write_manifest(None)

    def task(i: int) -> RunRecord:
        stderr_path = errors_dir / f"universe_{i}.stderr"
        stdout_path = out_dir / f"universe_{i}.stdout"
        code, status, duration = _run_one(
            universe_file(i), stderr_path, stdout_path, command_template, timeout
        )
        return RunRecord(
            index=i,
            exit_code=code,
            stderr_path=str(stderr_path),
            stdout_path=str(stdout_path),
            duration_ms=duration,
            status=status,
        )

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(task, i) for i in sorted(indices)]
        for fut in as_completed(futures):
            record = fut.result()
            with lock:
                records.append(record)
                write_manifest(None)

    finished = _utc_now()
    report = RunReport(
        records=tuple(sorted(records, key=lambda r: r.index)),
        selection=selection,
        total_universes=total_universes,
        started=started,
        finished=finished,
    )
    write_manifest(finished)
    return report


def load_run_manifest(multiverse_dir) -> Optional[dict]:
    path = Path(multiverse_dir) / MANIFEST_NAME
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read run manifest: {exc}", path=str(path)) from exc
