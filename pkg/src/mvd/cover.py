"""Decision-cover selection: a small random subset of universes that
together exercise every decision option present in the multiverse.

Exact minimal set cover is NP-hard, so selection is a seeded sampling
loop. Each round draws uniformly among the universes sharing no option
with anything already picked (disjoint picks cover fastest); once no
such universe is left but options remain uncovered, it draws among the
universes still contributing at least one uncovered option. Different
seeds yield different subsets on purpose; the same seed reproduces the
run.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .exceptions import EmptyMultiverse
from .model import Assignment
from .template import SpecSummary


@dataclass(frozen=True)
class CoverInput:
    universes: tuple[tuple[int, Assignment], ...]
    option_catalog: frozenset[tuple[str, str]]

    @classmethod
    def from_summary(cls, summary: SpecSummary) -> "CoverInput":
        universes = tuple(
            (i, summary.assignment(i)) for i in range(1, len(summary) + 1)
        )
        catalog = frozenset(
            (dec, opt) for _, a in universes for dec, opt in a
        )
        return cls(universes=universes, option_catalog=catalog)


@dataclass(frozen=True)
class CoverResult:
    selected: tuple[int, ...]
    covered: frozenset[tuple[str, str]]
    seed: int
    reduction: float


def compute_cover(inp: CoverInput, seed: int) -> CoverResult:
    """Select universes until every option in the catalog is covered.

    Raises EmptyMultiverse when there is nothing to select from.
    """
    if not inp.universes:
        raise EmptyMultiverse("no universes to cover")
    options_of = {idx: frozenset(dict(a).items()) for idx, a in inp.universes}
    reachable = frozenset().union(*options_of.values()) if options_of else frozenset()
    if not inp.option_catalog <= reachable:
        missing = sorted(inp.option_catalog - reachable)
        raise ValueError(f"catalog lists options no universe contains: {missing}")

    rng = random.Random(seed)
    uncovered = set(inp.option_catalog)
    order = [idx for idx, _ in inp.universes]
    selected: list[int] = []
    while uncovered:
        # Prefer universes disjoint from everything covered so far; fall
        # back to any universe that still adds coverage.
        candidates = [idx for idx in order if options_of[idx] <= uncovered]
        if not candidates:
            candidates = [idx for idx in order if options_of[idx] & uncovered]
        pick = rng.choice(candidates)
        selected.append(pick)
        uncovered -= options_of[pick]
    return CoverResult(
        selected=tuple(selected),
        covered=frozenset(inp.option_catalog),
        seed=seed,
        reduction=1.0 - len(selected) / len(inp.universes),
    )


def cover_stats(result: CoverResult, total: int) -> dict:
    if total < len(result.selected):
        raise ValueError("total smaller than selection")
    selected_count = len(result.selected)
    return {
        "selected_count": selected_count,
        "total": total,
        "reduction_percent": round(100.0 * (1.0 - selected_count / total), 2),
    }
