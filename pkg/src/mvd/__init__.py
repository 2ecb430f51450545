"""Multiverse debugging toolchain.

Compile a decision-annotated script template into every admissible
universe, run them, group the failures by error message, attribute error
groups back to decision options, and fold edits made to a single universe
back into the template.
"""

__version__ = "0.1.0"

from .aggregate import aggregate_errors
from .cover import CoverInput, CoverResult, compute_cover
from .propagate import DiffSession, load_universe, propagate, save_template
from .runner import RunSelection, run
from .service import ServiceConfig, create_app, serve
from .template import (
    MultiverseSpec,
    Universe,
    compile,
    enumerate_assignments,
    parse_template,
    render_universe,
)

__all__ = [
    "__version__",
    "aggregate_errors",
    "CoverInput",
    "CoverResult",
    "compute_cover",
    "DiffSession",
    "load_universe",
    "propagate",
    "save_template",
    "RunSelection",
    "run",
    "ServiceConfig",
    "create_app",
    "serve",
    "MultiverseSpec",
    "Universe",
    "compile",
    "enumerate_assignments",
    "parse_template",
    "render_universe",
]
