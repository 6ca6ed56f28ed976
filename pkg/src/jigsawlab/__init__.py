"""jigsawlab: irregular-fragment jigsaw datasets, baselines, and a flow solver.

The pipeline runs image -> masks -> puzzles -> compatibility -> solvers ->
metrics, with a CLI wrapping each stage. Everything stochastic takes an
explicit seeded generator.
"""

from . import cli, compat, ingest, masks, metrics, puzzlegen, raster, shapestats, solvers

__version__ = "0.1.0"

__all__ = [
    "cli",
    "compat",
    "ingest",
    "masks",
    "metrics",
    "puzzlegen",
    "raster",
    "shapestats",
    "solvers",
    "__version__",
]
