"""hsdtile: hybrid static/dynamic schedules for tiled polyhedral programs.

Library plus CLI for: exact affine/polyhedral algebra, PRDG parsing and
uniform-dependence tiling, schedule legality and deadlock checks, residual
dependence construction, tile-program instrumentation, an embedded
self-scheduling multi-worker runtime with wavefront and sequential baselines,
benchmark kernels, and C-source emission of the synchronization templates.
"""

__version__ = "0.1.0"

from .instrument import acquire_obligations, build_tile_program, compile_program
from .prdg import parse_prdg, parse_prdg_file, serialize_prdg, validate_prdg
from .residual import coverage_check, reindex_residual, residualize
from .runtime import RunOptions, run_hsd, run_sequential, run_wavefront
from .schedule import (
    check_deadlock_freedom,
    check_partial_legality,
    parse_schedule,
    parse_schedule_file,
    reindex_to_spacetime,
)
from .tiling import tile_uniform
from .trace import verify_trace

__all__ = [
    "__version__",
    "acquire_obligations",
    "build_tile_program",
    "check_deadlock_freedom",
    "check_partial_legality",
    "compile_program",
    "coverage_check",
    "parse_prdg",
    "parse_prdg_file",
    "parse_schedule",
    "parse_schedule_file",
    "reindex_residual",
    "reindex_to_spacetime",
    "residualize",
    "RunOptions",
    "run_hsd",
    "run_sequential",
    "run_wavefront",
    "serialize_prdg",
    "tile_uniform",
    "validate_prdg",
    "verify_trace",
]
