"""Polyhedral tiling of uniform-dependence stencils with a brute-force oracle."""

from importlib.resources import files

from .cloog import CloogProblem, from_transformed, parse_cloog_input, to_domain, to_program, write_cloog_input
from .codegen import EmitOptions, LoopAst, emit_c, generate_loop_ast, run_ast
from .legality import (check_schedule_legality, check_tiled_order, check_tiling_band, compute_skew_factors,
                       is_lex_positive)
from .oracle import execution_order, interpret, reuse_distance, verify
from .perf import (MachineModel, StencilPerf, compare_to_peak, machine_peak_gflops, min_runtime_s,
                   stencil_peak_gflops)
from .polyhedron import (AffineExpr, Constraint, Domain, bounds_for, ceild, enumerate_points, floord,
                         parse_affine, project_eliminate)
from .stencil import DependenceVector, StencilSpec, extract_dependences, parse_stencil_spec
from .transform import Schedule, TileConfig, TransformedProgram, interchange, skew, strip_mine, tile, time_tile

__version__ = "0.1.0"


def data_path(name: str):
    """Path of a bundled example file (``awe_so8.stencil``, ``basic_loop.cloog``, ...)."""
    return files(__name__) / "data" / name


def load_spec(name: str) -> StencilSpec:
    return parse_stencil_spec(data_path(name).read_text())
