import random
import shutil
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import polytile as P
from polytile import codegen, oracle, randomsuite, transform
from polytile.codegen import EmitOptions, ast_order, emit_c, generate_loop_ast, run_ast
from polytile.polyhedron import AffineExpr, Constraint, Domain, ceild, enumerate_points, floord
from polytile.transform import build_program

GCC = shutil.which("gcc")
needs_gcc = pytest.mark.skipif(GCC is None, reason="gcc not available")


def test_strip_mined_range_bounds():
    p = build_program(Domain.box({"i": (0, 99)}), tile_sizes={"i": 8})
    ast = generate_loop_ast(p)
    assert ast.loop_order == ("ii", "i")
    assert ast.loops[0].lower.to_c(["ii", "i"]) == "0"
    assert ast.loops[0].upper.to_c(["ii", "i"]) == "12"
    assert ast.loops[1].lower.to_c(["ii", "i"]) == "max(0,8*ii)"
    assert ast.loops[1].upper.to_c(["ii", "i"]) == "min(99,8*ii+7)"
    assert ast_order(ast, {}) == [(i,) for i in range(100)]


def test_parametric_tile_loop_uses_floord():
    d = Domain.box({"i": (0, AffineExpr.var("N") - 1)}, ("N",))
    ast = generate_loop_ast(build_program(d, tile_sizes={"i": 8}))
    assert ast.loops[0].upper.to_c(["ii", "i", "N"]) == "floord(N-1,8)"
    for n in (1, 8, 9, 100):
        assert ast_order(ast, {"N": n}) == [(i,) for i in range(n)]


def test_single_point_loop():
    ast = generate_loop_ast(Domain.box({"i": (0, 0)}))
    assert len(ast.loops) == 1 and run_ast(ast, {}) == [(0,)]
    assert "for (int i=0; i<=0; i++)" in emit_c(ast)


def test_untransformed_awe_nest():
    spec = P.load_spec("awe_so8.stencil")
    ast = generate_loop_ast(transform.time_tile(spec, transform.TileConfig(skew_factors={"x": 0, "y": 0, "z": 0})),
                            spec)
    text = emit_c(ast)
    assert ast.loop_order == ("time", "x", "y", "z")
    assert "for (int time=1; time<=time_size-2; time++)" in text
    assert "for (int x=4; x<=x_size-5; x++)" in text
    assert "skew" not in text
    assert "#pragma" not in text


def test_plain_options_emit_no_pragmas():
    ast = generate_loop_ast(build_program(Domain.box({"i": (0, 3), "j": (0, 3)})))
    text = emit_c(ast)
    assert "#pragma" not in text and "#define" not in text and "S1(i,j);" in text


def test_compilable_wrapper_includes_exact_macros():
    ast = generate_loop_ast(build_program(Domain.box({"i": (0, 9)}), tile_sizes={"i": 4}))
    text = emit_c(ast, EmitOptions(compilable_wrapper=True))
    assert codegen.MACROS in text
    assert "#define S1(i) (++count)" in text


def test_awe_emission_matches_the_hand_written_structure():
    spec = P.load_spec("awe_so8.stencil")
    p = transform.time_tile(spec, transform.TileConfig({"x": 16, "y": 16}, time_tile_size=8))
    text = emit_c(generate_loop_ast(p, spec), EmitOptions(omp=True, simd=True, denormals=True))
    lines = [s.strip() for s in text.splitlines()]
    loops = [s.split("=")[0].replace("for (int ", "") for s in lines if s.startswith("for (int ")]
    assert loops == ["tt", "xx", "yy", "time", "x", "y", "z"]
    assert "int skew = 4*time; // Skewing factor" in lines
    assert "x=max(4*time+4,16*xx)" in text
    assert "u[t0][x-skew][y-skew][z-skew] =" in lines
    assert any("u[t1][x-skew - 4][y-skew][z-skew]" in s for s in lines)
    assert lines.index("#pragma omp simd") == lines.index("#pragma ivdep") + 1
    assert "_MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);" in lines


def test_emission_is_deterministic():
    spec = P.load_spec("awe_so8_buffered.stencil")
    cfg = transform.TileConfig({"x": 4, "y": 4}, time_tile_size=8)
    opts = EmitOptions(omp=True, simd=True, compilable_wrapper=True)
    a = emit_c(generate_loop_ast(transform.time_tile(spec, cfg), spec), opts)
    b = emit_c(generate_loop_ast(transform.time_tile(spec, cfg), spec), opts)
    assert a == b


def test_buffered_time_indices_stay_non_negative():
    spec = P.load_spec("awe_so8_buffered.stencil")
    p = transform.time_tile(spec, transform.TileConfig({"x": 4, "y": 4}, time_tile_size=8))
    text = emit_c(generate_loop_ast(p, spec))
    assert "int t0 = (time) % 8;" in text
    assert "int t1 = (time-1) % 8;" in text
    assert "int t2 = (time+6) % 8;" in text


@given(st.integers(-50, 50), st.integers(1, 9))
def test_macro_semantics_match_floor_and_ceiling(n, d):
    # the C macros, transcribed with truncating division, agree with floord/ceild
    trunc = lambda a, b: int(a / b)
    c_floord = -trunc(-n + d - 1, d) if n < 0 else trunc(n, d)
    c_ceild = -trunc(-n, d) if n < 0 else trunc(n + d - 1, d)
    assert c_floord == floord(n, d) and c_ceild == ceild(n, d)


@settings(max_examples=60)
@given(st.integers(0, 10_000))
def test_generated_loops_visit_the_oracle_order(seed):
    inst = randomsuite.random_instance(random.Random(seed))
    ast = generate_loop_ast(inst.program)
    assert ast_order(ast, {}) == oracle.execution_order(inst.program, {}).points


def test_parallel_loop_is_dependence_free():
    spec = P.load_spec("awe_so8.stencil")
    p = transform.time_tile(spec, transform.TileConfig({"x": 8, "y": 8}, time_tile_size=4))
    ast = generate_loop_ast(p, spec)
    assert ast.loop("x").role == "parallel"
    assert codegen.parallel_loop_is_safe(p, "x")
    assert not codegen.parallel_loop_is_safe(p, "time")


def test_unbounded_loop_is_an_error():
    d = Domain(("i",), (), (Constraint.ge(AffineExpr.var("i")),))
    with pytest.raises(codegen.CodegenError):
        generate_loop_ast(d)


# ---------------------------------------------------------------------------
# compiled output


def _compile(tmp_path, source, name):
    c = tmp_path / f"{name}.c"
    exe = tmp_path / name
    c.write_text(source)
    r = subprocess.run([GCC, "-O2", "-std=gnu99", "-fopenmp", "-ffp-contract=off", "-o", str(exe), str(c)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    return exe


@needs_gcc
def test_compiled_basic_loop_counts_its_points(tmp_path):
    prob = P.parse_cloog_input(P.data_path("basic_loop.cloog").read_text())
    src = emit_c(generate_loop_ast(P.to_program(prob, 0)), EmitOptions(compilable_wrapper=True))
    src += '#include <stdio.h>\nint main(void) { printf("%ld\\n", kernel()); return 0; }\n'
    exe = _compile(tmp_path, src, "basic")
    out = subprocess.run([str(exe)], capture_output=True, text=True, check=True).stdout
    assert int(out) == len(enumerate_points(P.to_domain(prob, 0), {})) == 88


DRIVER = """
#include <stdio.h>
#include <stdlib.h>
int main(int argc, char **argv) {
  int ts = atoi(argv[3]), xs = atoi(argv[4]), ys = atoi(argv[5]), zs = atoi(argv[6]), b = atoi(argv[7]);
  size_t n = (size_t)b * xs * ys * zs;
  float *u = malloc(n * sizeof(float));
  FILE *f = fopen(argv[1], "rb");
  if (fread(u, sizeof(float), n, f) != n) return 2;
  fclose(f);
  kernel(ts, xs, ys, zs, (float (*)[xs][ys][zs])u);
  f = fopen(argv[2], "wb");
  fwrite(u, sizeof(float), n, f);
  fclose(f);
  return 0;
}
"""


@needs_gcc
def test_compiled_time_tiled_kernel_is_bitwise_equal_to_the_interpreter(tmp_path):
    spec = P.load_spec("awe_so8_buffered.stencil")
    params = dict(time_size=10, x_size=24, y_size=24, z_size=24)
    p = transform.time_tile(spec, transform.TileConfig({"x": 4, "y": 4}, time_tile_size=8))
    src = emit_c(generate_loop_ast(p, spec), EmitOptions(omp=True, simd=True, compilable_wrapper=True))
    exe = _compile(tmp_path, src + DRIVER, "awe")
    init = oracle.initial_grid(spec, params)
    init.astype("<f4").tofile(tmp_path / "in.bin")
    args = [str(params[k]) for k in ("time_size", "x_size", "y_size", "z_size")] + [str(spec.time_buffer)]
    subprocess.run([str(exe), str(tmp_path / "in.bin"), str(tmp_path / "out.bin"), *args], check=True,
                   env={"OMP_NUM_THREADS": "4"})
    got = np.fromfile(tmp_path / "out.bin", dtype="<f4").reshape(init.shape)
    want = oracle.interpret(spec, oracle.execution_order(p.original, params), init, params)
    assert np.count_nonzero(got != init) > 0
    assert np.array_equal(got.view(np.uint32), want.view(np.uint32))
