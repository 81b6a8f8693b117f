import pytest

import polytile as P
from polytile.cli import main

DATA = {name: str(P.data_path(name)) for name in ("awe_so8.stencil", "awe_so8_buffered.stencil", "toy_1d.stencil",
                                                  "basic_loop.cloog", "awe_tile16.cloog")}


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_analyze_awe(capsys):
    code, out, _ = run(capsys, "analyze", DATA["awe_so8.stencil"])
    assert code == 0
    assert out.startswith("26 dependences:")
    assert "extreme vectors (6):" in out
    for d in ("(1, -4, 0, 0)", "(1, 0, 0, 4)", "(1, 4, 0, 0)"):
        assert f"  {d}\n" in out
    assert "skew: x=4 y=4 z=4\n" in out
    assert "{time,x,y}: unskewed illegal, skewed legal" in out


def test_analyze_without_reads(capsys, tmp_path):
    spec = write(tmp_path, "copy.stencil", "dims: t, x\nbounds: t in [0, 3]; x in [0, 3]\n")
    assert run(capsys, "analyze", spec)[:2] == (0, "0 dependences; tiling trivially legal\n")


def test_analyze_reports_the_needed_skew(capsys, tmp_path):
    spec = write(tmp_path, "steep.stencil", "dims: t, x\nbounds: t in [2, 9]; x in [0, 20]\nreads: (-2, 3)\n")
    code, out, _ = run(capsys, "analyze", spec)
    assert code == 0 and "skew: x=2\n" in out


def test_codegen_writes_the_time_tiled_nest(capsys, tmp_path):
    target = tmp_path / "out.c"
    code, _, err = run(capsys, "codegen", DATA["awe_so8.stencil"], "--tile", "x=16,y=16", "--time-tile", "8",
                       "--omp", "--simd", "--denormals", "--compilable", "-o", str(target))
    assert code == 0 and "loop order: tt xx yy time x y z" in err
    text = target.read_text()
    heads = [s.strip().split("=")[0][len("for (int "):] for s in text.splitlines() if s.strip().startswith("for (int ")]
    assert heads == ["tt", "xx", "yy", "time", "x", "y", "z"]
    assert "#pragma omp for schedule(static)" in text


def test_codegen_refuses_a_time_tile_beyond_the_buffer(capsys):
    code, out, err = run(capsys, "codegen", DATA["awe_so8_buffered.stencil"], "--tile", "x=16,y=16",
                         "--time-tile", "9")
    assert code == 2 and out == "" and "buffer" in err


def test_codegen_spatial_tiles_only(capsys):
    code, _, err = run(capsys, "codegen", DATA["awe_so8.stencil"], "--tile", "x=16,y=16")
    assert code == 0 and "loop order: xx yy time x y z" in err


def test_codegen_refuses_an_illegal_skew(capsys):
    code, _, err = run(capsys, "codegen", DATA["toy_1d.stencil"], "--tile", "x=3", "--time-tile", "3",
                       "--skew", "x=0")
    assert code == 2 and "(1, -1)" in err


def test_verify_legal_tiling(capsys):
    code, out, _ = run(capsys, "verify", DATA["toy_1d.stencil"], "--tile", "x=3", "--time-tile", "3",
                       "--params", "T=9,N=5")
    assert code == 0 and "0 violations; bitwise equal" in out


def test_verify_unskewed_tiling_fails(capsys):
    code, out, _ = run(capsys, "verify", DATA["toy_1d.stencil"], "--tile", "x=3", "--time-tile", "3",
                       "--skew", "x=0", "--params", "T=9,N=5")
    assert code == 1
    assert "first violation: dependence (1, -1) from (0, 3) to (1, 2)" in out


def test_verify_identity(capsys):
    code, out, _ = run(capsys, "verify", DATA["toy_1d.stencil"], "--params", "T=4,N=6")
    assert code == 0 and "loop order: t x" in out and "points: 24" in out


def test_verify_against_a_reference_grid(capsys, tmp_path):
    grid = str(tmp_path / "ref.bin")
    base = ["verify", DATA["toy_1d.stencil"], "--params", "T=6,N=8"]
    assert run(capsys, *base, "--write-grid", grid)[0] == 0
    code, out, _ = run(capsys, *base, "--tile", "x=4", "--time-tile", "2", "--reference", grid, "--atol", "0")
    assert code == 0 and "max abs difference 0 (within atol 0)" in out


def test_verify_needs_every_parameter(capsys):
    code, _, err = run(capsys, "verify", DATA["toy_1d.stencil"], "--params", "T=4")
    assert code == 2 and "N" in err


def test_roofline_published_rows(capsys):
    code, out, _ = run(capsys, "roofline", "--published")
    assert code == 0 and out.startswith("machine peak: 128 GFLOPS")
    kv = dict(line.split("=", 1) for line in out.splitlines() if line.startswith("row"))
    assert float(kv["row1.peak_gflops"]) == pytest.approx(32.61, abs=0.01)
    assert float(kv["row1.min_runtime_s"]) == pytest.approx(0.732, abs=0.001)
    assert float(kv["row3.runtime_change_pct"]) == pytest.approx(-19.60, rel=0.005)


def test_roofline_zero_traffic(capsys):
    code, out, _ = run(capsys, "roofline", "--ai", "2.15", "--traffic", "0")
    assert code == 0 and "row1.min_runtime_s=0.0\n" in out


def test_roofline_needs_inputs(capsys):
    assert run(capsys, "roofline", "--ai", "2.15")[0] == 2
    assert run(capsys, "roofline", "--ai", "2.15", "--traffic", "1", "--bw", "0")[0] == 2


@pytest.mark.parametrize("name", ["basic_loop.cloog", "awe_tile16.cloog"])
def test_cloog_round_trip(capsys, name):
    code, out, _ = run(capsys, "cloog-roundtrip", DATA[name])
    assert code == 0 and "identical modulo comments" in out


def test_empty_cloog_file_round_trips(capsys, tmp_path):
    path = write(tmp_path, "empty.cloog", "# nothing to scan\nc\n0 2\n0\n0\n")
    assert run(capsys, "cloog-roundtrip", path)[0] == 0


def test_cloog_codegen(capsys):
    code, out, _ = run(capsys, "cloog-codegen", DATA["basic_loop.cloog"])
    assert code == 0 and "S1(i,j);" in out


def test_parse_errors_exit_with_three(capsys, tmp_path):
    spec = write(tmp_path, "bad.stencil", "dims: t, x\nbounds: t in [0, 3]; x in [0\n")
    code, _, err = run(capsys, "analyze", spec)
    assert code == 3 and err.startswith("parse error:")
    cl = write(tmp_path, "bad.cloog", "c\n0 2\n0\n1\n1 3\n1 x 0\n")
    assert run(capsys, "cloog-roundtrip", cl)[0] == 3


def test_missing_file_is_an_invalid_configuration(capsys, tmp_path):
    assert run(capsys, "analyze", str(tmp_path / "nope.stencil"))[0] == 2


def test_commands_are_deterministic(capsys):
    argv = ["codegen", DATA["awe_so8_buffered.stencil"], "--tile", "x=4,y=4", "--time-tile", "8", "--omp"]
    assert run(capsys, *argv) == run(capsys, *argv)
    argv = ["verify", DATA["toy_1d.stencil"], "--tile", "x=2", "--time-tile", "2", "--params", "T=5,N=6"]
    assert run(capsys, *argv) == run(capsys, *argv)
