"""Command-line driver.

Exit codes: 0 success, 1 verification failure, 2 invalid configuration,
3 parse error.  Results go to stdout (or ``-o``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cloog, codegen, legality, oracle, perf, stencil, transform

OK, FAILED, INVALID, PARSE_ERROR = 0, 1, 2, 3


class _Usage(Exception):
    pass


def _pairs(text: str | None, what: str) -> dict[str, int]:
    out: dict[str, int] = {}
    if not text:
        return out
    for item in text.split(","):
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise _Usage(f"{what}: expected name=value, got {item!r}")
        try:
            out[name.strip()] = int(value)
        except ValueError:
            raise _Usage(f"{what}: {value!r} is not an integer") from None
    return out


def _load_spec(path: str) -> stencil.StencilSpec:
    return stencil.parse_stencil_spec(Path(path).read_text())


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> transform.TileConfig:
    return transform.TileConfig(
        spatial_tile_sizes=_pairs(args.tile, "--tile"),
        time_tile_size=args.time_tile,
        skew_factors=_pairs(args.skew, "--skew") or None)


def cmd_analyze(args) -> int:
    spec = _load_spec(args.spec)
    deps = [tuple(d) for d in stencil.extract_dependences(spec)]
    if not deps:
        print("0 dependences; tiling trivially legal")
        return OK
    print(f"{len(deps)} dependences:")
    for d in deps:
        print(f"  {stencil.DependenceVector(d)}")
    ext = stencil.extreme_dependences(stencil.extract_dependences(spec))
    print(f"extreme vectors ({len(ext)}):")
    for d in ext:
        print(f"  {d}")
    idx = list(range(1, len(spec.dims)))
    factors = legality.compute_skew_factors(deps, idx)
    nonzero = [f"{spec.dims[k]}={f}" for k, f in factors.items() if f]
    print("skew: " + (" ".join(nonzero) if nonzero else "none needed"))
    skewed = legality.skew_dependences(deps, factors)
    tileable = [k for k in idx if spec.dims[k] != spec.vectorized]
    bands = [[0, k] for k in idx] + ([[0] + tileable] if len(tileable) > 1 else [])
    print("tiling bands (time plus listed dims):")
    for band in bands:
        names = ",".join(spec.dims[k] for k in band)
        raw = legality.check_tiling_band(deps, band)
        sk = legality.check_tiling_band(skewed, band)
        print(f"  {{{names}}}: unskewed {'legal' if raw else 'illegal'}, skewed {'legal' if sk else 'illegal'}")
    return OK


def _program(spec, args, check: bool):
    return transform.time_tile(spec, _config(args), check=check)


def cmd_codegen(args) -> int:
    spec = _load_spec(args.spec)
    p = _program(spec, args, check=True)
    ast = codegen.generate_loop_ast(p, spec)
    opts = codegen.EmitOptions(omp=args.omp, simd=args.simd, denormals=args.denormals,
                               compilable_wrapper=args.compilable)
    _write(codegen.emit_c(ast, opts), args.output)
    print(f"loop order: {' '.join(ast.loop_order)}", file=sys.stderr)
    return OK


def cmd_verify(args) -> int:
    spec = _load_spec(args.spec)
    params = _pairs(args.params, "--params")
    missing = [q for q in spec.params if q not in params]
    if missing:
        raise _Usage(f"--params must bind {', '.join(missing)}")
    p = _program(spec, args, check=False)
    report = oracle.verify(spec, p, params, numeric=True)
    print(f"loop order: {' '.join(p.loop_order)}")
    print(f"points: {len(oracle.execution_order(p.original, params))}")
    print(report.summary())
    ok = report.legal and bool(report.numeric_equal)
    if report.violations:
        d, src, snk = report.violations[0]
        print(f"first violation: dependence {stencil.DependenceVector(d)} from {src} to {snk} "
              "(sink runs before source)")
    if report.missing or report.extra:
        print(f"missing: {report.missing[:5]} extra: {report.extra[:5]}")
    if args.reference and ok:
        ref = oracle.read_grid(args.reference)
        out = oracle.interpret(spec, oracle.execution_order(p, params), oracle.initial_grid(spec, params), params)
        if ref.shape != out.shape:
            print(f"reference shape {ref.shape} differs from {out.shape}")
            ok = False
        else:
            err = float(np.max(np.abs(ref.astype(np.float64) - out))) if out.size else 0.0
            within = err <= args.atol
            print(f"reference max abs difference {err:.3g} ({'within' if within else 'exceeds'} atol {args.atol:g})")
            ok = ok and within
    if args.write_grid and report.is_permutation:
        out = oracle.interpret(spec, oracle.execution_order(p, params), oracle.initial_grid(spec, params), params)
        oracle.write_grid(args.write_grid, out)
    return OK if ok else FAILED


def cmd_roofline(args) -> int:
    m = perf.MachineModel(args.bw, args.flops_per_cycle, args.clock)
    if args.published:
        rows = list(perf.PUBLISHED_ROWS)
    else:
        if args.ai is None or args.traffic is None:
            raise _Usage("--ai and --traffic are required (or use --published)")
        rows = [perf.StencilPerf(args.ai, args.traffic, args.actual_gflops, args.actual_runtime, name="input")]
    recs = perf.report_rows(rows, m)
    print(f"machine peak: {perf.machine_peak_gflops(m):g} GFLOPS, bandwidth {m.bandwidth:g} GB/s")
    sys.stdout.write(perf.format_table(recs))
    sys.stdout.write(perf.format_keyvalue(recs))
    return OK


def cmd_cloog_roundtrip(args) -> int:
    text = Path(args.file).read_text()
    prob = cloog.parse_cloog_input(text)
    out = cloog.write_cloog_input(prob)
    if args.output:
        Path(args.output).write_text(out)
    a, b = cloog.tokens(text), cloog.tokens(out)
    if a == b:
        print(f"{args.file}: identical modulo comments ({len(a)} tokens)")
        return OK
    k = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
    print(f"{args.file}: token {k} differs: {a[k:k + 5]} vs {b[k:k + 5]}")
    return FAILED


def cmd_cloog_codegen(args) -> int:
    prob = cloog.parse_cloog_input(Path(args.file).read_text())
    if not prob.statements:
        raise _Usage("the file has no statements")
    p = cloog.to_program(prob, 0)
    ast = codegen.generate_loop_ast(p)
    opts = codegen.EmitOptions(compilable_wrapper=args.compilable)
    _write(codegen.emit_c(ast, opts), args.output)
    return OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="polytile", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="dependence vectors, skew factors and band legality")
    a.add_argument("spec")
    a.set_defaults(func=cmd_analyze)

    def tiling(p):
        p.add_argument("spec")
        p.add_argument("--tile", help="spatial tile sizes, e.g. x=16,y=16")
        p.add_argument("--time-tile", type=int, dest="time_tile")
        p.add_argument("--skew", help="override skew factors, e.g. x=0")

    c = sub.add_parser("codegen", help="emit the tiled loop nest as C")
    tiling(c)
    c.add_argument("--omp", action="store_true")
    c.add_argument("--simd", action="store_true")
    c.add_argument("--denormals", action="store_true")
    c.add_argument("--compilable", action="store_true")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_codegen)

    v = sub.add_parser("verify", help="check a tiling with the brute-force oracle")
    tiling(v)
    v.add_argument("--params", required=True, help="parameter values, e.g. time_size=10,x_size=24")
    v.add_argument("--reference", help="grid file to compare the final array against")
    v.add_argument("--atol", type=float, default=1e-6)
    v.add_argument("--write-grid", dest="write_grid", help="write the final array to this grid file")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("roofline", help="roofline bounds and comparison with measurements")
    r.add_argument("--ai", type=float)
    r.add_argument("--traffic", type=float, help="memory traffic in GB")
    r.add_argument("--bw", type=float, default=perf.PUBLISHED_MACHINE.bandwidth, help="bandwidth in GB/s")
    r.add_argument("--flops-per-cycle", type=float, default=perf.PUBLISHED_MACHINE.flops_per_cycle,
                   dest="flops_per_cycle")
    r.add_argument("--clock", type=float, default=perf.PUBLISHED_MACHINE.clock, help="GHz")
    r.add_argument("--actual-gflops", type=float, dest="actual_gflops")
    r.add_argument("--actual-runtime", type=float, dest="actual_runtime")
    r.add_argument("--published", action="store_true", help="report the three published stencil rows")
    r.set_defaults(func=cmd_roofline)

    rt = sub.add_parser("cloog-roundtrip", help="parse and re-emit a .cloog file")
    rt.add_argument("file")
    rt.add_argument("-o", "--output")
    rt.set_defaults(func=cmd_cloog_roundtrip)

    cg = sub.add_parser("cloog-codegen", help="generate loops for a .cloog file with a permutation scattering")
    cg.add_argument("file")
    cg.add_argument("--compilable", action="store_true")
    cg.add_argument("-o", "--output")
    cg.set_defaults(func=cmd_cloog_codegen)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (stencil.SpecError, cloog.CloogParseError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return PARSE_ERROR
    except (transform.TransformError, cloog.UnsupportedScatteringError, perf.PerfModelError,
            legality.LegalityError, codegen.CodegenError, oracle.OracleError, _Usage) as e:
        print(f"error: {e}", file=sys.stderr)
        return INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
